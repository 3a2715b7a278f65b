"""Grounding metrics over attention regions and triplet predictions.

Per-frame metrics are ratios of integer pixel counts (tau-AC, tau-AA, ARS)
or 0/1 match flags (IVT, IV, IT); per-video aggregation produces means,
V/T and Z/V percentages, and a threshold-swept F1 per class. Degenerate
inputs (empty attention, no positive labels) return flagged zeros instead
of raising, so a broken capture shows up in the report rather than as a
crash.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .annotations import FrameAnnotation, TripletLabel
from .errors import EmptyInput, LengthMismatch, NonFiniteValue, SchemaViolation, ShapeMismatch
from .regions import PixelRegion, rasterize_boxes


@dataclass(frozen=True)
class RatioScore:
    """A pixel-count quotient in [0, 1]; degenerate marks an empty numerator
    region (|A| = 0), where the quotient is defined as 0."""

    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class ArsScore:
    """Action reasoning score for one frame.

    `value` is None when the frame is excluded from ARS aggregation
    (instrument boxes missing on a valid frame). `valid` is True only on
    IV-correct frames that were actually scored; Z/V counts zeros among
    those.
    """

    value: float | None
    degenerate: bool = False
    valid: bool = False


@dataclass(frozen=True)
class TripletMatch:
    """Binary match indicators: iv = instrument+verb, it = instrument+target,
    ivt = full triplet."""

    ivt: int
    iv: int
    it: int


@dataclass(frozen=True)
class F1Sweep:
    """Best threshold and F1 from the per-class sweep; degenerate when no
    positive labels exist to sweep against."""

    threshold: float
    f1: float
    degenerate: bool = False


@dataclass
class MetricRow:
    """Per-frame metric outputs; fields unused by the task stay None."""

    frame_id: str
    predicted_class: str | None = None
    predicted_triplet: TripletLabel | None = None
    tau_ac: float | None = None
    tau_aa: float | None = None
    ivt: int | None = None
    iv: int | None = None
    it: int | None = None
    ars: float | None = None
    degenerate_attention: bool = False
    valid_for_ars: bool = False


@dataclass
class FrameCounts:
    """Bookkeeping for one video: how many frames existed, were evaluated,
    hit a degenerate heatmap, and entered ARS aggregation."""

    total: int
    evaluated: int
    degenerate: int
    ars_valid: int
    ars_zero: int

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "evaluated": self.evaluated,
            "degenerate": self.degenerate,
            "ars_valid": self.ars_valid,
            "ars_zero": self.ars_zero,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FrameCounts":
        return cls(
            total=int(doc["total"]),
            evaluated=int(doc["evaluated"]),
            degenerate=int(doc["degenerate"]),
            ars_valid=int(doc["ars_valid"]),
            ars_zero=int(doc["ars_zero"]),
        )


@dataclass
class VideoReport:
    """Aggregated metrics for one video (or the merged "ALL" row)."""

    video_id: str
    task: str
    tau: float
    counts: FrameCounts
    mean_tau_ac: float | None = None
    mean_tau_aa: float | None = None
    vt_percent: float | None = None
    ars_mean_valid: float | None = None
    ars_mean_all: float | None = None
    zv_percent: float | None = None
    f1_per_class: dict[str, F1Sweep] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "task": self.task,
            "tau": self.tau,
            "counts": self.counts.as_dict(),
            "mean_tau_ac": self.mean_tau_ac,
            "mean_tau_aa": self.mean_tau_aa,
            "vt_percent": self.vt_percent,
            "ars_mean_valid": self.ars_mean_valid,
            "ars_mean_all": self.ars_mean_all,
            "zv_percent": self.zv_percent,
            "f1_per_class": {
                label: {
                    "threshold": sweep.threshold,
                    "f1": sweep.f1,
                    "degenerate": sweep.degenerate,
                }
                for label, sweep in self.f1_per_class.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "VideoReport":
        return cls(
            video_id=str(doc["video_id"]),
            task=str(doc["task"]),
            tau=float(doc["tau"]),
            counts=FrameCounts.from_dict(doc["counts"]),
            mean_tau_ac=doc.get("mean_tau_ac"),
            mean_tau_aa=doc.get("mean_tau_aa"),
            vt_percent=doc.get("vt_percent"),
            ars_mean_valid=doc.get("ars_mean_valid"),
            ars_mean_all=doc.get("ars_mean_all"),
            zv_percent=doc.get("zv_percent"),
            f1_per_class={
                label: F1Sweep(
                    threshold=float(entry["threshold"]),
                    f1=float(entry["f1"]),
                    degenerate=bool(entry["degenerate"]),
                )
                for label, entry in doc.get("f1_per_class", {}).items()
            },
        )


def tau_ac(attention: PixelRegion, g_all: PixelRegion) -> RatioScore:
    """Fraction of the attention region inside the union of all annotated
    boxes: |A ∩ G_all| / |A|; empty attention scores 0 with a flag."""
    if attention.shape != g_all.shape:
        raise ShapeMismatch(f"region shapes differ: {attention.shape} vs {g_all.shape}")
    area = attention.size
    if area == 0:
        return RatioScore(0.0, degenerate=True)
    return RatioScore(attention.intersection_count(g_all) / area)


def tau_aa(attention: PixelRegion, predicted_class: str, annotation: FrameAnnotation) -> RatioScore:
    """Fraction of the attention region inside the predicted class's boxes:
    |A ∩ G_c| / |A| when the prediction is present in the frame, else exactly
    0; empty attention scores 0 with a flag."""
    if attention.shape != annotation.image_size:
        raise ShapeMismatch(
            f"attention {attention.shape} does not match frame size {annotation.image_size}"
        )
    area = attention.size
    if area == 0:
        return RatioScore(0.0, degenerate=True)
    if predicted_class not in annotation.classes_present:
        return RatioScore(0.0)
    g_class = rasterize_boxes(annotation.boxes_for(predicted_class), annotation.image_size)
    return RatioScore(attention.intersection_count(g_class) / area)


def triplet_match(pred: TripletLabel, truth: TripletLabel) -> TripletMatch:
    """Componentwise match flags for a predicted vs ground-truth triplet."""
    s_ok = pred.instrument == truth.instrument
    iv = int(s_ok and pred.verb == truth.verb)
    it = int(s_ok and pred.target == truth.target)
    ivt = int(iv and it and s_ok)
    return TripletMatch(ivt=ivt, iv=iv, it=it)


def ars(
    verb_attention: PixelRegion, instrument_boxes: PixelRegion | None, iv_flag: int
) -> ArsScore:
    """Action reasoning score: |A_v ∩ B_s| / |A_v| on IV-correct frames.

    IV-incorrect frames score 0 and are not valid; IV-correct frames with no
    instrument boxes are excluded (value None); empty verb attention on a
    scored frame yields a flagged 0 that still counts toward Z/V.
    """
    if not iv_flag:
        return ArsScore(0.0)
    if instrument_boxes is None:
        return ArsScore(None)
    if verb_attention.shape != instrument_boxes.shape:
        raise ShapeMismatch(
            f"region shapes differ: {verb_attention.shape} vs {instrument_boxes.shape}"
        )
    area = verb_attention.size
    if area == 0:
        return ArsScore(0.0, degenerate=True, valid=True)
    return ArsScore(verb_attention.intersection_count(instrument_boxes) / area, valid=True)


def f1_threshold_sweep(scores, labels) -> F1Sweep:
    """Best F1 over all achievable decision thresholds for one class.

    Candidate thresholds are the midpoints between consecutive distinct
    sorted scores plus -inf and +inf sentinels; a frame is predicted positive
    when its score >= threshold. Ties in F1 keep the lowest threshold. With
    no positive labels F1 is undefined and (0, 0) is returned flagged.
    """
    scores_arr = np.asarray(list(scores), dtype=np.float64)
    labels_arr = np.asarray(list(labels), dtype=np.int64)
    if scores_arr.shape != labels_arr.shape or scores_arr.ndim != 1:
        raise LengthMismatch(
            f"scores shape {scores_arr.shape} does not match labels shape {labels_arr.shape}"
        )
    if scores_arr.size and not np.isfinite(scores_arr).all():
        raise NonFiniteValue("scores must be finite")
    if not np.isin(labels_arr, (0, 1)).all():
        raise SchemaViolation("labels must be 0 or 1")
    positives = int(labels_arr.sum())
    if positives == 0:
        return F1Sweep(threshold=0.0, f1=0.0, degenerate=True)

    distinct = np.unique(scores_arr)
    thresholds = [-math.inf]
    thresholds.extend(((distinct[:-1] + distinct[1:]) / 2.0).tolist())
    thresholds.append(math.inf)

    best_threshold = thresholds[0]
    best_f1 = -1.0
    is_positive = labels_arr == 1
    for threshold in thresholds:
        predicted = scores_arr >= threshold
        tp = int(np.count_nonzero(predicted & is_positive))
        fp = int(np.count_nonzero(predicted & ~is_positive))
        fn = positives - tp
        f1 = 2 * tp / (2 * tp + fp + fn)
        if f1 > best_f1:
            best_f1 = f1
            best_threshold = threshold
    return F1Sweep(threshold=best_threshold, f1=best_f1)


def _mean(values: list[float]) -> float | None:
    if not values:
        return None
    return math.fsum(values) / len(values)


def aggregate_video(
    rows: list[MetricRow],
    total_frames: int,
    video_id: str = "all",
    task: str = "",
    tau: float = 0.3,
) -> VideoReport:
    """Fold per-frame rows into one video's report.

    Means of tau-AC/tau-AA run over evaluated frames; V/T is the share of
    all frames with iv=1; mean ARS is reported both over valid frames and
    over every frame carrying an ARS value; Z/V is the share of valid frames
    whose ARS is exactly 0. Rows must arrive in a fixed (manifest) order so
    the float sums are reproducible.
    """
    if not rows:
        raise EmptyInput("no metric rows to aggregate")
    if total_frames < len(rows):
        raise LengthMismatch(
            f"total_frames={total_frames} is below the {len(rows)} evaluated rows"
        )

    tau_ac_values = [row.tau_ac for row in rows if row.tau_ac is not None]
    tau_aa_values = [row.tau_aa for row in rows if row.tau_aa is not None]
    iv_values = [row.iv for row in rows if row.iv is not None]
    ars_valid_values = [row.ars for row in rows if row.valid_for_ars and row.ars is not None]
    ars_all_values = [row.ars for row in rows if row.ars is not None]
    ars_zero = sum(1 for value in ars_valid_values if value == 0.0)

    counts = FrameCounts(
        total=total_frames,
        evaluated=len(rows),
        degenerate=sum(1 for row in rows if row.degenerate_attention),
        ars_valid=len(ars_valid_values),
        ars_zero=ars_zero,
    )

    vt_percent = None
    if iv_values:
        vt_percent = 100.0 * sum(iv_values) / total_frames
    zv_percent = None
    if counts.ars_valid:
        zv_percent = 100.0 * ars_zero / counts.ars_valid

    return VideoReport(
        video_id=video_id,
        task=task,
        tau=tau,
        counts=counts,
        mean_tau_ac=_mean(tau_ac_values),
        mean_tau_aa=_mean(tau_aa_values),
        vt_percent=vt_percent,
        ars_mean_valid=_mean(ars_valid_values),
        ars_mean_all=_mean(ars_all_values),
        zv_percent=zv_percent,
    )
