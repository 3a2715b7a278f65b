"""End-to-end evaluation runs over capture bundles.

Per-frame evaluation is pure: a frame capture plus its annotation produce a
MetricRow independently of every other frame, so frames may be scored in
parallel. Results are reduced in manifest order with integer-count metrics,
which makes reports byte-identical regardless of worker count. Frames
without a usable annotation are excluded from metric rows but still counted
in the per-video totals.

The triplet task is a two-pass protocol: pass 1 scores triplet predictions
and emits a worklist of IV-correct frames; an exporter turns the worklist
into a verb_reprompt bundle; pass 2 scores ARS from that bundle. The pass-2
frame set must equal the IV-correct set exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import FrameAnnotation, TripletLabel, load_annotations
from .bundle_io import FrameCapture, RunBundle, load_bundle
from .cam import Heatmap, gradcam_conv, rollout_transformer
from .errors import GridMismatch, ShapeMismatch, TaskMismatch, WorklistMismatch
from .metrics import (
    MetricRow,
    VideoReport,
    aggregate_video,
    ars,
    f1_threshold_sweep,
    tau_ac,
    tau_aa,
    triplet_match,
)
from .metrics import FrameCounts
from .prompts import WorklistEntry, select_prediction, verb_reprompt
from .regions import Comparison, PixelRegion, rasterize_boxes, threshold_region

DEFAULT_TAU = 0.3
MERGED_VIDEO_ID = "ALL"


@dataclass
class EvalResult:
    """Outcome of one evaluation run: per-video reports plus the raw rows
    (manifest order) and, for triplet pass 1, the worklist."""

    reports: list[VideoReport]
    rows: list[MetricRow]
    worklist: list[WorklistEntry] = field(default_factory=list)


def infer_grid(frame: FrameCapture) -> tuple[int, int]:
    """Patch grid for a transformer frame: the manifest's patch_grid, or a
    square inferred from the token count."""
    if frame.patch_grid is not None:
        return frame.patch_grid
    n_patches = frame.attention_stack[0].shape[0] - 1
    side = math.isqrt(n_patches)
    if side * side != n_patches:
        raise GridMismatch(
            f"frame {frame.frame_id!r}: {n_patches} patch tokens are not square; "
            f"manifest needs an explicit patch_grid"
        )
    return (side, side)


def heatmap_for_frame(frame: FrameCapture, prompt_index: int) -> Heatmap:
    """Reconstruct the frame's heatmap from its capture tensors."""
    if frame.capture_kind == "conv":
        return gradcam_conv(
            frame.conv_activations.as_array(),
            frame.conv_gradients.as_array(),
            frame.image_size,
            frame_id=frame.frame_id,
            prompt_index=prompt_index,
        )
    return rollout_transformer(
        [record.as_array() for record in frame.attention_stack],
        [record.as_array() for record in frame.attention_gradients],
        infer_grid(frame),
        frame.image_size,
        frame_id=frame.frame_id,
        prompt_index=prompt_index,
    )


def _check_frame_size(frame: FrameCapture, annotation: FrameAnnotation) -> None:
    if frame.image_size != annotation.image_size:
        raise ShapeMismatch(
            f"frame {frame.frame_id!r}: capture size {frame.image_size} does not "
            f"match annotated size {annotation.image_size}"
        )


def _frame_video(frame: FrameCapture, bundle: RunBundle) -> str:
    if frame.video_id is not None:
        return frame.video_id
    if bundle.video_id is not None:
        return bundle.video_id
    return "all"


def _check_pool_labels(bundle: RunBundle, expected: type, task: str) -> None:
    for entry in bundle.prompt_pool.entries:
        if not isinstance(entry.label, expected):
            raise TaskMismatch(
                f"task {task!r} needs {expected.__name__} pool labels, "
                f"got {type(entry.label).__name__} for prompt {entry.prompt!r}"
            )


def _map_frames(frames, worker, workers: int):
    if workers <= 1 or len(frames) <= 1:
        return [worker(frame) for frame in frames]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, frames))


def evaluate_instrument_frame(
    frame: FrameCapture,
    annotation: FrameAnnotation | None,
    bundle: RunBundle,
    tau: float,
) -> MetricRow | None:
    """Score one instrument-task frame; None when the frame is excluded
    (no annotation, or no annotated classes at all)."""
    if annotation is None or not annotation.classes_present:
        return None
    _check_frame_size(frame, annotation)
    index = select_prediction(frame.similarity_scores, len(bundle.prompt_pool))
    predicted = bundle.prompt_pool.label(index)
    heatmap = heatmap_for_frame(frame, index)
    attention = threshold_region(heatmap, tau, Comparison.GEQ)
    g_all = rasterize_boxes(annotation.boxes, annotation.image_size)
    ac = tau_ac(attention, g_all)
    aa = tau_aa(attention, predicted, annotation)
    return MetricRow(
        frame_id=frame.frame_id,
        predicted_class=predicted,
        tau_ac=ac.value,
        tau_aa=aa.value,
        degenerate_attention=ac.degenerate,
    )


def evaluate_triplet_frame(
    frame: FrameCapture,
    annotation: FrameAnnotation | None,
    bundle: RunBundle,
) -> MetricRow | None:
    """Score one triplet-task frame's match flags; None when excluded
    (no annotation or no ground-truth triplet)."""
    if annotation is None or annotation.triplet is None:
        return None
    index = select_prediction(frame.similarity_scores, len(bundle.prompt_pool))
    predicted = bundle.prompt_pool.label(index)
    match = triplet_match(predicted, annotation.triplet)
    return MetricRow(
        frame_id=frame.frame_id,
        predicted_triplet=predicted,
        ivt=match.ivt,
        iv=match.iv,
        it=match.it,
    )


def _aggregate_or_counts(
    rows: list[MetricRow], total: int, video_id: str, task: str, tau: float
) -> VideoReport:
    if rows:
        return aggregate_video(rows, total, video_id=video_id, task=task, tau=tau)
    return VideoReport(
        video_id=video_id,
        task=task,
        tau=tau,
        counts=FrameCounts(total=total, evaluated=0, degenerate=0, ars_valid=0, ars_zero=0),
    )


def _group_reports(
    bundle: RunBundle,
    per_frame: list[tuple[str, MetricRow | None]],
    task: str,
    tau: float,
    merge: bool,
) -> tuple[list[VideoReport], list[MetricRow]]:
    """Fold (video_id, row) pairs, kept in manifest order, into per-video
    reports; optionally append a merged row recomputed from all frames."""
    totals: dict[str, int] = {}
    grouped: dict[str, list[MetricRow]] = {}
    all_rows: list[MetricRow] = []
    for video_id, row in per_frame:
        totals[video_id] = totals.get(video_id, 0) + 1
        grouped.setdefault(video_id, [])
        if row is not None:
            grouped[video_id].append(row)
            all_rows.append(row)
    if not totals:
        fallback = bundle.video_id if bundle.video_id is not None else "all"
        totals = {fallback: 0}
        grouped = {fallback: []}
    reports = [
        _aggregate_or_counts(grouped[video_id], totals[video_id], video_id, task, tau)
        for video_id in sorted(totals)
    ]
    if merge and len(totals) > 1:
        reports.append(
            _aggregate_or_counts(all_rows, sum(totals.values()), MERGED_VIDEO_ID, task, tau)
        )
    return reports, all_rows


def _attach_instrument_f1(
    reports: list[VideoReport],
    bundle: RunBundle,
    frame_info: list[tuple[str, FrameCapture, FrameAnnotation | None]],
) -> None:
    """Per-class threshold-swept F1 over each video's evaluated frames."""
    for report in reports:
        picked = [
            (frame, annotation)
            for video_id, frame, annotation in frame_info
            if annotation is not None
            and annotation.classes_present
            and (video_id == report.video_id or report.video_id == MERGED_VIDEO_ID)
        ]
        if not picked:
            continue
        sweeps = {}
        for index, entry in enumerate(bundle.prompt_pool.entries):
            scores = [frame.similarity_scores[index] for frame, _ in picked]
            labels = [int(entry.label in annotation.classes_present) for _, annotation in picked]
            sweeps[entry.label] = f1_threshold_sweep(scores, labels)
        report.f1_per_class = sweeps


def run_instrument_eval(
    bundle_path: str | Path,
    annotations_path: str | Path,
    tau: float = DEFAULT_TAU,
    workers: int = 1,
    merge: bool = False,
) -> EvalResult:
    """Instrument-classification grounding: tau-AC / tau-AA per frame plus
    per-class F1, aggregated per video."""
    bundle = load_bundle(bundle_path)
    if bundle.task != "instrument":
        raise TaskMismatch(f"expected an instrument bundle, got task {bundle.task!r}")
    _check_pool_labels(bundle, str, "instrument")
    annotations = load_annotations(annotations_path)

    def worker(frame: FrameCapture) -> MetricRow | None:
        return evaluate_instrument_frame(frame, annotations.get(frame.frame_id), bundle, tau)

    rows = _map_frames(bundle.frames, worker, workers)
    per_frame = [(_frame_video(f, bundle), row) for f, row in zip(bundle.frames, rows)]
    reports, all_rows = _group_reports(bundle, per_frame, "instrument", tau, merge)
    frame_info = [
        (_frame_video(f, bundle), f, annotations.get(f.frame_id)) for f in bundle.frames
    ]
    _attach_instrument_f1(reports, bundle, frame_info)
    return EvalResult(reports=reports, rows=all_rows)


def build_worklist(bundle: RunBundle, rows: list[MetricRow]) -> list[WorklistEntry]:
    """Pass-2 worklist: exactly the IV-correct frames, manifest order."""
    verbs = {entry.label.verb for entry in bundle.prompt_pool.entries}
    by_frame = {row.frame_id: row for row in rows}
    entries = []
    for frame in bundle.frames:
        row = by_frame.get(frame.frame_id)
        if row is None or row.iv != 1:
            continue
        entries.append(
            WorklistEntry(
                frame_id=frame.frame_id,
                verb_prompt=verb_reprompt(row.predicted_triplet, verbs),
                predicted_triplet=row.predicted_triplet,
            )
        )
    return entries


def _ars_for_frame(
    pass2_frame: FrameCapture,
    annotation: FrameAnnotation,
    tau: float,
):
    """ARS inputs for one IV-correct frame: pass-2 verb attention (strict >)
    against the ground-truth instrument's boxes."""
    _check_frame_size(pass2_frame, annotation)
    heatmap = heatmap_for_frame(pass2_frame, pass2_frame.target_prompt_index)
    attention = threshold_region(heatmap, tau, Comparison.GT)
    instrument = annotation.triplet.instrument
    boxes = annotation.boxes_for(instrument)
    region: PixelRegion | None = None
    if boxes:
        region = rasterize_boxes(boxes, annotation.image_size)
    return ars(attention, region, 1)


def run_triplet_eval(
    pass1_path: str | Path,
    pass2_path: str | Path | None,
    annotations_path: str | Path,
    tau: float = DEFAULT_TAU,
    workers: int = 1,
    merge: bool = False,
) -> EvalResult:
    """Triplet evaluation: IVT/IV/IT from pass 1; ARS, V/T, and Z/V when the
    pass-2 verb_reprompt bundle is supplied."""
    bundle = load_bundle(pass1_path)
    if bundle.task != "triplet":
        raise TaskMismatch(f"expected a triplet bundle, got task {bundle.task!r}")
    _check_pool_labels(bundle, TripletLabel, "triplet")
    annotations = load_annotations(annotations_path)

    def worker(frame: FrameCapture) -> MetricRow | None:
        return evaluate_triplet_frame(frame, annotations.get(frame.frame_id), bundle)

    rows = _map_frames(bundle.frames, worker, workers)
    row_by_frame = {
        frame.frame_id: row for frame, row in zip(bundle.frames, rows) if row is not None
    }
    worklist_entries = build_worklist(
        bundle, [row for row in rows if row is not None]
    )

    if pass2_path is not None:
        pass2 = load_bundle(pass2_path)
        if pass2.task != "verb_reprompt":
            raise TaskMismatch(f"expected a verb_reprompt bundle, got task {pass2.task!r}")
        expected_ids = [entry.frame_id for entry in worklist_entries]
        got_ids = [frame.frame_id for frame in pass2.frames]
        if sorted(expected_ids) != sorted(got_ids):
            missing = sorted(set(expected_ids) - set(got_ids))
            extra = sorted(set(got_ids) - set(expected_ids))
            raise WorklistMismatch(
                f"pass-2 frames disagree with the IV-correct set "
                f"(missing {missing}, unexpected {extra})"
            )
        pass2_by_id = {frame.frame_id: frame for frame in pass2.frames}

        def verb_worker(frame: FrameCapture) -> MetricRow | None:
            row = row_by_frame.get(frame.frame_id)
            if row is None:
                return None
            if row.iv == 1:
                score = _ars_for_frame(
                    pass2_by_id[frame.frame_id], annotations[frame.frame_id], tau
                )
                row.ars = score.value
                row.valid_for_ars = score.valid
                row.degenerate_attention = row.degenerate_attention or score.degenerate
            else:
                row.ars = 0.0
            return row

        _map_frames(bundle.frames, verb_worker, workers)

    per_frame = [(_frame_video(f, bundle), row) for f, row in zip(bundle.frames, rows)]
    reports, all_rows = _group_reports(bundle, per_frame, "triplet", tau, merge)
    return EvalResult(reports=reports, rows=all_rows, worklist=worklist_entries)
