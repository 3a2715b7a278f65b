"""Builders for small synthetic bundles and annotations used across tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from camground.annotations import TripletLabel
from camground.bundle_io import FrameCapture, RunBundle, TensorRecord
from camground.prompts import PromptEntry, PromptPool


def instrument_pool(classes=("grasper", "hook")) -> PromptPool:
    return PromptPool(
        tuple(
            PromptEntry(f"an image showing a {cls} in use", cls) for cls in classes
        )
    )


def conv_frame(
    frame_id: str,
    scores,
    activations,
    gradients,
    image_size,
    prefix: str | None = None,
    **extra,
) -> FrameCapture:
    prefix = prefix if prefix is not None else frame_id
    activations = np.asarray(activations, dtype=np.float32)
    gradients = np.asarray(gradients, dtype=np.float32)
    return FrameCapture(
        frame_id=frame_id,
        image_size=image_size,
        capture_kind="conv",
        similarity_scores=tuple(scores),
        conv_activations=TensorRecord(f"{prefix}_act", activations.shape, activations),
        conv_gradients=TensorRecord(f"{prefix}_grad", gradients.shape, gradients),
        **extra,
    )


def transformer_frame(
    frame_id: str,
    scores,
    attention,
    gradients,
    image_size,
    prefix: str | None = None,
    **extra,
) -> FrameCapture:
    prefix = prefix if prefix is not None else frame_id
    stack = [np.asarray(a, dtype=np.float32) for a in attention]
    grads = [np.asarray(g, dtype=np.float32) for g in gradients]
    return FrameCapture(
        frame_id=frame_id,
        image_size=image_size,
        capture_kind="transformer",
        similarity_scores=tuple(scores),
        attention_stack=[
            TensorRecord(f"{prefix}_attn_{i}", a.shape, a) for i, a in enumerate(stack)
        ],
        attention_gradients=[
            TensorRecord(f"{prefix}_agrad_{i}", g.shape, g) for i, g in enumerate(grads)
        ],
        **extra,
    )


def write_annotations(path: Path, frames: list[dict]) -> Path:
    path = Path(path)
    path.write_text(json.dumps({"frames": frames}, indent=2) + "\n", encoding="utf-8")
    return path


def box(cls: str, x_min: int, y_min: int, x_max: int, y_max: int) -> dict:
    return {"class": cls, "x_min": x_min, "y_min": y_min, "x_max": x_max, "y_max": y_max}


def triplet_doc(instrument: str, verb: str, target: str) -> dict:
    return {"instrument": instrument, "verb": verb, "target": target}


def triplet_pool(entries) -> PromptPool:
    pool_entries = []
    for s, v, o in entries:
        pool_entries.append(
            PromptEntry(f"I use a {s} to {v} the {o}", TripletLabel(s, v, o))
        )
    return PromptPool(tuple(pool_entries))


def verb_pool(verbs) -> PromptPool:
    return PromptPool(tuple(PromptEntry(f"I am performing {v}", v) for v in verbs))


def simple_bundle(task: str = "instrument", frames=None, pool=None, **extra) -> RunBundle:
    if pool is None:
        pool = instrument_pool()
    if frames is None:
        frames = [
            conv_frame(
                "f1",
                (0.9, 0.1),
                [[[0.0, 1.0], [0.0, 1.0]]],
                [[[1.0, 1.0], [1.0, 1.0]]],
                (2, 2),
            )
        ]
    return RunBundle(task=task, prompt_pool=pool, frames=frames, **extra)
