"""Run-bundle format: the capture exchange between exporter and engine.

A bundle is a directory holding one `manifest.json` plus one raw tensor
file per captured array:

* `manifest.json` carries the task (``instrument`` | ``triplet`` |
  ``verb_reprompt``), the ordered prompt pool (array of
  ``{"prompt", "label"}``, label a class string or a
  ``{"instrument","verb","target"}`` object), optional bundle-level
  ``video_id`` / ``annotation_file`` / ``meta``, and the frames array.
* Each frame object has ``frame_id``, ``image_size`` ``[H', W']``,
  ``capture_kind`` (``conv`` | ``transformer``), ``similarity_scores`` (one
  float per prompt), tensor references as ``{"name", "shape"}``, and
  optionally ``video_id``, ``image_path``, ``patch_grid`` ``[rows, cols]``
  (transformer), and ``target_prompt_index`` (verb_reprompt).
* A tensor reference ``{"name": "t", "shape": [...]}`` points at the file
  ``t.bin`` in the bundle directory: raw row-major little-endian float32,
  no header; the shape lives only in the manifest. A 2x2 tensor
  [[1, 2], [3, 4]] is exactly the 16 bytes
  ``00 00 80 3f 00 00 00 40 00 00 40 40 00 00 80 40``.

Serialization is deterministic (sorted keys, 2-space indent, trailing
newline, ``str(float)`` number formatting), so identical bundles are
byte-identical on disk. Loading validates everything up front: shape
products match data lengths, values are finite, conv frames carry a
matching activation/gradient pair, transformer frames carry equal-length
square attention stacks. A file that fails any check produces a typed error
naming the offending record, never a partially loaded bundle.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import TripletLabel
from .errors import (
    GridMismatch,
    IoFailure,
    MissingFile,
    NonFiniteValue,
    SchemaViolation,
    ShapeMismatch,
)
from .prompts import PromptEntry, PromptPool

TASKS = ("instrument", "triplet", "verb_reprompt")
CAPTURE_KINDS = ("conv", "transformer")
_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


@dataclass(eq=False)
class TensorRecord:
    """Named float32 array; `shape` is authoritative, `data` is stored
    row-major."""

    name: str
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.data = np.asarray(self.data, dtype=np.float32).reshape(-1)
        if not _NAME_RE.match(self.name):
            raise SchemaViolation(f"tensor name {self.name!r} is not a valid file stem")
        if not self.shape or any(s < 1 for s in self.shape):
            raise ShapeMismatch(f"tensor {self.name!r}: shape {self.shape} must be positive")
        expected = int(np.prod(self.shape))
        if self.data.size != expected:
            raise ShapeMismatch(
                f"tensor {self.name!r}: shape {self.shape} implies {expected} values, "
                f"got {self.data.size}"
            )
        if not np.isfinite(self.data).all():
            raise NonFiniteValue(f"tensor {self.name!r} contains NaN or Inf")

    def as_array(self) -> np.ndarray:
        """The tensor reshaped to its declared shape."""
        return self.data.reshape(self.shape)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TensorRecord):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )


@dataclass(eq=False)
class FrameCapture:
    """One frame's capture: scores over the pool plus the tensors needed to
    rebuild its heatmap."""

    frame_id: str
    image_size: tuple[int, int]
    capture_kind: str
    similarity_scores: tuple[float, ...]
    conv_activations: TensorRecord | None = None
    conv_gradients: TensorRecord | None = None
    attention_stack: list[TensorRecord] = field(default_factory=list)
    attention_gradients: list[TensorRecord] = field(default_factory=list)
    patch_grid: tuple[int, int] | None = None
    image_path: str | None = None
    video_id: str | None = None
    target_prompt_index: int | None = None

    def __post_init__(self):
        self.image_size = (int(self.image_size[0]), int(self.image_size[1]))
        self.similarity_scores = tuple(float(s) for s in self.similarity_scores)
        if self.patch_grid is not None:
            self.patch_grid = (int(self.patch_grid[0]), int(self.patch_grid[1]))

    def tensors(self) -> list[TensorRecord]:
        out = []
        if self.conv_activations is not None:
            out.append(self.conv_activations)
        if self.conv_gradients is not None:
            out.append(self.conv_gradients)
        out.extend(self.attention_stack)
        out.extend(self.attention_gradients)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrameCapture):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.image_size == other.image_size
            and self.capture_kind == other.capture_kind
            and self.similarity_scores == other.similarity_scores
            and self.conv_activations == other.conv_activations
            and self.conv_gradients == other.conv_gradients
            and self.attention_stack == other.attention_stack
            and self.attention_gradients == other.attention_gradients
            and self.patch_grid == other.patch_grid
            and self.image_path == other.image_path
            and self.video_id == other.video_id
            and self.target_prompt_index == other.target_prompt_index
        )


@dataclass(eq=False)
class RunBundle:
    """A validated capture run: task, prompt pool, frames."""

    task: str
    prompt_pool: PromptPool
    frames: list[FrameCapture]
    video_id: str | None = None
    annotation_file: str | None = None
    meta: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunBundle):
            return NotImplemented
        return (
            self.task == other.task
            and self.prompt_pool == other.prompt_pool
            and self.frames == other.frames
            and self.video_id == other.video_id
            and self.annotation_file == other.annotation_file
            and self.meta == other.meta
        )


def _label_key(label) -> tuple:
    if isinstance(label, TripletLabel):
        return ("triplet", label.instrument, label.verb, label.target)
    return ("class", str(label))


def validate_bundle(bundle: RunBundle) -> None:
    """Check every bundle invariant; raise a typed error naming the first
    offender."""
    if bundle.task not in TASKS:
        raise SchemaViolation(f"unknown task {bundle.task!r}; expected one of {TASKS}")

    seen_labels = set()
    for entry in bundle.prompt_pool.entries:
        key = _label_key(entry.label)
        if key in seen_labels:
            raise SchemaViolation(f"duplicate prompt label {entry.label!r} in pool")
        seen_labels.add(key)

    pool_size = len(bundle.prompt_pool)
    seen_frames = set()
    seen_tensors = set()
    for frame in bundle.frames:
        where = f"frame {frame.frame_id!r}"
        if frame.frame_id in seen_frames:
            raise SchemaViolation(f"duplicate frame_id {frame.frame_id!r}")
        seen_frames.add(frame.frame_id)
        if frame.image_size[0] < 1 or frame.image_size[1] < 1:
            raise SchemaViolation(f"{where}: image_size {frame.image_size} must be positive")
        if frame.capture_kind not in CAPTURE_KINDS:
            raise SchemaViolation(
                f"{where}: unknown capture_kind {frame.capture_kind!r}; "
                f"expected one of {CAPTURE_KINDS}"
            )
        if len(frame.similarity_scores) != pool_size:
            raise SchemaViolation(
                f"{where}: {len(frame.similarity_scores)} similarity scores "
                f"for a pool of {pool_size}"
            )
        if frame.similarity_scores and not np.isfinite(frame.similarity_scores).all():
            raise NonFiniteValue(f"{where}: similarity scores contain NaN or Inf")

        for record in frame.tensors():
            if record.name in seen_tensors:
                raise SchemaViolation(f"{where}: duplicate tensor name {record.name!r}")
            seen_tensors.add(record.name)

        if frame.capture_kind == "conv":
            if frame.conv_activations is None or frame.conv_gradients is None:
                raise SchemaViolation(f"{where}: conv capture needs activations and gradients")
            if frame.attention_stack or frame.attention_gradients:
                raise SchemaViolation(f"{where}: conv capture must not carry attention tensors")
            act, grad = frame.conv_activations, frame.conv_gradients
            if len(act.shape) != 3:
                raise ShapeMismatch(
                    f"{where}: tensor {act.name!r} must be KxHxW, got shape {act.shape}"
                )
            if act.shape != grad.shape:
                raise ShapeMismatch(
                    f"{where}: activation shape {act.shape} != gradient shape {grad.shape}"
                )
        else:
            if frame.conv_activations is not None or frame.conv_gradients is not None:
                raise SchemaViolation(f"{where}: transformer capture must not carry conv tensors")
            if not frame.attention_stack:
                raise SchemaViolation(f"{where}: transformer capture needs an attention stack")
            if len(frame.attention_stack) != len(frame.attention_gradients):
                raise SchemaViolation(
                    f"{where}: {len(frame.attention_stack)} attention layers but "
                    f"{len(frame.attention_gradients)} gradient layers"
                )
            n = None
            for layer, (attn, grad) in enumerate(
                zip(frame.attention_stack, frame.attention_gradients), start=1
            ):
                if len(attn.shape) != 2 or attn.shape[0] != attn.shape[1]:
                    raise SchemaViolation(
                        f"{where}: tensor {attn.name!r} must be square NxN, got {attn.shape}"
                    )
                if attn.shape != grad.shape:
                    raise ShapeMismatch(
                        f"{where}: layer {layer} attention {attn.shape} != "
                        f"gradient {grad.shape}"
                    )
                if n is None:
                    n = attn.shape[0]
                elif attn.shape[0] != n:
                    raise SchemaViolation(
                        f"{where}: layer {layer} has {attn.shape[0]} tokens, "
                        f"earlier layers have {n}"
                    )
            if n < 2:
                raise SchemaViolation(f"{where}: token count {n} must be >= 2")
            if frame.patch_grid is not None:
                rows, cols = frame.patch_grid
                if rows < 1 or cols < 1 or rows * cols != n - 1:
                    raise GridMismatch(
                        f"{where}: patch_grid {rows}x{cols} does not cover {n - 1} patch tokens"
                    )
        if frame.target_prompt_index is not None and not (
            0 <= frame.target_prompt_index < pool_size
        ):
            raise SchemaViolation(
                f"{where}: target_prompt_index {frame.target_prompt_index} "
                f"outside pool of {pool_size}"
            )
        if bundle.task == "verb_reprompt" and frame.target_prompt_index is None:
            raise SchemaViolation(f"{where}: verb_reprompt frames need target_prompt_index")


def _label_to_json(label):
    if isinstance(label, TripletLabel):
        return label.as_dict()
    return str(label)


def _label_from_json(value, where: str):
    if isinstance(value, dict):
        return TripletLabel.from_dict(value, where=where)
    if isinstance(value, str):
        return value
    raise SchemaViolation(f"{where}: label must be a string or triplet object")


def _tensor_ref(record: TensorRecord) -> dict:
    return {"name": record.name, "shape": list(record.shape)}


def _frame_to_json(frame: FrameCapture) -> dict:
    doc: dict = {
        "frame_id": frame.frame_id,
        "image_size": list(frame.image_size),
        "capture_kind": frame.capture_kind,
        "similarity_scores": list(frame.similarity_scores),
    }
    if frame.capture_kind == "conv":
        doc["conv_activations"] = _tensor_ref(frame.conv_activations)
        doc["conv_gradients"] = _tensor_ref(frame.conv_gradients)
    else:
        doc["attention_stack"] = [_tensor_ref(r) for r in frame.attention_stack]
        doc["attention_gradients"] = [_tensor_ref(r) for r in frame.attention_gradients]
    if frame.patch_grid is not None:
        doc["patch_grid"] = list(frame.patch_grid)
    if frame.image_path is not None:
        doc["image_path"] = frame.image_path
    if frame.video_id is not None:
        doc["video_id"] = frame.video_id
    if frame.target_prompt_index is not None:
        doc["target_prompt_index"] = frame.target_prompt_index
    return doc


def write_bundle(bundle: RunBundle, path: str | Path) -> None:
    """Write manifest.json plus one .bin file per tensor; deterministic
    bytes for identical bundles."""
    validate_bundle(bundle)
    path = Path(path)
    manifest: dict = {
        "task": bundle.task,
        "prompt_pool": [
            {"prompt": entry.prompt, "label": _label_to_json(entry.label)}
            for entry in bundle.prompt_pool.entries
        ],
        "frames": [_frame_to_json(frame) for frame in bundle.frames],
    }
    if bundle.video_id is not None:
        manifest["video_id"] = bundle.video_id
    if bundle.annotation_file is not None:
        manifest["annotation_file"] = bundle.annotation_file
    if bundle.meta:
        manifest["meta"] = bundle.meta
    try:
        path.mkdir(parents=True, exist_ok=True)
        for frame in bundle.frames:
            for record in frame.tensors():
                payload = record.data.astype("<f4").tobytes(order="C")
                (path / f"{record.name}.bin").write_bytes(payload)
        text = json.dumps(manifest, sort_keys=True, indent=2)
        (path / "manifest.json").write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write bundle at {path}: {exc}") from exc


def _read_tensor(bundle_dir: Path, ref, where: str) -> TensorRecord:
    if not isinstance(ref, dict) or "name" not in ref or "shape" not in ref:
        raise SchemaViolation(f"{where}: tensor reference must be an object with name and shape")
    name = str(ref["name"])
    if not _NAME_RE.match(name):
        raise SchemaViolation(f"{where}: tensor name {name!r} is not a valid file stem")
    shape = ref["shape"]
    if not isinstance(shape, list) or not all(isinstance(s, int) for s in shape):
        raise SchemaViolation(f"{where}: tensor {name!r} shape must be a list of integers")
    tensor_path = bundle_dir / f"{name}.bin"
    try:
        raw = tensor_path.read_bytes()
    except FileNotFoundError as exc:
        raise MissingFile(f"{where}: tensor file {tensor_path} not found") from exc
    if len(raw) % 4 != 0:
        raise ShapeMismatch(
            f"{where}: tensor file {tensor_path.name} holds {len(raw)} bytes, "
            f"not a whole number of float32 values"
        )
    data = np.frombuffer(raw, dtype="<f4")
    return TensorRecord(name=name, shape=tuple(shape), data=data)


def _frame_from_json(bundle_dir: Path, doc, index: int) -> FrameCapture:
    if not isinstance(doc, dict):
        raise SchemaViolation(f"frame entry {index} must be an object")
    for key in ("frame_id", "image_size", "capture_kind", "similarity_scores"):
        if key not in doc:
            raise SchemaViolation(f"frame entry {index}: missing key {key!r}")
    frame_id = str(doc["frame_id"])
    where = f"frame {frame_id!r}"
    size = doc["image_size"]
    if not isinstance(size, list) or len(size) != 2 or not all(isinstance(s, int) for s in size):
        raise SchemaViolation(f"{where}: image_size must be [H, W] integers")
    scores = doc["similarity_scores"]
    if not isinstance(scores, list) or not all(isinstance(s, (int, float)) for s in scores):
        raise SchemaViolation(f"{where}: similarity_scores must be a list of numbers")
    kind = str(doc["capture_kind"])

    conv_activations = conv_gradients = None
    attention_stack: list[TensorRecord] = []
    attention_gradients: list[TensorRecord] = []
    if kind == "conv":
        for key in ("conv_activations", "conv_gradients"):
            if key not in doc:
                raise SchemaViolation(f"{where}: conv capture missing {key!r}")
        conv_activations = _read_tensor(bundle_dir, doc["conv_activations"], where)
        conv_gradients = _read_tensor(bundle_dir, doc["conv_gradients"], where)
    elif kind == "transformer":
        for key in ("attention_stack", "attention_gradients"):
            if key not in doc or not isinstance(doc[key], list):
                raise SchemaViolation(f"{where}: transformer capture needs list {key!r}")
        attention_stack = [_read_tensor(bundle_dir, ref, where) for ref in doc["attention_stack"]]
        attention_gradients = [
            _read_tensor(bundle_dir, ref, where) for ref in doc["attention_gradients"]
        ]

    patch_grid = None
    if "patch_grid" in doc:
        grid = doc["patch_grid"]
        if not isinstance(grid, list) or len(grid) != 2 or not all(isinstance(g, int) for g in grid):
            raise SchemaViolation(f"{where}: patch_grid must be [rows, cols] integers")
        patch_grid = (grid[0], grid[1])

    target_index = doc.get("target_prompt_index")
    if target_index is not None and not isinstance(target_index, int):
        raise SchemaViolation(f"{where}: target_prompt_index must be an integer")

    return FrameCapture(
        frame_id=frame_id,
        image_size=(size[0], size[1]),
        capture_kind=kind,
        similarity_scores=tuple(float(s) for s in scores),
        conv_activations=conv_activations,
        conv_gradients=conv_gradients,
        attention_stack=attention_stack,
        attention_gradients=attention_gradients,
        patch_grid=patch_grid,
        image_path=None if doc.get("image_path") is None else str(doc["image_path"]),
        video_id=None if doc.get("video_id") is None else str(doc["video_id"]),
        target_prompt_index=target_index,
    )


def load_bundle(path: str | Path) -> RunBundle:
    """Load and fully validate a bundle directory."""
    bundle_dir = Path(path)
    manifest_path = bundle_dir / "manifest.json"
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingFile(f"manifest not found: {manifest_path}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaViolation(f"manifest {manifest_path} must be a JSON object")
    for key in ("task", "prompt_pool", "frames"):
        if key not in doc:
            raise SchemaViolation(f"manifest {manifest_path}: missing key {key!r}")
    if not isinstance(doc["prompt_pool"], list) or not isinstance(doc["frames"], list):
        raise SchemaViolation(f"manifest {manifest_path}: prompt_pool and frames must be arrays")

    entries = []
    for i, item in enumerate(doc["prompt_pool"]):
        if not isinstance(item, dict) or "prompt" not in item or "label" not in item:
            raise SchemaViolation(f"prompt_pool entry {i} must be an object with prompt and label")
        entries.append(
            PromptEntry(
                prompt=str(item["prompt"]),
                label=_label_from_json(item["label"], f"prompt_pool entry {i}"),
            )
        )
    pool = PromptPool(tuple(entries))

    frames = [_frame_from_json(bundle_dir, item, i) for i, item in enumerate(doc["frames"])]

    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaViolation(f"manifest {manifest_path}: meta must be an object")
    bundle = RunBundle(
        task=str(doc["task"]),
        prompt_pool=pool,
        frames=frames,
        video_id=None if doc.get("video_id") is None else str(doc["video_id"]),
        annotation_file=None if doc.get("annotation_file") is None else str(doc["annotation_file"]),
        meta=meta,
    )
    validate_bundle(bundle)
    return bundle
