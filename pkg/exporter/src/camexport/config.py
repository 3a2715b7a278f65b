"""Capture config and prompt pool loading.

A config is a JSON object mirroring CaptureConfig. Relative paths inside
it resolve against the config file's own directory, so a config checked
in next to its images keeps working from any working directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .models import DEFAULT_SEED

CAPTURE_KINDS = ("conv", "transformer")
TRIPLET_KEYS = ("instrument", "verb", "target")


@dataclass(frozen=True)
class FrameSpec:
    frame_id: str
    image: Path
    video_id: str | None = None


@dataclass(frozen=True)
class CaptureConfig:
    model: str
    capture_kind: str
    out: Path
    frames: tuple[FrameSpec, ...]
    layer: str | None = None
    prompt_pool: Path | None = None
    worklist: Path | None = None
    task: str | None = None
    video_id: str | None = None
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class PoolEntry:
    prompt: str
    label: str | dict = field(compare=True)


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ConfigError(f"{where} is missing required field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ConfigError(f"{where} field {key!r} must be {kind.__name__}")
    return value


def load_config(path: str | Path) -> CaptureConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")

    base = path.resolve().parent

    def resolve(value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    model = _require(doc, "model", str, "config")
    kind = _require(doc, "capture_kind", str, "config")
    if kind not in CAPTURE_KINDS:
        raise ConfigError(f"capture_kind must be one of {CAPTURE_KINDS}, got {kind!r}")
    out = resolve(_require(doc, "out", str, "config"))

    frames_doc = _require(doc, "frames", list, "config")
    frames: list[FrameSpec] = []
    seen: set[str] = set()
    for i, frame in enumerate(frames_doc):
        where = f"config frames[{i}]"
        if not isinstance(frame, dict):
            raise ConfigError(f"{where} must be an object")
        frame_id = _require(frame, "frame_id", str, where)
        if frame_id in seen:
            raise ConfigError(f"duplicate frame_id {frame_id!r} in config frame list")
        seen.add(frame_id)
        video_id = frame.get("video_id")
        if video_id is not None and not isinstance(video_id, str):
            raise ConfigError(f"{where} field 'video_id' must be a string")
        frames.append(
            FrameSpec(frame_id, resolve(_require(frame, "image", str, where)), video_id)
        )

    layer = doc.get("layer")
    if layer is not None and not isinstance(layer, str):
        raise ConfigError("config field 'layer' must be a string")
    worklist = doc.get("worklist")
    pool = doc.get("prompt_pool")
    if worklist is None and pool is None:
        raise ConfigError("config needs either 'prompt_pool' or 'worklist'")
    task = doc.get("task")
    if task is not None and task not in ("instrument", "triplet"):
        raise ConfigError(f"config task must be 'instrument' or 'triplet', got {task!r}")
    video_id = doc.get("video_id")
    if video_id is not None and not isinstance(video_id, str):
        raise ConfigError("config field 'video_id' must be a string")
    seed = doc.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("config field 'seed' must be an integer")

    return CaptureConfig(
        model=model,
        capture_kind=kind,
        out=out,
        frames=tuple(frames),
        layer=layer,
        prompt_pool=resolve(pool) if pool is not None else None,
        worklist=resolve(worklist) if worklist is not None else None,
        task=task,
        video_id=video_id,
        seed=seed,
    )


def load_prompt_pool(path: Path) -> list[PoolEntry]:
    """Read a JSON array of {"prompt", "label"} entries."""
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"prompt pool file not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read prompt pool {path}: {exc}") from exc
    if not isinstance(doc, list) or not doc:
        raise ConfigError(f"prompt pool {path} must be a non-empty JSON array")

    entries: list[PoolEntry] = []
    prompts: set[str] = set()
    for i, item in enumerate(doc):
        where = f"prompt pool entry [{i}]"
        if not isinstance(item, dict):
            raise ConfigError(f"{where} must be an object")
        prompt = _require(item, "prompt", str, where)
        if prompt in prompts:
            raise ConfigError(f"duplicate prompt in pool: {prompt!r}")
        prompts.add(prompt)
        label = item.get("label")
        if isinstance(label, dict):
            if sorted(label) != sorted(TRIPLET_KEYS) or not all(
                isinstance(label[k], str) for k in TRIPLET_KEYS
            ):
                raise ConfigError(f"{where} triplet label needs string fields {TRIPLET_KEYS}")
            label = {k: label[k] for k in TRIPLET_KEYS}
        elif not isinstance(label, str):
            raise ConfigError(f"{where} label must be a string or a triplet object")
        entries.append(PoolEntry(prompt, label))
    return entries


def pool_task(entries: list[PoolEntry], configured: str | None) -> str:
    """Infer the task from label shapes, or check a configured one."""
    kinds = {"triplet" if isinstance(e.label, dict) else "instrument" for e in entries}
    if len(kinds) != 1:
        raise ConfigError("prompt pool mixes class-string and triplet labels")
    inferred = kinds.pop()
    if configured is not None and configured != inferred:
        raise ConfigError(
            f"config task {configured!r} does not match the {inferred!r} prompt pool"
        )
    return inferred
