"""Writes the run-bundle directory layout the evaluation engine consumes.

The layout is this package's only coupling to the engine: a
`manifest.json` with sorted keys, two-space indent, and a trailing
newline, plus one raw row-major little-endian float32 `.bin` file per
tensor, shapes recorded in the manifest only.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import CaptureShapeError

_NAME_SAFE = re.compile(r"[^A-Za-z0-9_.-]")


class TensorNamer:
    """Yields manifest-safe, bundle-unique tensor names."""

    def __init__(self):
        self._used: set[str] = set()

    def name(self, stem: str) -> str:
        base = _NAME_SAFE.sub("_", stem)
        if not base or not base[0].isalnum():
            base = "t" + base
        candidate = base
        suffix = 2
        while candidate in self._used:
            candidate = f"{base}_{suffix}"
            suffix += 1
        self._used.add(candidate)
        return candidate


def tensor_ref(name: str, array: np.ndarray, frame_id: str) -> tuple[dict, bytes]:
    """Manifest reference plus payload bytes for one captured array."""
    array = np.asarray(array, dtype=np.float64)
    if array.size == 0:
        raise CaptureShapeError(f"frame {frame_id!r}: captured tensor {name!r} is empty")
    if not np.isfinite(array).all():
        raise CaptureShapeError(
            f"frame {frame_id!r}: captured tensor {name!r} has non-finite values"
        )
    payload = array.astype("<f4").tobytes(order="C")
    return {"name": name, "shape": list(array.shape)}, payload


def write_bundle(out_dir: Path, manifest: dict, payloads: dict[str, bytes]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, data in payloads.items():
        (out_dir / f"{name}.bin").write_bytes(data)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text, encoding="utf-8")
    return out_dir
