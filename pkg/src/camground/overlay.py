"""Heatmap overlay rendering.

An overlay is the frame image tinted by a fixed colormap wherever the
heatmap is hot, with ground-truth boxes drawn on top. Blend strength is
proportional to heatmap value, so an all-zero heatmap leaves the image
untouched apart from the boxes. Output is PNG; identical inputs produce
identical bytes.
"""

from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .annotations import BoundingBox
from .cam import Heatmap
from .errors import MissingImage, ShapeMismatch

# Plasma-like stops, interpolated into a 256-entry LUT. Any fixed
# perceptually ordered map works; this one ships with the tool so renders
# are stable across installs.
_STOPS = (
    (0.00, (13, 8, 135)),
    (0.25, (126, 3, 168)),
    (0.50, (204, 71, 120)),
    (0.75, (248, 149, 64)),
    (1.00, (240, 249, 33)),
)
_BOX_COLOR = (0, 255, 0)
_MAX_ALPHA = 0.6


def _build_lut() -> np.ndarray:
    positions = np.array([stop[0] for stop in _STOPS])
    lut = np.empty((256, 3), dtype=np.float64)
    xs = np.linspace(0.0, 1.0, 256)
    for channel in range(3):
        values = np.array([stop[1][channel] for stop in _STOPS], dtype=np.float64)
        lut[:, channel] = np.interp(xs, positions, values)
    return lut


_LUT = _build_lut()


def colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB float64 via the fixed LUT."""
    indices = np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255), 0, 255).astype(np.intp)
    return _LUT[indices]


def render_overlay(
    image_path: str | Path | None,
    heatmap: Heatmap,
    boxes: Iterable[BoundingBox],
    out_path: str | Path,
) -> Path:
    """Blend the heatmap over the frame image, draw boxes, write a PNG."""
    if image_path is None:
        raise MissingImage(f"frame {heatmap.frame_id!r} has no image_path to render")
    image_path = Path(image_path)
    try:
        with Image.open(image_path) as img:
            base = img.convert("RGB")
    except (FileNotFoundError, OSError) as exc:
        raise MissingImage(f"cannot open image {image_path}: {exc}") from exc

    h, w = heatmap.shape
    if base.size != (w, h):
        raise ShapeMismatch(
            f"image {image_path.name} is {base.size[1]}x{base.size[0]} but the "
            f"heatmap is {h}x{w}"
        )

    pixels = np.asarray(base, dtype=np.float64)
    tint = colormap(heatmap.values)
    alpha = (_MAX_ALPHA * heatmap.values)[:, :, None]
    blended = (1.0 - alpha) * pixels + alpha * tint
    out = Image.fromarray(np.clip(np.rint(blended), 0, 255).astype(np.uint8), mode="RGB")

    draw = ImageDraw.Draw(out)
    for box in boxes:
        draw.rectangle(
            (box.x_min, box.y_min, box.x_max, box.y_max), outline=_BOX_COLOR, width=1
        )

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out.save(out_path, format="PNG")
    return out_path
