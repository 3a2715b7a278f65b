"""Ground-truth annotations: bounding boxes, presence labels, action triples.

The annotation file is a single JSON document:

    {"frames": [
        {"frame_id": "v01/000123",
         "image_size": [480, 854],
         "boxes": [{"class": "grasper", "x_min": 10, "y_min": 10,
                    "x_max": 50, "y_max": 50}],
         "triplet": {"instrument": "grasper", "verb": "retract",
                     "target": "gallbladder"},
         "classes_present": ["grasper"]}
    ]}

Box coordinates are inclusive integer pixel indices at the frame's native
resolution. `triplet` and `classes_present` are optional; when
`classes_present` is given it must cover every box class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import BoxOutOfBounds, MissingFile, SchemaViolation


@dataclass(frozen=True)
class TripletLabel:
    """An (instrument, verb, target) action label."""

    instrument: str
    verb: str
    target: str

    def as_dict(self) -> dict:
        return {"instrument": self.instrument, "verb": self.verb, "target": self.target}

    @classmethod
    def from_dict(cls, obj: dict, where: str = "triplet") -> "TripletLabel":
        if not isinstance(obj, dict):
            raise SchemaViolation(f"{where}: expected an object with instrument/verb/target")
        missing = [k for k in ("instrument", "verb", "target") if k not in obj]
        if missing:
            raise SchemaViolation(f"{where}: missing {', '.join(missing)}")
        vals = {k: obj[k] for k in ("instrument", "verb", "target")}
        for k, v in vals.items():
            if not isinstance(v, str) or not v:
                raise SchemaViolation(f"{where}: {k} must be a non-empty string")
        return cls(**vals)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with inclusive integer pixel bounds."""

    label: str
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def area(self) -> int:
        return (self.y_max - self.y_min + 1) * (self.x_max - self.x_min + 1)


@dataclass
class FrameAnnotation:
    """Everything annotated on one frame."""

    frame_id: str
    image_size: tuple[int, int]  # (H', W')
    boxes: list[BoundingBox] = field(default_factory=list)
    triplet: Optional[TripletLabel] = None
    classes_present: frozenset[str] = frozenset()

    @property
    def regions(self) -> dict[str, list[BoundingBox]]:
        """Boxes grouped by class label."""
        grouped: dict[str, list[BoundingBox]] = {}
        for box in self.boxes:
            grouped.setdefault(box.label, []).append(box)
        return grouped

    def boxes_for(self, label: str) -> list[BoundingBox]:
        return [b for b in self.boxes if b.label == label]


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaViolation(f"{where}: missing required field '{key}'")
    return obj[key]


def _parse_image_size(value, where: str) -> tuple[int, int]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
        or value[0] <= 0
        or value[1] <= 0
    ):
        raise SchemaViolation(f"{where}: image_size must be [H, W] with positive integers")
    return int(value[0]), int(value[1])


def _parse_box(obj: dict, image_size: tuple[int, int], where: str) -> BoundingBox:
    if not isinstance(obj, dict):
        raise SchemaViolation(f"{where}: box entries must be objects")
    label = _require(obj, "class", where)
    if not isinstance(label, str) or not label:
        raise SchemaViolation(f"{where}: box class must be a non-empty string")
    coords = {}
    for key in ("x_min", "y_min", "x_max", "y_max"):
        value = _require(obj, key, where)
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaViolation(f"{where}: {key} must be an integer pixel index")
        coords[key] = value
    height, width = image_size
    if not (0 <= coords["x_min"] <= coords["x_max"] < width):
        raise BoxOutOfBounds(
            f"{where}: x range [{coords['x_min']}, {coords['x_max']}] "
            f"violates 0 <= x_min <= x_max < {width}"
        )
    if not (0 <= coords["y_min"] <= coords["y_max"] < height):
        raise BoxOutOfBounds(
            f"{where}: y range [{coords['y_min']}, {coords['y_max']}] "
            f"violates 0 <= y_min <= y_max < {height}"
        )
    return BoundingBox(label=label, **coords)


def parse_annotations(doc: dict, where: str = "annotations") -> dict[str, FrameAnnotation]:
    """Parse an already-decoded annotation document into a frame-id map."""
    if not isinstance(doc, dict) or "frames" not in doc:
        raise SchemaViolation(f"{where}: expected an object with a 'frames' array")
    frames = doc["frames"]
    if not isinstance(frames, list):
        raise SchemaViolation(f"{where}: 'frames' must be an array")
    result: dict[str, FrameAnnotation] = {}
    for i, entry in enumerate(frames):
        if not isinstance(entry, dict):
            raise SchemaViolation(f"{where}: frame entry {i} must be an object")
        frame_id = _require(entry, "frame_id", f"{where}: frame entry {i}")
        if not isinstance(frame_id, str) or not frame_id:
            raise SchemaViolation(f"{where}: frame entry {i}: frame_id must be a non-empty string")
        here = f"{where}: frame '{frame_id}'"
        if frame_id in result:
            raise SchemaViolation(f"{here}: duplicate frame_id")
        image_size = _parse_image_size(_require(entry, "image_size", here), here)
        raw_boxes = entry.get("boxes", [])
        if not isinstance(raw_boxes, list):
            raise SchemaViolation(f"{here}: 'boxes' must be an array")
        boxes = [_parse_box(b, image_size, f"{here} box {j}") for j, b in enumerate(raw_boxes)]
        triplet = None
        if entry.get("triplet") is not None:
            triplet = TripletLabel.from_dict(entry["triplet"], f"{here}: triplet")
        box_classes = {b.label for b in boxes}
        if entry.get("classes_present") is not None:
            declared = entry["classes_present"]
            if not isinstance(declared, list) or not all(isinstance(c, str) for c in declared):
                raise SchemaViolation(f"{here}: classes_present must be an array of strings")
            classes = frozenset(declared)
            if not box_classes <= classes:
                raise SchemaViolation(
                    f"{here}: classes_present must include every box class "
                    f"(missing {sorted(box_classes - classes)})"
                )
        else:
            classes = frozenset(box_classes)
        result[frame_id] = FrameAnnotation(
            frame_id=frame_id,
            image_size=image_size,
            boxes=boxes,
            triplet=triplet,
            classes_present=classes,
        )
    return result


def load_annotations(path) -> dict[str, FrameAnnotation]:
    """Load and validate an annotation file; returns frame_id -> FrameAnnotation."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise MissingFile(f"annotation file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"annotation file {path} is not valid JSON: {exc}") from exc
    return parse_annotations(doc, where=str(path))
