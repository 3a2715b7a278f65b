"""Prompt pools, prediction selection, and the verb re-prompt worklist.

Three fixed templates cover the tasks:

* instrument: ``an image showing a {instrument class} in use``
* triplet:    ``I use a {instrument} to {verb} the {target}``
* verb:       ``I am performing {predicted_verb}``

The verb template is used in a two-pass protocol: pass 1 identifies frames
with instrument and verb both correct, a worklist file names those frames
and their verb prompts, an exporter produces a second capture bundle from
it, and pass 2 scores ARS. The worklist is a JSON array of objects
``{"frame_id", "verb_prompt", "predicted_triplet"}``.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import TripletLabel
from .errors import (
    DuplicateLabel,
    EmptyVocabulary,
    LengthMismatch,
    MissingFile,
    NonFiniteValue,
    SchemaViolation,
    UnknownVerb,
)

INSTRUMENT_TEMPLATE = "an image showing a {} in use"
TRIPLET_TEMPLATE = "I use a {} to {} the {}"
VERB_TEMPLATE = "I am performing {}"


@dataclass(frozen=True)
class PromptEntry:
    """One prompt string bound to its label (class name or triplet)."""

    prompt: str
    label: str | TripletLabel


@dataclass(frozen=True)
class PromptPool:
    """Ordered, duplicate-free collection of prompts."""

    entries: tuple[PromptEntry, ...]

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.prompt in seen:
                raise DuplicateLabel(f"duplicate prompt {entry.prompt!r}")
            seen.add(entry.prompt)

    def __len__(self) -> int:
        return len(self.entries)

    def prompt(self, index: int) -> str:
        return self.entries[index].prompt

    def label(self, index: int) -> str | TripletLabel:
        return self.entries[index].label

    @property
    def prompts(self) -> list[str]:
        return [entry.prompt for entry in self.entries]


def _check_vocabulary(name: str, values: Sequence[str]) -> list[str]:
    values = list(values)
    if not values:
        raise EmptyVocabulary(f"vocabulary {name!r} is empty")
    if len(set(values)) != len(values):
        raise DuplicateLabel(f"vocabulary {name!r} contains duplicates")
    return values


def build_instrument_pool(classes: Sequence[str]) -> PromptPool:
    """One instrument-template prompt per class, input order preserved."""
    classes = _check_vocabulary("classes", classes)
    return PromptPool(
        tuple(PromptEntry(INSTRUMENT_TEMPLATE.format(cls), cls) for cls in classes)
    )


def build_triplet_pool(
    instruments: Sequence[str], verbs: Sequence[str], targets: Sequence[str]
) -> PromptPool:
    """Full cross-product of the three vocabularies, lexicographic (s, v, o)
    order."""
    instruments = _check_vocabulary("instruments", instruments)
    verbs = _check_vocabulary("verbs", verbs)
    targets = _check_vocabulary("targets", targets)
    entries = []
    for s in sorted(instruments):
        for v in sorted(verbs):
            for o in sorted(targets):
                entries.append(
                    PromptEntry(
                        TRIPLET_TEMPLATE.format(s, v, o),
                        TripletLabel(instrument=s, verb=v, target=o),
                    )
                )
    return PromptPool(tuple(entries))


def select_prediction(scores: Sequence[float], pool_size: int) -> int:
    """Index of the highest similarity score; ties go to the lowest index."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.ndim != 1 or arr.size != pool_size:
        raise LengthMismatch(f"expected {pool_size} scores, got {arr.size}")
    if pool_size == 0:
        raise LengthMismatch("cannot select from an empty pool")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("similarity scores must be finite")
    return int(arr.argmax())


def verb_reprompt(predicted: TripletLabel, verbs: Iterable[str]) -> str:
    """Verb-template prompt for the predicted triplet's verb."""
    allowed = set(verbs)
    if predicted.verb not in allowed:
        raise UnknownVerb(f"verb {predicted.verb!r} is not in the verb vocabulary")
    return VERB_TEMPLATE.format(predicted.verb)


@dataclass(frozen=True)
class WorklistEntry:
    """One pass-2 capture request: the frame, the verb prompt to score, and
    the pass-1 predicted triplet it came from."""

    frame_id: str
    verb_prompt: str
    predicted_triplet: TripletLabel

    def as_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "verb_prompt": self.verb_prompt,
            "predicted_triplet": self.predicted_triplet.as_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict, where: str = "worklist entry") -> "WorklistEntry":
        for key in ("frame_id", "verb_prompt", "predicted_triplet"):
            if key not in doc:
                raise SchemaViolation(f"{where}: missing key {key!r}")
        return cls(
            frame_id=str(doc["frame_id"]),
            verb_prompt=str(doc["verb_prompt"]),
            predicted_triplet=TripletLabel.from_dict(doc["predicted_triplet"], where=where),
        )


def write_worklist(entries: Sequence[WorklistEntry], path: str | Path) -> None:
    """Write the worklist as deterministic JSON (sorted keys, 2-space
    indent, trailing newline)."""
    path = Path(path)
    payload = json.dumps([entry.as_dict() for entry in entries], sort_keys=True, indent=2)
    path.write_text(payload + "\n", encoding="utf-8")


def load_worklist(path: str | Path) -> list[WorklistEntry]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MissingFile(f"worklist file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"worklist {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise SchemaViolation(f"worklist {path} must be a JSON array")
    entries = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise SchemaViolation(f"worklist {path}: entry {i} must be an object")
        entries.append(WorklistEntry.from_dict(item, where=f"worklist entry {i}"))
    return entries
