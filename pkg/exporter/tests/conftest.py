from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# Filled by the acceptance tests' criterion decorator; echoed after the
# run so the verdict lines survive output capture.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


def write_images(root: Path, frame_ids, size=(16, 16), seed=5) -> list[dict]:
    rng = np.random.default_rng(seed)
    frames = []
    for frame_id in frame_ids:
        arr = (rng.random((size[0], size[1], 3)) * 255).astype("uint8")
        path = root / f"{frame_id}.png"
        Image.fromarray(arr).save(path)
        frames.append({"frame_id": frame_id, "image": f"{frame_id}.png"})
    return frames


def write_instrument_pool(root: Path, classes=("grasper", "hook")) -> Path:
    pool = [
        {"prompt": f"an image showing a {cls} in use", "label": cls} for cls in classes
    ]
    path = root / "pool.json"
    path.write_text(json.dumps(pool, indent=2) + "\n", encoding="utf-8")
    return path


def write_triplet_pool(root: Path, triplets) -> Path:
    pool = [
        {
            "prompt": f"I use a {s} to {v} the {o}",
            "label": {"instrument": s, "verb": v, "target": o},
        }
        for s, v, o in triplets
    ]
    path = root / "pool.json"
    path.write_text(json.dumps(pool, indent=2) + "\n", encoding="utf-8")
    return path


def write_config(root: Path, name="config.json", **fields) -> Path:
    path = root / name
    path.write_text(json.dumps(fields, indent=2) + "\n", encoding="utf-8")
    return path


def run_cli(module: str, *args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", module, *args], capture_output=True, text=True
    )


@pytest.fixture
def workspace(tmp_path) -> Path:
    return tmp_path
