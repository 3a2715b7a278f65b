from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES_DIR = TESTS_DIR / "fixtures"

if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))

# Filled by the acceptance suite's criterion decorator; echoed after the
# run so the verdict lines survive output capture.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture
def e2e_bundle_dir() -> Path:
    return FIXTURES_DIR / "e2e_bundle"


@pytest.fixture
def e2e_annotations_path() -> Path:
    return FIXTURES_DIR / "e2e_annotations.json"


@pytest.fixture
def e2e_expected_report_path() -> Path:
    return FIXTURES_DIR / "e2e_expected_report.json"
