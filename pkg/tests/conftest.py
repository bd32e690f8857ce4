from __future__ import annotations

import csv
from pathlib import Path

import pytest


@pytest.fixture
def passengers_csv(tmp_path: Path) -> Path:
    """Small survival-prediction CSV used by the harness tests."""
    path = tmp_path / "passengers.csv"
    rows = [
        ["pclass", "sex", "age", "sibsp", "survived"],
        ["3", "male", "22", "1", "0"],
        ["1", "female", "38", "1", "1"],
        ["3", "female", "26", "0", "1"],
        ["1", "female", "35", "1", "1"],
        ["3", "male", "35", "0", "0"],
        ["2", "male", "", "0", "0"],
        ["1", "male", "54", "0", "0"],
        ["3", "female", "27", "0", "1"],
        ["2", "female", "14", "1", "1"],
        ["3", "male", "20", "0", "0"],
    ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        csv.writer(handle).writerows(rows)
    return path
