import os
from pathlib import Path

import numpy as np
import pytest

from rssgan.data import DATA_FILENAME, cache_dir


def write_toy_file(path: Path, n_per_class: int = 40, seed: int = 0, spread: float = 4.0) -> Path:
    """Four Gaussian 'rooms' over seven APs, integer dBm, in the UCI line format."""
    rng = np.random.default_rng(seed)
    means = rng.uniform(-85, -45, size=(4, 7))
    lines = []
    for c in range(4):
        X = np.round(means[c] + rng.normal(0, spread, size=(n_per_class, 7))).astype(int)
        lines += ["\t".join(str(v) for v in row) + f"\t{c + 1}" for row in X]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def toy_file(tmp_path) -> Path:
    return write_toy_file(tmp_path / "toy.txt")


def canonical_path() -> Path | None:
    """The real benchmark file, if one is available locally."""
    candidates = [os.environ.get("RSSGAN_DATA"), cache_dir() / DATA_FILENAME]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


# Acceptance verdicts, one line per criterion, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
