from __future__ import annotations

import pytest

from simgen import surrogate
from simgen.data import split_dataset
from simgen.oracle import synth_dataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line for the acceptance summary (also printed under -s)."""
    def record(number: int, title: str, passed: bool, detail: str = ""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


@pytest.fixture(scope="session")
def rupture_split():
    ds = synth_dataset("rupture", 2000, seed=1)
    return split_dataset(ds, {"train": 0.8, "validation": 0.0, "test": 0.2}, seed=2)


@pytest.fixture(scope="session")
def small_rupture_model(rupture_split):
    """Quick surrogate for tests that only need something trained."""
    cfg = surrogate.GbdtConfig(n_trees=30, max_depth=3)
    return surrogate.fit(rupture_split.subset("train"), cfg, "binary")
