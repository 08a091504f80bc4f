import numpy as np
import pytest

from ltbracket.data import CombinedDataset
from ltbracket.fixtures import d0 as load_d0, d2 as load_d2

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def d0():
    return load_d0()


@pytest.fixture
def d2():
    return load_d2()


def make_dataset(rows, provenance="test"):
    """rows: iterable of (g, w, y1, y2-or-None)."""
    g, w, y1, y2 = zip(*rows)
    y2 = [np.nan if v is None else v for v in y2]
    return CombinedDataset(np.array(g), np.array(w), np.array(y1, float), np.array(y2, float), provenance=provenance)


def random_dataset(rng, n_min=3, n_max=40, with_exp_y2=False):
    """Validated random dataset with a well-posed control regression."""
    parts = []
    for g in ("E", "O"):
        for w in (0, 1):
            n = int(rng.integers(n_min, n_max))
            y1 = rng.normal(rng.normal(0, 2), rng.uniform(0.2, 3), n)
            y2 = rng.normal(0, 1, n) + rng.uniform(-2, 2) * y1 + rng.normal(0, 3)
            if g == "E" and not with_exp_y2:
                y2 = np.full(n, np.nan)
            parts += [(g, w, a, b) for a, b in zip(y1, y2)]
    order = rng.permutation(len(parts))
    parts = [parts[i] for i in order]
    return make_dataset([(g, w, a, None if np.isnan(b) else b) for g, w, a, b in parts], "random")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for crit, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
            terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
