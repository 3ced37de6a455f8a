import numpy as np
import pytest
from hypothesis import strategies as st

from quantbench.core import LabeledDataset


def simplex(c_min=2, c_max=6):
    """Hypothesis strategy for probability vectors."""
    return st.integers(c_min, c_max).flatmap(
        lambda c: st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=c, max_size=c)
        .filter(lambda v: sum(v) > 1e-3)
        .map(lambda v: np.asarray(v) / np.sum(v))
    )


@pytest.fixture
def two_gaussians():
    rng = np.random.default_rng(7)
    x = np.concatenate([rng.normal(-3, 1, 200), rng.normal(3, 1, 200)]).reshape(-1, 1)
    y = np.repeat([0, 1], 200)
    return LabeledDataset(x, y, 2)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call" or "test_acceptance.py::test_criterion_" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1][len("test_criterion_"):]
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((name, f"criterion {name}: {outcome.upper()[:4]}  {detail}"))
    if lines:
        terminalreporter.section("acceptance")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
