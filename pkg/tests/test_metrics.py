import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import simplex
from quantbench.errors import EmptyInput, LengthMismatch, QuantError
from quantbench.metrics import CellError, aggregate, bray_curtis


def test_bray_curtis_examples():
    assert bray_curtis([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0
    assert bray_curtis([1, 0], [0, 1]) == 1
    assert bray_curtis([0.5, 0.3, 0.2], [0.4, 0.4, 0.2]) == pytest.approx(0.1, abs=1e-15)


def test_bray_curtis_length_mismatch():
    with pytest.raises(LengthMismatch):
        bray_curtis([0.5, 0.5], [0.2, 0.3, 0.5])


def _errs(values, method="m", budget=None):
    return [CellError(f"c{i}", method, budget, v) for i, v in enumerate(values)]


def test_aggregate_examples():
    a = aggregate(_errs([0.05]))
    assert (a.mean, a.se, a.n_cells) == (0.05, 0.0, 1)
    a = aggregate(_errs([0.1, 0.1, 0.1]))
    assert a.mean == pytest.approx(0.1, abs=1e-15) and a.se == pytest.approx(0.0, abs=1e-15)
    a = aggregate(_errs([0.02, 0.04, 0.06, 0.08]))
    assert a.mean == pytest.approx(0.05, abs=1e-15)
    # sample sd sqrt(0.002/3) = 0.025820; / sqrt(4)
    assert a.se == pytest.approx(math.sqrt(0.002 / 3) / 2, rel=1e-12)
    assert a.se == pytest.approx(0.01291, abs=5e-6)


def test_aggregate_rejects_bad_input():
    with pytest.raises(EmptyInput):
        aggregate([])
    with pytest.raises(QuantError):
        aggregate(_errs([0.1]) + _errs([0.2], budget=5))
    with pytest.raises(QuantError):
        CellError("c", "m", None, 1.5)


def test_aggregate_permutation_invariant():
    rng = np.random.default_rng(3)
    vals = rng.uniform(0, 1, 57).tolist()
    a = aggregate(_errs(vals))
    for _ in range(5):
        b = aggregate(_errs(rng.permutation(vals).tolist()))
        assert (a.mean, a.se) == (b.mean, b.se)


@settings(max_examples=200)
@given(simplex(3, 3), simplex(3, 3), simplex(3, 3))
def test_bray_curtis_metric_properties(p, q, r):
    assert bray_curtis(p, q) == bray_curtis(q, p)
    assert 0 <= bray_curtis(p, q) <= 1 + 1e-12
    assert bray_curtis(p, r) <= bray_curtis(p, q) + bray_curtis(q, r) + 1e-12
    # total variation: largest gap over events, attained by the set where p > q
    tv = np.clip(np.asarray(p) - np.asarray(q), 0, None).sum()
    assert bray_curtis(p, q) == pytest.approx(tv, abs=1e-12)
