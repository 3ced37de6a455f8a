import numpy as np
import pytest

from quantbench.classifier import TrainConfig, train
from quantbench.errors import ConfigError, DimensionMismatch
from quantbench.metrics import bray_curtis
from quantbench.shiftsim import (
    CellSpec,
    ScenarioConfig,
    bayes_posteriors,
    coral_like,
    derive_seed,
    gen_cell,
    gen_source,
    plankton_like,
    preset,
)
from quantbench.unsupervised import classify_and_count, em_adjust

MEANS = np.array([[0.0, 0.0], [2.5, 0.0], [0.0, 2.5]])


def scenario(**kw):
    args = dict(class_means=MEANS, class_cov_scale=1.0, source_prior=[0.5, 0.3, 0.2], n_source=500, seed=1)
    args.update(kw)
    return ScenarioConfig(**args)


def test_derive_seed_is_portable():
    # first 8 bytes (little endian) of sha256(b"0/source")
    assert derive_seed(0, "source") == 7905529994213078073
    assert derive_seed(0, "a") != derive_seed(1, "a") != derive_seed(0, "b")


def test_config_validation():
    with pytest.raises(ConfigError):
        scenario(n_source=0)
    with pytest.raises(DimensionMismatch):
        scenario(source_prior=[0.5, 0.5])
    with pytest.raises(DimensionMismatch):
        scenario(cells=[CellSpec("a", [0.2, 0.8], 10)])
    with pytest.raises(ConfigError):
        scenario(cells=[CellSpec("a", [0.2, 0.3, 0.5], 10), CellSpec("a", [0.2, 0.3, 0.5], 10)])
    with pytest.raises(ConfigError):
        CellSpec("a", [0.2, 0.3, 0.5], 0)


def test_degenerate_source_prior():
    src = gen_source(scenario(source_prior=[1.0, 0.0, 0.0]))
    assert np.all(src.labels == 0)


def test_source_label_frequencies():
    src = gen_source(scenario(n_source=100_000))
    freq = np.bincount(src.labels, minlength=3) / src.n
    assert np.max(np.abs(freq - [0.5, 0.3, 0.2])) <= 0.01


def test_bit_identical_and_order_free():
    spec_a, spec_b = CellSpec("a", [0.2, 0.3, 0.5], 50), CellSpec("b", [0.6, 0.2, 0.2], 50)
    s1 = scenario(cells=[spec_a, spec_b])
    s2 = scenario(cells=[spec_b, spec_a])
    assert gen_source(s1).features.tobytes() == gen_source(s2).features.tobytes()
    assert gen_cell(s1, spec_a).features.tobytes() == gen_cell(s2, spec_a).features.tobytes()
    assert gen_cell(s1, spec_a).truth.tobytes() == gen_cell(s1, spec_a).truth.tobytes()
    assert gen_cell(s1, spec_a).features.tobytes() != gen_cell(s1.with_seed(2), spec_a).features.tobytes()


def test_no_shift_cell_matches_source():
    scen = scenario(n_source=20_000, cells=[CellSpec("same", [0.5, 0.3, 0.2], 20_000)])
    src, cell = gen_source(scen), gen_cell(scen, scen.cells[0])
    for k in range(3):
        a, b = src.features[src.labels == k], cell.features[cell.truth == k]
        se = np.sqrt(1 / len(a) + 1 / len(b))
        assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) <= 3 * se)
    freq = np.bincount(cell.truth, minlength=3) / cell.size
    assert np.max(np.abs(freq - [0.5, 0.3, 0.2])) <= 0.02


def test_pure_label_shift_cell_em_recovers_prior():
    scen = scenario(n_source=3000, cells=[CellSpec("t", [0.7, 0.2, 0.1], 3000)], seed=4)
    src = gen_source(scen)
    model = train(src, TrainConfig(seed=4))
    cell = gen_cell(scen, scen.cells[0])
    est = em_adjust(model.posteriors(cell.features), src.prior()).prior
    assert bray_curtis(cell.true_distribution(3), est) <= 0.05
    # the exact posteriors agree
    exact = em_adjust(bayes_posteriors(scen, cell.features), scen.source_prior).prior
    assert bray_curtis(cell.true_distribution(3), exact) <= 0.05


def test_large_drift_hurts_classify_and_count():
    sep = 2.5
    drift = np.zeros((3, 2))
    drift[0] = [2 * sep, 0.0]  # class 0 moved twice the separation, onto and past class 1
    scen = scenario(n_source=2000, cells=[CellSpec("flat", [0.4, 0.3, 0.3], 2000),
                                          CellSpec("drift", [0.4, 0.3, 0.3], 2000, drift)])
    model = train(gen_source(scen), TrainConfig(seed=0))
    errs = {}
    for spec in scen.cells:
        cell = gen_cell(scen, spec)
        errs[spec.id] = bray_curtis(cell.true_distribution(3), classify_and_count(model.posteriors(cell.features)))
    assert errs["drift"] > errs["flat"]


def test_bayes_posteriors_rows_on_simplex():
    scen = scenario()
    post = bayes_posteriors(scen, np.random.default_rng(0).normal(size=(20, 2)) * 5)
    np.testing.assert_allclose(post.sum(axis=1), 1.0)


def test_presets_shape():
    p = plankton_like()
    assert len(p.cells) == 21 and not any(s.drifted for s in p.cells)
    assert all(s.target_prior.probs.argmax() == 0 for s in p.cells)
    c = coral_like()
    assert len(c.cells) == 15 and all(s.drifted for s in c.cells)
    assert preset("coral-like").to_dict() == c.to_dict()
    with pytest.raises(ConfigError):
        preset("kelp-like")


def test_scenario_dict_round_trip():
    c = coral_like(n_cells=3, seed=9)
    back = ScenarioConfig.from_dict(c.to_dict())
    assert back.to_dict() == c.to_dict()
    cell_a, cell_b = gen_cell(c, c.cells[1]), gen_cell(back, back.cells[1])
    assert cell_a.features.tobytes() == cell_b.features.tobytes()
