"""Acceptance gate: one test per criterion, each timed against its budget.

``conftest.pytest_terminal_summary`` prints one PASS/FAIL line per criterion
with the measured quantities attached via ``record_property``.
"""

import math
import subprocess
import sys
import time
from fractions import Fraction
from itertools import combinations

import numpy as np

from quantbench.classifier import TrainConfig, loss_and_grad, train
from quantbench.cli.bench import run_benchmark
from quantbench.cli.config import BenchmarkConfig
from quantbench.core import Cell, ConfusionMatrix, Distribution, ScoreMatrix
from quantbench.metrics import CellError, aggregate, bray_curtis
from quantbench.shiftsim import coral_like, derive_seed, gen_cell, gen_source, plankton_like
from quantbench.supervised import draw_subset, offset_estimate, srs_estimate, subset_counts
from quantbench.unsupervised import classify_and_count, cm_adjust, em_adjust

SEEDS = tuple(range(50))
BUDGETS = (15, 25, 50, 100, 150)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def means_by(report):
    return {(a.method, a.budget): a.mean for a in report.aggregates}


# 1 ---------------------------------------------------------------------------


def test_criterion_01_cm_inversion_exact(record_property):
    rng = np.random.default_rng(101)
    worst = 0.0
    with Timer() as t:
        for _ in range(100):
            c = 5
            rates = np.eye(c) * rng.uniform(1, 4, c)[:, None] + rng.dirichlet(np.ones(c), size=c)
            rates /= rates.sum(axis=1, keepdims=True)
            q = rng.dirichlet(np.ones(c))
            source_mix = rng.dirichlet(np.ones(c))
            observed = q @ rates  # predicted-class rates generated exactly from (rates, q)
            est = cm_adjust(observed, ConfusionMatrix.from_rates(rates, source_mix))
            worst = max(worst, float(np.max(np.abs(est.probs - q))))
    record_property("detail", f"max Linf error {worst:.3g} (need 1e-9), {t.seconds:.2f}s")
    assert t.seconds < 1.0
    assert worst <= 1e-9


# 2 ---------------------------------------------------------------------------


def grid_mle(scores, source_prior, step=1e-4):
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    q = np.stack([grid, 1 - grid], axis=1)
    with np.errstate(divide="ignore"):
        ll = np.log((scores[None, :, :] * (q / source_prior)[:, None, :]).sum(axis=2)).sum(axis=1)
    return grid[np.argmax(ll)]


def test_criterion_02_em_matches_brute_force(record_property):
    rng = np.random.default_rng(202)
    worst_gap, worst_drop = 0.0, 0.0
    with Timer() as t:
        for _ in range(50):
            n = int(rng.integers(1, 21))
            s = rng.dirichlet(np.ones(2) * rng.uniform(0.3, 3), size=n)
            p = rng.uniform(0.1, 0.9)
            prior = np.array([p, 1 - p])
            res = em_adjust(ScoreMatrix(s), Distribution(prior))
            worst_gap = max(worst_gap, abs(res.prior.probs[0] - grid_mle(s, prior)))
            ll = res.loglik()
            worst_drop = max(worst_drop, float(np.max(ll[:-1] - ll[1:], initial=0.0)))
    record_property("detail", f"max |em - grid| {worst_gap:.2e}, max loglik drop {worst_drop:.1e}, {t.seconds:.2f}s")
    assert t.seconds < 10
    assert worst_gap <= 2e-4
    assert worst_drop <= 1e-10


# 3, 4 ------------------------------------------------------------------------


def test_criterion_03_plankton_ordering(record_property):
    cfg = BenchmarkConfig(plankton_like(), ("cc", "em", "cm"), seeds=SEEDS)
    with Timer() as t:
        m = means_by(run_benchmark(cfg))
    cc, em, cm = m["cc", None], m["em", None], m["cm", None]
    record_property("detail", f"em {em:.4f} < cm {cm:.4f} < cc {cc:.4f}, em/cc {em / cc:.2f}, {t.seconds:.1f}s")
    assert t.seconds < 60
    assert em < cm < cc
    assert em <= 0.5 * cc


def test_criterion_04_coral_ordering(record_property):
    cfg = BenchmarkConfig(coral_like(), ("cc", "em", "cm"), seeds=SEEDS)
    with Timer() as t:
        m = means_by(run_benchmark(cfg))
    cc, em, cm = m["cc", None], m["em", None], m["cm", None]
    record_property("detail", f"cc {cc:.4f} < em {em:.4f}, cm {cm:.4f}, {t.seconds:.1f}s")
    assert t.seconds < 60
    assert cc < em and cc < cm


# 5 ---------------------------------------------------------------------------


def test_criterion_05_srs_unbiased_and_consistent(record_property):
    rng = np.random.default_rng(505)
    with Timer() as t:
        # exhaustive: every b-subset of small cells, exact rational arithmetic
        for size in range(2, 9):
            labels = rng.integers(0, 3, size)
            cell = Cell("e", scores=ScoreMatrix(np.full((size, 3), 1 / 3)), truth=labels)
            for b in range(1, min(size, 4) + 1):
                total = [Fraction(0)] * 3
                subsets = list(combinations(range(size), b))
                for idx in subsets:
                    for k in labels[list(idx)]:
                        total[k] += Fraction(1, b)
                mean = [x / len(subsets) for x in total]
                assert mean == [Fraction(int((labels == k).sum()), size) for k in range(3)]
                assert srs_estimate(draw_subset(cell, b, 0), 3).c == 3

        # Monte Carlo through the library's own subset draws
        labels = rng.integers(0, 4, 500)
        cell = Cell("mc", scores=ScoreMatrix(np.full((500, 4), 0.25)), truth=labels)
        draws = np.array([srs_estimate(draw_subset(cell, 50, s), 4).probs for s in range(10_000)])
        mc_gap = float(np.max(np.abs(draws.mean(axis=0) - np.bincount(labels, minlength=4) / 500)))

        m = means_by(run_benchmark(BenchmarkConfig(plankton_like(), ("srs",), budgets=BUDGETS, seeds=SEEDS)))
        curve = [m["srs", b] for b in BUDGETS]
    record_property("detail", f"MC gap {mc_gap:.4f}, curve {' '.join(f'{v:.4f}' for v in curve)}, {t.seconds:.1f}s")
    assert t.seconds < 30
    assert mc_gap <= 0.01
    assert all(a >= b for a, b in zip(curve, curve[1:]))


# 6 ---------------------------------------------------------------------------


def test_criterion_06_da_mix_beats_srs_small_budget(record_property):
    cfg = BenchmarkConfig(coral_like(), ("srs", "da_mix"), budgets=(25,), seeds=SEEDS)
    with Timer() as t:
        m = means_by(run_benchmark(cfg))
    record_property("detail", f"da_mix {m['da_mix', 25]:.4f} < srs {m['srs', 25]:.4f}, {t.seconds:.1f}s")
    assert t.seconds < 120
    assert m["da_mix", 25] < m["srs", 25]


# 7 ---------------------------------------------------------------------------


def test_criterion_07_offset_beats_srs(record_property):
    bias = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    errs = {(m, b): [] for m in ("srs", "offset") for b in BUDGETS}
    with Timer() as t:
        for seed in SEEDS:
            scen = plankton_like().with_seed(seed)
            model = train(gen_source(scen), TrainConfig(seed=derive_seed(seed, "train"))).with_bias_offset(bias)
            for spec in scen.cells:
                cell = gen_cell(scen, spec)
                q = cell.true_distribution(scen.c)
                scores = model.posteriors(cell.features)
                cc_full = classify_and_count(scores)
                for b in BUDGETS:
                    sub = draw_subset(cell, b, derive_seed(seed, f"{cell.id}/{b}"))
                    truth_sub = srs_estimate(sub, scen.c)
                    est = offset_estimate(cc_full, subset_counts(scores, sub), truth_sub)
                    errs["srs", b].append(CellError(cell.id, "srs", b, bray_curtis(q, truth_sub), seed))
                    errs["offset", b].append(CellError(cell.id, "offset", b, bray_curtis(q, est), seed))
    m = {k: aggregate(v).mean for k, v in errs.items()}
    record_property("detail", "; ".join(f"b={b}: {m['offset', b]:.4f} vs {m['srs', b]:.4f}" for b in BUDGETS)
                    + f", {t.seconds:.1f}s")
    assert t.seconds < 60
    assert all(m["offset", b] < m["srs", b] for b in BUDGETS)


# 8 ---------------------------------------------------------------------------


def test_criterion_08_gradient_check(record_property):
    worst = 0.0
    h = 1e-6
    with Timer() as t:
        for seed in range(20):
            rng = np.random.default_rng(800 + seed)
            n, d, c = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(2, 6))
            x, y = rng.normal(size=(n, d)), rng.integers(0, c, n)
            w, bias, l2 = rng.normal(size=(c, d)), rng.normal(size=c), float(rng.uniform(0, 0.5))
            theta = np.concatenate([w.ravel(), bias])

            def f(th):
                return loss_and_grad(th[:c * d].reshape(c, d), th[c * d:], x, y, l2)[0]

            fd = np.array([(f(theta + h * e) - f(theta - h * e)) / (2 * h) for e in np.eye(theta.size)])
            _, dw, db = loss_and_grad(w, bias, x, y, l2)
            an = np.concatenate([dw.ravel(), db])
            worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(an) + np.linalg.norm(fd), 1e-12))
    record_property("detail", f"max relative error {worst:.2e}, {t.seconds:.2f}s")
    assert t.seconds < 5
    assert worst < 1e-4


# 9 ---------------------------------------------------------------------------


def test_criterion_09_metric_suite(record_property):
    def group(values):
        return aggregate([CellError(f"c{i}", "m", None, v) for i, v in enumerate(values)])

    with Timer() as t:
        assert bray_curtis([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0
        assert bray_curtis([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert bray_curtis([0.5, 0.3, 0.2], [0.4, 0.4, 0.2]) == 0.1
        a = group([0.05])
        assert (a.mean, a.se) == (0.05, 0.0)
        a = group([0.1, 0.1, 0.1])
        assert (a.mean, a.se) == (0.1, 0.0)
        a = group([0.02, 0.04, 0.06, 0.08])
        assert a.mean == 0.05 and a.se == math.sqrt(0.002 / 3) / 2 and round(a.se, 5) == 0.01291

        rng = np.random.default_rng(909)
        for _ in range(1000):
            c = int(rng.integers(2, 8))
            p, q, r = rng.dirichlet(np.ones(c), size=3)
            assert bray_curtis(p, q) == bray_curtis(q, p)
            assert bray_curtis(p, r) <= bray_curtis(p, q) + bray_curtis(q, r) + 1e-15
    record_property("detail", f"{t.seconds:.2f}s")
    assert t.seconds < 5


# 10 --------------------------------------------------------------------------

E2E_CONFIG = """
[scenario]
preset = "coral-like"
n_cells = 6
cell_size = 800
n_source = 1500

[benchmark]
methods = ["cc", "pcc", "em", "cm", "srs", "offset", "ratio", "da_mix"]
budgets = [15, 50, 150]
seeds = [0, 1, 2, 3]
"""


def test_criterion_10_end_to_end_determinism(tmp_path, record_property):
    cfg = tmp_path / "bench.toml"
    cfg.write_text(E2E_CONFIG, encoding="utf-8")
    names = ("cell_errors.csv", "aggregates.csv", "failures.csv", "report.json")
    outputs = []
    with Timer() as t:
        for run, jobs in enumerate((1, 1, 3)):
            out = tmp_path / f"run{run}"
            proc = subprocess.run(
                [sys.executable, "-m", "quantbench", "benchmark", "--config", str(cfg), "--out", str(out),
                 "--format", "csv,json", "--jobs", str(jobs)],
                capture_output=True, text=True,
            )
            assert proc.returncode == 0, proc.stderr
            outputs.append({n: (out / n).read_bytes() for n in names})
    same = all(o == outputs[0] for o in outputs)
    record_property("detail", f"3 runs (jobs 1, 1, 3) byte-identical: {same}, {t.seconds:.1f}s")
    assert t.seconds < 120
    assert same
