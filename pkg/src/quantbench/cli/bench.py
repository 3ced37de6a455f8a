"""Run every (cell, method, budget, seed) combination and collect Bray-Curtis errors.

Work is split by seed. With ``jobs > 1`` seeds run in worker processes;
rows are sorted into a canonical order afterwards, so the report does not
depend on scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import groupby
from typing import Dict, List, Optional

import numpy as np

from quantbench.classifier import confusion_counts, cross_val_confusion, train
from quantbench.cli.config import BenchmarkConfig, ScoresSource
from quantbench.cli.wire import ingest_scores, read_labeled
from quantbench.core import ConfusionMatrix, make_distribution
from quantbench.errors import FeaturesUnavailable, QuantError
from quantbench.metrics import AggregateError, CellError, aggregate, bray_curtis
from quantbench.shiftsim import ScenarioConfig, derive_seed, gen_cell, gen_source
from quantbench.supervised import (
    da_mix_quantify,
    draw_subset,
    offset_estimate,
    ratio_estimate,
    srs_estimate,
    subset_counts,
)
from quantbench.unsupervised import classify_and_count, cm_adjust, em_adjust, expected_count

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Failure:
    cell_id: str
    method: str
    budget: Optional[int]
    seed: Optional[int]
    error: str


@dataclass
class BenchmarkReport:
    rows: List[CellError]
    failures: List[Failure]
    aggregates: List[AggregateError]
    provenance: dict
    class_names: List[str] = field(default_factory=list)

    def failed_methods(self) -> List[str]:
        """Methods that produced no successful row at all."""
        ok = {r.method for r in self.rows}
        return sorted({f.method for f in self.failures} - ok)

    def aggregate_for(self, method: str, budget: Optional[int] = None) -> AggregateError:
        for a in self.aggregates:
            if a.method == method and a.budget == budget:
                return a
        raise KeyError((method, budget))


def sort_key(row):
    return (row.method, -1 if row.budget is None else row.budget, row.cell_id, -1 if row.seed is None else row.seed)


def aggregate_rows(rows: List[CellError]) -> List[AggregateError]:
    def group(r):
        return (r.method, -1 if r.budget is None else r.budget)

    rows = sorted(rows, key=sort_key)
    return [aggregate(list(g)) for _, g in groupby(rows, key=group)]


class _Context:
    """Everything one seed needs: cells, scores, and whatever the methods require."""

    def __init__(self, cells, scores, source_prior, confusion=None, model=None, source=None, c=None):
        self.cells = cells
        self.scores = scores
        self.source_prior = source_prior
        self.confusion = confusion
        self.model = model
        self.source = source
        self.c = c


def _simulated_context(cfg: BenchmarkConfig, scenario: ScenarioConfig, seed: int) -> _Context:
    scen = scenario.with_seed(seed)
    source = gen_source(scen)
    cells = [gen_cell(scen, spec) for spec in scen.cells]
    if set(cfg.methods) <= {"srs"}:
        return _Context(cells, [None] * len(cells), source.prior(), source=source, c=scen.c)
    tcfg = replace(cfg.train, seed=derive_seed(seed, "train"))
    model = train(source, tcfg)
    confusion = cross_val_confusion(source, tcfg, cfg.cv_folds) if "cm" in cfg.methods else None
    scores = [model.posteriors(cell.features) for cell in cells]
    return _Context(cells, scores, source.prior(), confusion, model, source, scen.c)


def _scores_context(cfg: BenchmarkConfig, src: ScoresSource) -> _Context:
    data = ingest_scores(src.scores)
    c = len(data.classes)
    prior, confusion = None, None
    if src.source_scores is not None:
        held, header = read_labeled(src.source_scores)
        if header.kind != "scores" or header.classes != data.classes:
            raise QuantError("source_scores must be a labeled scores file with the cells' class catalog")
        prior = held.prior()
        confusion = ConfusionMatrix.from_counts(confusion_counts(held.labels, held.features.argmax(axis=1), c))
    return _Context(data.cells, [cell.scores for cell in data.cells], prior, confusion, c=c)


def _unsupervised(method, cfg, ctx, scores):
    if method == "cc":
        return classify_and_count(scores)
    if method == "pcc":
        return expected_count(scores)
    if method == "em":
        if ctx.source_prior is None:
            raise QuantError("em needs a source prior (source_scores)")
        return em_adjust(scores, ctx.source_prior, **cfg.params("em")).prior
    if method == "cm":
        if ctx.confusion is None:
            raise QuantError("cm needs a source confusion matrix (source_scores)")
        return cm_adjust(classify_and_count(scores), ctx.confusion)
    raise QuantError(f"unknown unsupervised method {method!r}")


def _supervised(method, cfg, ctx, cell, scores, subset, cc_full, seed, b):
    truth_sub = srs_estimate(subset, ctx.c)
    if method == "srs":
        return truth_sub
    if method == "offset":
        return offset_estimate(cc_full, subset_counts(scores, subset), truth_sub)
    if method == "ratio":
        return ratio_estimate(cc_full, subset_counts(scores, subset), truth_sub)
    if method == "da_mix":
        if ctx.model is None:
            raise FeaturesUnavailable(f"cell {cell.id!r} only has scores; DA-mix needs raw features")
        ft = replace(cfg.fine_tune, seed=derive_seed(seed, f"{cell.id}/{b}/fine_tune"))
        return da_mix_quantify(ctx.model, ctx.source, cell, subset, ft)
    raise QuantError(f"unknown supervised method {method!r}")


def run_seed(cfg: BenchmarkConfig, seed: int):
    rows, failures = [], []
    try:
        if isinstance(cfg.scenario, ScenarioConfig):
            ctx = _simulated_context(cfg, cfg.scenario, seed)
        else:
            ctx = _scores_context(cfg, cfg.scenario)
    except QuantError as exc:
        log.error("seed %d: setup failed: %s", seed, exc)
        for m in cfg.methods:
            budgets = [None] if m not in cfg.supervised else list(cfg.budgets)
            for b in budgets:
                failures.append(Failure("*", m, b, seed, f"setup: {exc}"))
        return rows, failures

    for cell, scores in zip(ctx.cells, ctx.scores):
        if cell.truth is None:
            for m in cfg.methods:
                failures.append(Failure(cell.id, m, None, seed, "cell has no truth labels"))
            continue
        q = make_distribution(np.bincount(cell.truth, minlength=ctx.c))
        cc_full = classify_and_count(scores) if scores is not None else None
        for m in cfg.unsupervised:
            try:
                rows.append(CellError(cell.id, m, None, bray_curtis(q, _unsupervised(m, cfg, ctx, scores)), seed))
            except QuantError as exc:
                failures.append(Failure(cell.id, m, None, seed, str(exc)))
        for b in cfg.budgets if cfg.supervised else ():
            try:
                subset = draw_subset(cell, int(b), derive_seed(seed, f"{cell.id}/{b}"))
            except QuantError as exc:
                failures.extend(Failure(cell.id, m, int(b), seed, str(exc)) for m in cfg.supervised)
                continue
            for m in cfg.supervised:
                try:
                    est = _supervised(m, cfg, ctx, cell, scores, subset, cc_full, seed, b)
                    rows.append(CellError(cell.id, m, int(b), bray_curtis(q, est), seed))
                except QuantError as exc:
                    failures.append(Failure(cell.id, m, int(b), seed, str(exc)))
    return rows, failures


def _run_seed_star(args):
    return run_seed(*args)


def run_benchmark(cfg: BenchmarkConfig, jobs: int = 1) -> BenchmarkReport:
    tasks = [(cfg, int(s)) for s in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_star, tasks))
    else:
        results = [run_seed(*t) for t in tasks]
    rows = sorted((r for res in results for r in res[0]), key=sort_key)
    failures = sorted((f for res in results for f in res[1]), key=sort_key)
    if isinstance(cfg.scenario, ScenarioConfig):
        names = cfg.scenario.names()
    else:
        try:
            names = ingest_scores(cfg.scenario.scores).classes
        except (QuantError, OSError):
            names = []
    return BenchmarkReport(rows, failures, aggregate_rows(rows) if rows else [], cfg.provenance(), names)
