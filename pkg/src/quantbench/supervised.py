"""Quantifiers that also get ``b`` randomly chosen, human-labeled target samples."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from quantbench.classifier import FINE_TUNE_DEFAULT, SoftmaxClassifier, TrainConfig, fine_tune
from quantbench.core import Cell, Distribution, LabeledDataset, ScoreMatrix, make_distribution
from quantbench.errors import AllZero, BudgetExceedsCell, DimensionMismatch, FeaturesUnavailable, QuantError
from quantbench.unsupervised import classify_and_count

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LabeledSubset:
    indices: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64)
        lab = np.array(self.labels, dtype=np.int64)
        if idx.ndim != 1 or idx.size < 1:
            raise QuantError("a labeled subset needs at least one index")
        if lab.shape != idx.shape:
            raise DimensionMismatch("one label per index")
        if np.unique(idx).size != idx.size or idx.min() < 0:
            raise QuantError("subset indices must be distinct and non-negative")
        idx.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "labels", lab)

    @property
    def b(self) -> int:
        return self.indices.size


def draw_subset(cell: Cell, b: int, seed: int) -> LabeledSubset:
    """First ``b`` entries of a seeded permutation of the cell, with their true labels."""
    if cell.truth is None:
        raise QuantError(f"cell {cell.id!r} has no labels to reveal")
    if not 1 <= b <= cell.size:
        raise BudgetExceedsCell(f"budget {b} outside [1, {cell.size}] for cell {cell.id!r}")
    idx = np.random.Generator(np.random.PCG64(seed)).permutation(cell.size)[:b]
    return LabeledSubset(idx, cell.truth[idx])


def srs_estimate(subset: LabeledSubset, c: int) -> Distribution:
    return make_distribution(np.bincount(subset.labels, minlength=c)[:c])


def subset_counts(scores: ScoreMatrix, subset: LabeledSubset) -> Distribution:
    """Classify & count restricted to the labeled subset."""
    return classify_and_count(scores.take(subset.indices))


def _finish(raw, fallback, diagnostics, name):
    q = np.clip(raw, 0.0, 1.0)
    try:
        return make_distribution(q)
    except AllZero:
        msg = f"{name}: corrected vector clipped to zero, fell back to simple random sampling"
        log.debug(msg)
        if diagnostics is not None:
            diagnostics.append(msg)
        return fallback if isinstance(fallback, Distribution) else make_distribution(fallback)


def _check_same_c(*ds):
    if len({np.asarray(d).size for d in ds}) != 1:
        raise DimensionMismatch("estimator inputs must cover the same classes")


def offset_estimate(cc_full, cc_subset, truth_subset, diagnostics: Optional[list] = None) -> Distribution:
    """Difference estimator: subtract the bias seen on the subset from the full count.

    ``q = cc_full + (truth_subset - cc_subset)``, clipped and renormalized.
    """
    _check_same_c(cc_full, cc_subset, truth_subset)
    full, sub, truth = (np.asarray(v, dtype=float) for v in (cc_full, cc_subset, truth_subset))
    return _finish(full + (truth - sub), truth_subset, diagnostics, "offset")


def ratio_estimate(cc_full, cc_subset, truth_subset, diagnostics: Optional[list] = None) -> Distribution:
    """Per-class ratio estimator ``cc_full * truth_subset / cc_subset``.

    Classes never predicted inside the subset take ``truth_subset`` directly.
    """
    _check_same_c(cc_full, cc_subset, truth_subset)
    full, sub, truth = (np.asarray(v, dtype=float) for v in (cc_full, cc_subset, truth_subset))
    raw = truth.copy()
    seen = sub > 0
    raw[seen] = full[seen] * truth[seen] / sub[seen]
    if diagnostics is not None and not seen.all():
        diagnostics.append(f"ratio: classes {np.flatnonzero(~seen).tolist()} unseen in subset, used sample share")
    return _finish(raw, truth_subset, diagnostics, "ratio")


def da_mix_quantify(model: SoftmaxClassifier, source: LabeledDataset, cell: Cell, subset: LabeledSubset,
                    cfg: TrainConfig = FINE_TUNE_DEFAULT) -> Distribution:
    """Fine-tune on the 75/25 source/target mixture, then classify & count the cell."""
    if cell.features is None:
        raise FeaturesUnavailable(f"cell {cell.id!r} only has scores; DA-mix needs raw features")
    if subset.indices.max() >= cell.size:
        raise QuantError("subset indices fall outside the cell")
    target = LabeledDataset(cell.features[subset.indices], subset.labels, model.c)
    tuned = fine_tune(model, source, target, cfg)
    return classify_and_count(tuned.posteriors(cell.features))
