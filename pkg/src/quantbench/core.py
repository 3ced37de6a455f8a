"""Domain types shared by every estimator.

Classes are positional (``0 .. c-1``); names only appear in reports. All
containers are read-only after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from quantbench.errors import AllZero, DimensionMismatch, NegativeCount, QuantError

SIMPLEX_TOL = 1e-9
SCORE_ROW_TOL = 1e-6


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector over ``c >= 2`` classes."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size < 2:
            raise DimensionMismatch(f"distribution needs a 1-d vector of >= 2 entries, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise QuantError(f"distribution entries must lie in [0, 1]: {p}")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise QuantError(f"distribution sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @property
    def c(self) -> int:
        return self.probs.size

    def __len__(self):
        return self.c

    def __iter__(self):
        return iter(self.probs.tolist())

    def __getitem__(self, i):
        return self.probs[i]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def __repr__(self):
        return f"Distribution({np.array2string(self.probs, precision=4)})"

    @classmethod
    def uniform(cls, c: int) -> "Distribution":
        return cls(np.full(c, 1.0 / c))


def make_distribution(counts: Sequence[float]) -> Distribution:
    """Normalize non-negative ``counts`` to sum to one.

    Raises ``AllZero`` when every entry is zero (callers pick their own
    fallback) and ``NegativeCount`` when any entry is negative.
    """
    v = np.asarray(counts, dtype=float)
    if np.any(v < 0):
        raise NegativeCount(f"negative count in {v}")
    total = v.sum()
    if total <= 0:
        raise AllZero("all counts are zero")
    p = v / total
    # re-normalizing once more pins the sum to 1 to within one ulp
    return Distribution(p / p.sum())


def argmax_label(row) -> int:
    """Index of the largest entry; ties go to the lowest index."""
    # np.argmax already returns the first occurrence of the maximum
    return int(np.argmax(np.asarray(row)))


def hard_labels(scores) -> np.ndarray:
    return np.argmax(np.asarray(scores), axis=1)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """``n x c`` per-sample class posteriors."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise DimensionMismatch(f"score matrix must be n x c with n >= 1, c >= 2; got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise QuantError("score entries must lie in [0, 1]")
        dev = np.abs(v.sum(axis=1) - 1.0)
        if np.any(dev > SCORE_ROW_TOL):
            bad = int(np.argmax(dev))
            raise QuantError(f"score row {bad} sums to {v[bad].sum()!r}")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def c(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def hard(self) -> np.ndarray:
        return hard_labels(self.values)

    def take(self, indices) -> "ScoreMatrix":
        return ScoreMatrix(self.values[np.asarray(indices)])


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    c: int

    def __post_init__(self):
        x = _frozen(self.features)
        if x.ndim == 1:
            x = _frozen(x.reshape(-1, 1))
        y = _frozen(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DimensionMismatch(f"features must be n x d, got {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} feature rows but {y.shape} labels")
        if self.c < 2:
            raise QuantError("need at least two classes")
        if y.size and (y.min() < 0 or y.max() >= self.c):
            raise QuantError(f"labels must lie in [0, {self.c})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def prior(self) -> Distribution:
        return make_distribution(self.class_counts())

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.c)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts ``(true i, predicted j)`` and the row-stochastic rates derived from them.

    Build with :meth:`from_counts` for the usual add-one smoothed rates. The
    row sums of ``counts`` double as the class mix the rates were measured on.
    """

    counts: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        counts = _frozen(self.counts)
        rates = _frozen(self.rates)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape != rates.shape:
            raise DimensionMismatch(f"confusion counts {counts.shape} / rates {rates.shape} must be matching c x c")
        if np.any(counts < 0):
            raise NegativeCount("confusion counts must be non-negative")
        if np.any(rates < 0) or np.any(rates > 1):
            raise QuantError("confusion rates must lie in [0, 1]")
        if np.any(np.abs(rates.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise QuantError("confusion rate rows must sum to 1")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_counts(cls, counts, smoothing: float = 1.0) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=float)
        sm = counts + smoothing
        rates = sm / sm.sum(axis=1, keepdims=True)
        return cls(counts, rates)

    @classmethod
    def from_rates(cls, rates, class_weights=None, total: float = 1.0) -> "ConfusionMatrix":
        """Wrap known rates; ``class_weights`` (default uniform) fills in the counts."""
        rates = np.asarray(rates, dtype=float)
        c = rates.shape[0]
        w = np.full(c, 1.0 / c) if class_weights is None else np.asarray(class_weights, dtype=float)
        return cls(total * w[:, None] * rates, rates)

    @property
    def c(self) -> int:
        return self.counts.shape[0]

    def class_weights(self) -> np.ndarray:
        """Share of each true class among the samples the rates were measured on."""
        rows = self.counts.sum(axis=1)
        if rows.sum() <= 0:
            return np.full(self.c, 1.0 / self.c)
        return rows / rows.sum()


@dataclass(frozen=True, eq=False)
class Cell:
    """One evaluation unit. Holds either raw features or a score matrix.

    ``truth`` is only read by the evaluation code and by the supervised
    estimators' simulated annotator.
    """

    id: str
    features: Optional[np.ndarray] = None
    scores: Optional[ScoreMatrix] = None
    truth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.features is None) == (self.scores is None):
            raise QuantError("a cell holds exactly one of features or scores")
        if self.features is not None:
            x = _frozen(self.features)
            if x.ndim != 2 or x.shape[0] < 1:
                raise DimensionMismatch(f"cell features must be n x d with n >= 1, got {x.shape}")
            object.__setattr__(self, "features", x)
        elif not isinstance(self.scores, ScoreMatrix):
            object.__setattr__(self, "scores", ScoreMatrix(self.scores))
        if self.truth is not None:
            t = _frozen(self.truth, dtype=np.int64)
            if t.shape != (self.size,):
                raise DimensionMismatch(f"truth has {t.shape[0]} labels for {self.size} samples")
            object.__setattr__(self, "truth", t)

    @property
    def kind(self) -> str:
        return "features" if self.features is not None else "scores"

    @property
    def size(self) -> int:
        if self.features is not None:
            return self.features.shape[0]
        return self.scores.n

    def __len__(self):
        return self.size

    def true_distribution(self, c: int) -> Distribution:
        if self.truth is None:
            raise QuantError(f"cell {self.id!r} carries no ground truth")
        return make_distribution(np.bincount(self.truth, minlength=c))
