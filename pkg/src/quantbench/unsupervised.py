"""Quantifiers that see only the classifier's output on the target cell."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from quantbench.core import ConfusionMatrix, Distribution, ScoreMatrix, make_distribution
from quantbench.errors import AllZero, DimensionMismatch, NonFiniteLikelihood, PriorMismatch, QuantError

log = logging.getLogger(__name__)

PRIOR_FLOOR = 1e-12
EM_TOL = 1e-8
EM_MAX_ITER = 1000
DEGENERATE_DENOMINATOR = 1e-6


def _as_scores(scores) -> ScoreMatrix:
    return scores if isinstance(scores, ScoreMatrix) else ScoreMatrix(scores)


def classify_and_count(scores) -> Distribution:
    """Fraction of samples whose argmax prediction is each class."""
    s = _as_scores(scores)
    return make_distribution(np.bincount(s.hard(), minlength=s.c))


def expected_count(scores) -> Distribution:
    """Column means of the posteriors (probabilistic classify & count)."""
    s = _as_scores(scores)
    return make_distribution(s.values.mean(axis=0))


def harden(scores) -> ScoreMatrix:
    s = _as_scores(scores)
    out = np.zeros(s.shape)
    out[np.arange(s.n), s.hard()] = 1.0
    return ScoreMatrix(out)


def floor_prior(prior, floor=PRIOR_FLOOR) -> np.ndarray:
    p = np.asarray(prior, dtype=float)
    p = np.where(p > 0, p, floor)
    return p / p.sum()


@dataclass(frozen=True)
class EmResult:
    prior: Distribution
    iterations: int
    trace: List[Tuple[int, np.ndarray, float]]
    converged: bool

    def loglik(self) -> np.ndarray:
        return np.array([t[2] for t in self.trace])

    def trace_csv(self) -> str:
        """``iteration,q_0..q_{c-1},avg_loglik`` rows for convergence plots."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        c = self.prior.c
        w.writerow(["iteration"] + [f"q_{k}" for k in range(c)] + ["avg_loglik"])
        for it, q, ll in self.trace:
            w.writerow([it] + [format(v, ".17g") for v in q] + [format(ll, ".17g")])
        return buf.getvalue()

    def write_trace(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.trace_csv())


def _likelihoods(s, ratio):
    lik = s @ ratio
    if not np.all(np.isfinite(lik)) or np.any(lik <= 0):
        raise NonFiniteLikelihood("a sample has zero likelihood under the current prior; scores look corrupt")
    return lik


def em_adjust(scores, source_prior, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER) -> EmResult:
    """Re-estimate the target prior by EM on source-trained posteriors.

    E-step: reweight every posterior row by ``q(c) / p_s(c)`` and renormalize
    it. M-step: the next ``q`` is the column mean of the reweighted rows.
    Starts at the (floored) source prior and stops once no entry of ``q``
    moves by ``tol`` or more. The trace holds the mean log-likelihood
    ``mean_i log sum_c s_i(c) q(c) / p_s(c)``, which EM never decreases.
    """
    s = _as_scores(scores).values
    ps_raw = np.asarray(source_prior, dtype=float)
    if ps_raw.shape != (s.shape[1],):
        raise PriorMismatch(f"source prior has {ps_raw.size} entries for {s.shape[1]} classes")
    if not tol > 0 or max_iter < 1:
        raise QuantError("em_adjust needs tol > 0 and max_iter >= 1")
    n = s.shape[0]
    ps = floor_prior(ps_raw)
    q = ps.copy()
    ratio = q / ps
    lik = _likelihoods(s, ratio)
    trace = [(0, q.copy(), float(np.mean(np.log(lik))))]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        # mean_i of s_i(c) * ratio(c) / lik_i, without forming the n x c weights
        q_new = ratio * ((1.0 / lik) @ s) / n
        q_new /= q_new.sum()
        change = np.max(np.abs(q_new - q))
        q = q_new
        ratio = q / ps
        lik = _likelihoods(s, ratio)
        trace.append((it, q.copy(), float(np.mean(np.log(lik)))))
        if change < tol:
            converged = True
            break
    if not converged:
        log.info("EM stopped at max_iter=%d without reaching tol=%g", max_iter, tol)
    return EmResult(Distribution(q), it, trace, converged)


def binarize_confusion(confusion: ConfusionMatrix, class_weights=None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class ``(tpr, fpr)`` from a c x c confusion.

    ``fpr_i`` averages column ``i`` over the rows ``j != i``, weighted by
    ``class_weights`` (default: the class mix the confusion was counted on).
    """
    rates = confusion.rates
    c = confusion.c
    pi = confusion.class_weights() if class_weights is None else np.asarray(class_weights, dtype=float)
    if pi.shape != (c,):
        raise DimensionMismatch(f"{pi.size} class weights for a {c}-class confusion")
    tpr = np.diag(rates).copy()
    fpr = np.empty(c)
    for i in range(c):
        others = np.arange(c) != i
        wts = pi[others]
        if wts.sum() <= 0:
            wts = np.ones(c - 1)
        fpr[i] = wts @ rates[others, i] / wts.sum()
    return tpr, fpr


def cm_adjust(raw, confusion: ConfusionMatrix, class_weights=None, diagnostics: Optional[list] = None) -> Distribution:
    """Correct classify & count output one class at a time.

    For class ``i`` the confusion is collapsed to a 2 x 2 table (``i`` vs
    rest) and ``raw_i = tpr_i q_i + fpr_i (1 - q_i)`` is solved for ``q_i``.
    Results are clipped to [0, 1] and renormalized. Classes with
    ``|tpr_i - fpr_i| < 1e-6`` keep their raw value; an all-zero result falls
    back to uniform. Both fallbacks append a note to ``diagnostics``.
    """
    r = np.asarray(raw, dtype=float)
    if r.shape != (confusion.c,):
        raise DimensionMismatch(f"raw distribution has {r.size} classes, confusion has {confusion.c}")
    tpr, fpr = binarize_confusion(confusion, class_weights)
    q = r.copy()
    for i in range(r.size):
        den = tpr[i] - fpr[i]
        if abs(den) < DEGENERATE_DENOMINATOR:
            _note(diagnostics, f"class {i}: tpr - fpr = {den:.3g}, kept raw count")
            continue
        q[i] = (r[i] - fpr[i]) / den
    q = np.clip(q, 0.0, 1.0)
    try:
        return make_distribution(q)
    except AllZero:
        _note(diagnostics, "every corrected class clipped to 0, returned uniform")
        return Distribution.uniform(r.size)


def _note(diagnostics, msg):
    log.debug(msg)
    if diagnostics is not None:
        diagnostics.append(msg)
