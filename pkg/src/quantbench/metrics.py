"""Per-cell Bray-Curtis error and mean +- standard error across cells."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from quantbench.errors import EmptyInput, LengthMismatch, QuantError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellError:
    cell_id: str
    method: str
    budget: Optional[int]
    bray_curtis: float
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.bray_curtis <= 1.0 + 1e-12):
            raise QuantError(f"Bray-Curtis error {self.bray_curtis!r} outside [0, 1]")


@dataclass(frozen=True)
class AggregateError:
    method: str
    budget: Optional[int]
    mean: float
    se: float
    n_cells: int


def bray_curtis(q, q_hat) -> float:
    """Half the L1 distance between two normalized class distributions."""
    a = np.asarray(q, dtype=float)
    b = np.asarray(q_hat, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"cannot compare distributions of length {a.size} and {b.size}")
    return math.fsum(np.abs(a - b).tolist()) / 2.0


def aggregate(errors: Iterable[CellError]) -> AggregateError:
    """Mean and standard error (sample sd / sqrt(n)) of one method/budget group.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    the order of ``errors``.
    """
    errors = list(errors)
    if not errors:
        raise EmptyInput("no cell errors to aggregate")
    keys = {(e.method, e.budget) for e in errors}
    if len(keys) > 1:
        raise QuantError(f"mixed method/budget groups: {sorted(keys, key=str)}")
    values = [e.bray_curtis for e in errors]
    n = len(values)
    mean = math.fsum(values) / n
    # one correction pass removes the rounding of the division (n copies of x give x)
    mean += math.fsum(v - mean for v in values) / n
    if n == 1:
        log.info("single cell for %s/%s: standard error reported as 0", errors[0].method, errors[0].budget)
        se = 0.0
    else:
        var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        se = math.sqrt(var / n)
    return AggregateError(errors[0].method, errors[0].budget, mean, se, n)
