"""Class-distribution quantification under dataset shift.

Estimators (classify & count, EM prior adjustment, binarized confusion-matrix
correction, simple random sampling, offset/ratio estimators, DA-mix), a
Bray-Curtis evaluation protocol and a Gaussian shift simulator.
"""

__version__ = "0.1.0"

from quantbench.core import (
    Cell,
    ConfusionMatrix,
    Distribution,
    LabeledDataset,
    ScoreMatrix,
    argmax_label,
    make_distribution,
)
from quantbench.metrics import aggregate, bray_curtis

__all__ = [
    "Cell",
    "ConfusionMatrix",
    "Distribution",
    "LabeledDataset",
    "ScoreMatrix",
    "aggregate",
    "argmax_label",
    "bray_curtis",
    "make_distribution",
]
