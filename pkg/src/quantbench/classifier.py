"""Multinomial logistic regression: the classifier ``f`` behind every quantifier.

Trained by seeded mini-batch gradient descent on L2-penalized cross-entropy.
All randomness goes through ``numpy.random.Generator(PCG64(seed))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from quantbench.core import ConfusionMatrix, LabeledDataset, ScoreMatrix
from quantbench.errors import DegenerateData, DimensionMismatch, EmptyHoldout, EmptyTarget, QuantError

SOURCE_SHARE = 0.75


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1.0
    l2_penalty: float = 1e-4
    batch_size: int = 128
    seed: int = 0
    lr_schedule: str = "linear"  # "linear": lr * (epochs - e) / epochs in epoch e; "constant"

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise QuantError(f"epochs must be an integer >= 1, got {self.epochs!r}")
        if not self.learning_rate > 0:
            raise QuantError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise QuantError("l2_penalty must be non-negative")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise QuantError("batch_size must be an integer >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise QuantError("seed must fit in an unsigned 64-bit integer")
        if self.lr_schedule not in ("linear", "constant"):
            raise QuantError(f"unknown lr_schedule {self.lr_schedule!r}")

    def rate(self, epoch: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        return self.learning_rate * (self.epochs - epoch) / self.epochs


FINE_TUNE_DEFAULT = TrainConfig(epochs=3)


@dataclass(frozen=True, eq=False)
class SoftmaxClassifier:
    weights: np.ndarray  # c x d
    biases: np.ndarray  # c
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.biases, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DimensionMismatch(f"weights {w.shape} and biases {b.shape} disagree")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def c(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    def logits(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] != self.d:
            raise DimensionMismatch(f"model expects {self.d} features, got {x.shape[1]}")
        return x @ self.weights.T + self.biases

    def posteriors(self, features) -> ScoreMatrix:
        return ScoreMatrix(softmax(self.logits(features)))

    def predict(self, features) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)

    def with_bias_offset(self, offset) -> "SoftmaxClassifier":
        """Copy with ``offset`` added to the biases (a fixed, known prediction bias)."""
        return SoftmaxClassifier(self.weights, self.biases + np.asarray(offset, dtype=float), dict(self.train_meta))

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "d": self.d,
            "weights": self.weights.ravel().tolist(),
            "biases": self.biases.tolist(),
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SoftmaxClassifier":
        c, d = int(doc["c"]), int(doc["d"])
        w = np.asarray(doc["weights"], dtype=float)
        if w.size != c * d:
            raise DimensionMismatch(f"{w.size} weights stored for a {c} x {d} model")
        return cls(w.reshape(c, d), doc["biases"], dict(doc.get("train_meta", {})))

    def save(self, path):
        # json writes floats with repr(), which round-trips exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SoftmaxClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def posteriors(model: SoftmaxClassifier, features) -> ScoreMatrix:
    return model.posteriors(features)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _one_hot(labels, c):
    y = np.zeros((labels.shape[0], c))
    y[np.arange(labels.shape[0]), labels] = 1.0
    return y


def loss_and_grad(weights, biases, features, labels, l2_penalty=0.0):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient.

    Biases are not penalized. Returns ``(loss, dW, db)``.
    """
    x = np.asarray(features, dtype=float)
    y = _one_hot(np.asarray(labels), weights.shape[0])
    n = x.shape[0]
    z = x @ weights.T + biases
    logp = _log_softmax(z)
    loss = -np.sum(y * logp) / n + 0.5 * l2_penalty * np.sum(weights * weights)
    resid = (np.exp(logp) - y) / n
    dw = resid.T @ x + l2_penalty * weights
    db = resid.sum(axis=0)
    return loss, dw, db


def stable_learning_rate(features, l2_penalty=0.0) -> float:
    """``1/L`` for the Lipschitz bound ``L`` of the full-batch loss gradient.

    The softmax cross-entropy Hessian in the logits is bounded by ``I/2``,
    giving ``L <= lambda_max([X 1]^T [X 1] / n) / 2 + l2``. Full-batch
    descent at any rate up to this value never increases the loss.
    """
    x = np.asarray(features, dtype=float)
    xa = np.hstack([x, np.ones((x.shape[0], 1))])
    lam = np.linalg.eigvalsh(xa.T @ xa / x.shape[0])[-1]
    return 1.0 / (0.5 * lam + l2_penalty)


def _step(w, b, x, y, lr, l2):
    _, dw, db = loss_and_grad(w, b, x, y, l2)
    w -= lr * dw
    b -= lr * db


def _meta(cfg, epochs_run, loss, **extra):
    meta = {"epochs": int(epochs_run), "final_loss": float(loss), "seed": int(cfg.seed)}
    meta.update(extra)
    return meta


def train(data: LabeledDataset, cfg: TrainConfig = TrainConfig(), loss_history: list | None = None) -> SoftmaxClassifier:
    """Fit from zero weights. Same data and seed give bit-identical weights.

    The default linear schedule shrinks the step every epoch, so the last
    iterate settles near the optimum instead of rattling around it with
    mini-batch noise; quantifiers that trust the posteriors (EM) need that.

    If ``loss_history`` is given, the full-data loss after each epoch is
    appended to it.
    """
    if data.n < 1 or np.unique(data.labels).size < 2:
        raise DegenerateData("training data must contain at least two distinct classes")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x, y = data.features, data.labels
    w = np.zeros((data.c, data.d))
    b = np.zeros(data.c)
    bs = cfg.batch_size
    for epoch in range(cfg.epochs):
        lr = cfg.rate(epoch)
        order = rng.permutation(data.n)
        for start in range(0, data.n, bs):
            idx = order[start:start + bs]
            _step(w, b, x[idx], y[idx], lr, cfg.l2_penalty)
        if loss_history is not None:
            loss_history.append(loss_and_grad(w, b, x, y, cfg.l2_penalty)[0])
    loss = loss_and_grad(w, b, x, y, cfg.l2_penalty)[0]
    return SoftmaxClassifier(w, b, _meta(cfg, cfg.epochs, loss))


def fine_tune(model: SoftmaxClassifier, source: LabeledDataset, target_labeled: LabeledDataset,
              cfg: TrainConfig = FINE_TUNE_DEFAULT) -> SoftmaxClassifier:
    """Continue training on a 75% source / 25% target stream.

    One epoch is ``source.n`` draws. Each draw is a target sample (uniform,
    with replacement) with probability 0.25, otherwise the next sample of a
    fresh source permutation. Draws are cut into mini-batches in stream order.
    """
    if target_labeled.n < 1:
        raise EmptyTarget("fine-tuning needs at least one labeled target sample")
    if source.d != model.d or target_labeled.d != model.d:
        raise DimensionMismatch("source, target and model feature widths must agree")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    w = np.array(model.weights)
    b = np.array(model.biases)
    n = source.n
    xs = np.vstack([source.features, target_labeled.features])
    ys = np.concatenate([source.labels, target_labeled.labels])
    n_target_draws = 0
    for epoch in range(cfg.epochs):
        lr = cfg.rate(epoch)
        pick = rng.permutation(n)
        from_target = rng.random(n) >= SOURCE_SHARE
        pick[from_target] = n + rng.integers(0, target_labeled.n, size=int(from_target.sum()))
        n_target_draws += int(from_target.sum())
        for start in range(0, n, cfg.batch_size):
            idx = pick[start:start + cfg.batch_size]
            _step(w, b, xs[idx], ys[idx], lr, cfg.l2_penalty)
    loss = loss_and_grad(w, b, xs, ys, cfg.l2_penalty)[0]
    meta = _meta(cfg, cfg.epochs, loss, fine_tuned_from=dict(model.train_meta), target_draws=n_target_draws)
    return SoftmaxClassifier(w, b, meta)


def confusion_counts(true_labels, predicted, c) -> np.ndarray:
    counts = np.zeros((c, c))
    np.add.at(counts, (np.asarray(true_labels), np.asarray(predicted)), 1.0)
    return counts


def estimate_confusion(model: SoftmaxClassifier, heldout: LabeledDataset, smoothing: float = 1.0) -> ConfusionMatrix:
    """Confusion of ``model`` on ``heldout``; rates are add-one smoothed.

    ``heldout`` must not overlap the training data. That is not checked.
    """
    if heldout.n == 0:
        raise EmptyHoldout("cannot estimate a confusion matrix from zero samples")
    counts = confusion_counts(heldout.labels, model.predict(heldout.features), model.c)
    return ConfusionMatrix.from_counts(counts, smoothing)


def cross_val_confusion(data: LabeledDataset, cfg: TrainConfig = TrainConfig(), folds: int = 5,
                        smoothing: float = 1.0) -> ConfusionMatrix:
    """Pool k-fold out-of-fold confusion counts, then smooth once."""
    if folds < 2:
        raise QuantError("cross-validation needs at least 2 folds")
    if data.n < folds:
        raise EmptyHoldout(f"{data.n} samples cannot fill {folds} folds")
    order = np.random.Generator(np.random.PCG64(cfg.seed)).permutation(data.n)
    counts = np.zeros((data.c, data.c))
    for k, held in enumerate(np.array_split(order, folds)):
        keep = np.setdiff1d(order, held, assume_unique=True)
        model = train(data.subset(keep), replace(cfg, seed=(cfg.seed + k + 1) % 2**64))
        counts += confusion_counts(data.labels[held], model.predict(data.features[held]), data.c)
    return ConfusionMatrix.from_counts(counts, smoothing)
