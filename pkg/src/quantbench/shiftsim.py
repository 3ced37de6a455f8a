"""Gaussian-mixture source sets and test cells with controllable dataset shift.

Each class is an isotropic Gaussian. A cell changes the class mix
(``target_prior``) and optionally moves the class means (``mean_drift``).
Zero drift is pure class-distribution shift: ``p(x|y)`` is untouched.

Randomness: ``numpy.random.Generator`` over PCG64. The source set is drawn
from ``derive_seed(seed, "source")`` and cell ``k`` from
``derive_seed(seed, k)``, where ``derive_seed`` takes the first 8 bytes of
SHA-256 over ``"<seed>/<name>"``. Cells are therefore independent of each
other and of generation order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from quantbench.core import Cell, Distribution, LabeledDataset, make_distribution
from quantbench.errors import ConfigError, DimensionMismatch, QuantError


def derive_seed(master: int, name) -> int:
    digest = hashlib.sha256(f"{int(master)}/{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(master: int, name) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, name)))


def _as_dist(p) -> Distribution:
    if isinstance(p, Distribution):
        return p
    # keep already-valid priors bit-for-bit so serialized scenarios round-trip
    try:
        return Distribution(p)
    except QuantError:
        return make_distribution(p)


@dataclass(frozen=True, eq=False)
class CellSpec:
    id: str
    target_prior: Distribution
    n_samples: int
    mean_drift: Optional[np.ndarray] = None  # c x d, None means no drift

    def __post_init__(self):
        object.__setattr__(self, "target_prior", _as_dist(self.target_prior))
        if int(self.n_samples) != self.n_samples or self.n_samples < 1:
            raise ConfigError(f"cell {self.id!r}: n_samples must be a positive integer")
        if self.mean_drift is not None:
            drift = np.array(self.mean_drift, dtype=float)
            drift.setflags(write=False)
            object.__setattr__(self, "mean_drift", drift)

    @property
    def drifted(self) -> bool:
        return self.mean_drift is not None and bool(np.any(self.mean_drift != 0))


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    class_means: np.ndarray
    class_cov_scale: float
    source_prior: Distribution
    n_source: int
    cells: List[CellSpec] = field(default_factory=list)
    seed: int = 0
    name: str = "custom"
    class_names: Optional[List[str]] = None

    def __post_init__(self):
        means = np.array(self.class_means, dtype=float)
        if means.ndim != 2:
            raise DimensionMismatch("class_means must be a c x d matrix")
        means.setflags(write=False)
        object.__setattr__(self, "class_means", means)
        object.__setattr__(self, "source_prior", _as_dist(self.source_prior))
        c, d = means.shape
        if self.source_prior.c != c:
            raise DimensionMismatch(f"source prior has {self.source_prior.c} classes, means have {c}")
        if not self.class_cov_scale > 0:
            raise ConfigError("class_cov_scale must be positive")
        if int(self.n_source) != self.n_source or self.n_source < 1:
            raise ConfigError("n_source must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        for spec in self.cells:
            if spec.target_prior.c != c:
                raise DimensionMismatch(f"cell {spec.id!r} prior has {spec.target_prior.c} classes, expected {c}")
            if spec.mean_drift is not None and spec.mean_drift.shape != (c, d):
                raise DimensionMismatch(f"cell {spec.id!r} drift must be {c} x {d}")
        if len({s.id for s in self.cells}) != len(self.cells):
            raise ConfigError("cell ids must be unique")
        if self.class_names is not None and len(self.class_names) != c:
            raise ConfigError("one class name per class")

    @property
    def c(self) -> int:
        return self.class_means.shape[0]

    @property
    def d(self) -> int:
        return self.class_means.shape[1]

    def names(self) -> List[str]:
        return list(self.class_names) if self.class_names else [f"class_{k}" for k in range(self.c)]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "class_means": self.class_means.tolist(),
            "class_cov_scale": float(self.class_cov_scale),
            "source_prior": self.source_prior.probs.tolist(),
            "n_source": int(self.n_source),
            "seed": int(self.seed),
            "class_names": self.names(),
            "cells": [],
        }
        for s in self.cells:
            cell = {"id": s.id, "target_prior": s.target_prior.probs.tolist(), "n_samples": int(s.n_samples)}
            if s.mean_drift is not None:
                cell["mean_drift"] = s.mean_drift.tolist()
            doc["cells"].append(cell)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        try:
            means = np.asarray(doc["class_means"], dtype=float)
            cells = [
                CellSpec(
                    id=str(cd["id"]),
                    target_prior=cd["target_prior"],
                    n_samples=int(cd["n_samples"]),
                    mean_drift=cd.get("mean_drift"),
                )
                for cd in doc.get("cells", [])
            ]
            return cls(
                class_means=means,
                class_cov_scale=float(doc.get("class_cov_scale", 1.0)),
                source_prior=doc["source_prior"],
                n_source=int(doc["n_source"]),
                cells=cells,
                seed=int(doc.get("seed", 0)),
                name=str(doc.get("name", "custom")),
                class_names=doc.get("class_names"),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario is missing key {exc.args[0]!r}") from None


def _draw(rng, means, scale, prior: Distribution, n: int):
    labels = rng.choice(prior.c, size=n, p=prior.probs)
    noise = rng.standard_normal((n, means.shape[1]))
    return means[labels] + np.sqrt(scale) * noise, labels


def gen_source(cfg: ScenarioConfig) -> LabeledDataset:
    x, y = _draw(rng_for(cfg.seed, "source"), cfg.class_means, cfg.class_cov_scale, cfg.source_prior, cfg.n_source)
    return LabeledDataset(x, y, cfg.c)


def gen_cell(cfg: ScenarioConfig, spec: CellSpec) -> Cell:
    means = cfg.class_means if spec.mean_drift is None else cfg.class_means + spec.mean_drift
    x, y = _draw(rng_for(cfg.seed, spec.id), means, cfg.class_cov_scale, spec.target_prior, spec.n_samples)
    meta = {"drifted": spec.drifted, "target_prior": spec.target_prior.probs.tolist()}
    return Cell(spec.id, features=x, truth=y, meta=meta)


def gen_cells(cfg: ScenarioConfig) -> List[Cell]:
    return [gen_cell(cfg, spec) for spec in cfg.cells]


def bayes_posteriors(cfg: ScenarioConfig, features, prior=None) -> np.ndarray:
    """Exact class posteriors of the (undrifted) mixture under ``prior``."""
    x = np.asarray(features, dtype=float)
    p = cfg.source_prior.probs if prior is None else np.asarray(prior, dtype=float)
    sq = ((x[:, None, :] - cfg.class_means[None, :, :]) ** 2).sum(axis=2)
    with np.errstate(divide="ignore"):
        logit = -0.5 * sq / cfg.class_cov_scale + np.log(p)
    logit -= logit.max(axis=1, keepdims=True)
    e = np.exp(logit)
    return e / e.sum(axis=1, keepdims=True)


# presets ------------------------------------------------------------------

PRESET_SEED = 2015

PLANKTON_CLASSES = ["mix", "diatom_chain", "ciliate", "dinoflagellate", "flagellate", "detritus"]
CORAL_CLASSES = ["coral", "macroalgae", "turf_algae", "sand", "crustose_algae", "sponge"]


def _preset_means(c, d, spread, rng):
    means = rng.standard_normal((c, d))
    means -= means.mean(axis=0)
    return spread * means


def plankton_like(n_cells: int = 21, cell_size: int = 2000, n_source: int = 3000, seed: int = 0) -> ScenarioConfig:
    """Pure class-distribution shift: 21 cells, no drift, one dominant class."""
    rng = np.random.Generator(np.random.PCG64(PRESET_SEED))
    c, d = len(PLANKTON_CLASSES), 4
    means = _preset_means(c, d, 1.6, rng)
    source_prior = make_distribution([0.40, 0.18, 0.14, 0.12, 0.10, 0.06])
    cells = []
    for k in range(n_cells):
        dominant = rng.uniform(0.45, 0.9)
        rest = rng.dirichlet(np.full(c - 1, 0.6)) * (1 - dominant)
        prior = np.concatenate([[dominant], rest])
        cells.append(CellSpec(f"p{k:02d}", make_distribution(prior), cell_size))
    return ScenarioConfig(means, 1.0, source_prior, n_source, cells, seed, "plankton-like", list(PLANKTON_CLASSES))


def coral_like(n_cells: int = 15, cell_size: int = 1500, n_source: int = 3000, seed: int = 0,
               drift_scale: float = 1.2) -> ScenarioConfig:
    """Mixed shift: 15 cells whose class means move as well as their class mix."""
    rng = np.random.Generator(np.random.PCG64(PRESET_SEED + 1))
    c, d = len(CORAL_CLASSES), 4
    means = _preset_means(c, d, 1.6, rng)
    source_prior = make_distribution([0.25, 0.2, 0.2, 0.15, 0.12, 0.08])
    cells = []
    for k in range(n_cells):
        prior = rng.dirichlet(source_prior.probs * 40)
        drift = drift_scale * rng.standard_normal((c, d))
        cells.append(CellSpec(f"c{k:02d}", make_distribution(prior), cell_size, drift))
    return ScenarioConfig(means, 1.0, source_prior, n_source, cells, seed, "coral-like", list(CORAL_CLASSES))


PRESETS = {"plankton-like": plankton_like, "coral-like": coral_like}


def preset(name: str, **kwargs) -> ScenarioConfig:
    try:
        return PRESETS[name](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown scenario preset {name!r}; choose from {sorted(PRESETS)}") from None
