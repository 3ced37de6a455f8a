"""Benchmark configuration, read from a TOML file.

Example::

    [scenario]
    preset = "plankton-like"      # or file = "scenario.toml"
                                  # or scores = "cells/" with source_scores = "source.csv"
    [benchmark]
    methods = ["cc", "em", "cm", "srs", "offset"]
    budgets = [15, 25, 50, 100, 150]
    seeds = [0, 1, 2]
    cv_folds = 5

    [methods.em]
    tol = 1e-8

    [train]
    epochs = 20

    [output]
    dir = "out"
    formats = ["csv", "json", "svg"]

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from quantbench import __version__
from quantbench.classifier import FINE_TUNE_DEFAULT, TrainConfig
from quantbench.errors import ConfigError, QuantError
from quantbench.shiftsim import PRESETS, ScenarioConfig, preset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

UNSUPERVISED = ("cc", "pcc", "em", "cm")
SUPERVISED = ("srs", "offset", "ratio", "da_mix")
METHODS = UNSUPERVISED + SUPERVISED
DEFAULT_BUDGETS = (15, 25, 50, 100, 150)
FORMATS = ("csv", "json", "svg")

METHOD_PARAMS = {"em": {"tol", "max_iter"}}


@dataclass(frozen=True)
class ScoresSource:
    """Externally computed posteriors: a directory of cells plus labeled source scores."""

    scores: Path
    source_scores: Optional[Path] = None

    def fingerprint(self) -> dict:
        files = sorted(self.scores.glob("*.csv")) if self.scores.is_dir() else [self.scores]
        if self.source_scores is not None:
            files.append(self.source_scores)
        digests = {}
        for f in files:
            try:
                digests[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
            except OSError as exc:
                raise ConfigError(f"cannot read {f}: {exc}") from None
        return {"kind": "scores", "files": digests}


@dataclass(frozen=True)
class BenchmarkConfig:
    scenario: object  # ScenarioConfig or ScoresSource
    methods: Tuple[str, ...]
    budgets: Tuple[int, ...] = DEFAULT_BUDGETS
    seeds: Tuple[int, ...] = (0,)
    cv_folds: int = 5
    method_params: Dict[str, dict] = field(default_factory=dict)
    train: TrainConfig = TrainConfig()
    fine_tune: TrainConfig = FINE_TUNE_DEFAULT
    out_dir: Optional[Path] = None
    formats: Tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods listed twice")
        if any(int(b) != b or b < 1 for b in self.budgets):
            raise ConfigError("budgets must be positive integers")
        if self.supervised and not self.budgets:
            raise ConfigError("supervised methods need at least one budget")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(not 0 <= int(s) < 2**64 for s in self.seeds):
            raise ConfigError("seeds must be unsigned 64-bit integers")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        for fmt in self.formats:
            if fmt not in FORMATS:
                raise ConfigError(f"unknown output format {fmt!r}")
        for m, params in self.method_params.items():
            extra = set(params) - METHOD_PARAMS.get(m, set())
            if extra:
                raise ConfigError(f"method {m!r} takes no parameters {sorted(extra)}")

    @property
    def supervised(self) -> List[str]:
        return [m for m in self.methods if m in SUPERVISED]

    @property
    def unsupervised(self) -> List[str]:
        return [m for m in self.methods if m in UNSUPERVISED]

    def params(self, method: str) -> dict:
        return dict(self.method_params.get(method, {}))

    def canonical(self) -> dict:
        """Everything that determines the results; output location excluded."""
        if isinstance(self.scenario, ScenarioConfig):
            scen = {"kind": "simulated", **self.scenario.to_dict()}
        else:
            scen = self.scenario.fingerprint()
        return {
            "scenario": scen,
            "methods": list(self.methods),
            "method_params": {k: self.method_params[k] for k in sorted(self.method_params)},
            "budgets": [int(b) for b in self.budgets],
            "seeds": [int(s) for s in self.seeds],
            "cv_folds": int(self.cv_folds),
            "train": asdict(self.train),
            "fine_tune": asdict(self.fine_tune),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def provenance(self) -> dict:
        return {
            "config_hash": self.config_hash(),
            "seeds": [int(s) for s in self.seeds],
            "version": __version__,
            "scenario": self.scenario.name if isinstance(self.scenario, ScenarioConfig) else "scores",
            "methods": list(self.methods),
            "budgets": [int(b) for b in self.budgets] if self.supervised else [],
        }


def _train_config(doc: dict, base: TrainConfig, where: str) -> TrainConfig:
    allowed = set(TrainConfig.__dataclass_fields__)
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"[{where}] has unknown keys {sorted(extra)}")
    try:
        return replace(base, **doc)
    except (TypeError, QuantError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from None


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_scenario(doc: dict, base: Path):
    if "scores" in doc:
        src = doc.get("source_scores")
        return ScoresSource(_resolve(base, doc["scores"]), _resolve(base, src) if src else None)
    if "preset" in doc:
        kwargs = {k: v for k, v in doc.items() if k != "preset"}
        try:
            return preset(doc["preset"], **kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad preset options: {exc}") from None
    if "file" in doc:
        path = _resolve(base, doc["file"])
        sub = read_toml(path)
        return ScenarioConfig.from_dict(sub.get("scenario", sub))
    if "class_means" in doc:
        return ScenarioConfig.from_dict(doc)
    raise ConfigError(f"[scenario] needs one of preset, file, scores or an inline definition; presets: {sorted(PRESETS)}")


def read_toml(path) -> dict:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def from_dict(doc: dict, base: Path = Path(".")) -> BenchmarkConfig:
    if "scenario" not in doc:
        raise ConfigError("config needs a [scenario] table")
    bench = doc.get("benchmark", {})
    out = doc.get("output", {})
    seed_train = _train_config(doc.get("train", {}), TrainConfig(), "train")
    seed_ft = _train_config(doc.get("fine_tune", {}), FINE_TUNE_DEFAULT, "fine_tune")
    try:
        return BenchmarkConfig(
            scenario=load_scenario(doc["scenario"], base),
            methods=tuple(bench.get("methods", ())),
            budgets=tuple(int(b) for b in bench.get("budgets", DEFAULT_BUDGETS)),
            seeds=tuple(int(s) for s in bench.get("seeds", (0,))),
            cv_folds=int(bench.get("cv_folds", 5)),
            method_params={k: dict(v) for k, v in doc.get("methods", {}).items()},
            train=seed_train,
            fine_tune=seed_ft,
            out_dir=_resolve(base, out["dir"]) if "dir" in out else None,
            formats=tuple(out.get("formats", ("csv", "json"))),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load(path) -> BenchmarkConfig:
    path = Path(path)
    return from_dict(read_toml(path), path.parent)
