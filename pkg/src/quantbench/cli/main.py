"""``quantbench`` command line: simulate, quantify, benchmark, report.

Exit codes: 0 success, 1 config/validation error, 2 a method failed on
every cell, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from quantbench import __version__
from quantbench.classifier import FINE_TUNE_DEFAULT, SoftmaxClassifier, TrainConfig, confusion_counts, train
from quantbench.cli import config as config_mod
from quantbench.cli.bench import run_benchmark
from quantbench.cli.report import emit_report, load_json
from quantbench.cli.wire import read_cell, read_labeled, write_cell, write_labeled
from quantbench.core import Cell, ConfusionMatrix, LabeledDataset, make_distribution
from quantbench.errors import ConfigError, QuantError
from quantbench.metrics import bray_curtis
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

log = logging.getLogger("quantbench")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3


def _formats(value):
    fmts = tuple(f.strip() for f in value.split(",") if f.strip())
    for f in fmts:
        if f not in config_mod.FORMATS:
            raise argparse.ArgumentTypeError(f"unknown format {f!r}")
    return fmts


def _u64(value):
    v = int(value)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quantbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a scenario's source set and cells to disk")
    s.add_argument("--config", required=True, help="benchmark or scenario TOML")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=_u64)
    s.add_argument("--scores", action="store_true",
                   help="also train the classifier and write posterior files (cells and out-of-fold source)")

    q = sub.add_parser("quantify", help="run one method on one cell file")
    q.add_argument("--method", required=True, choices=config_mod.METHODS)
    q.add_argument("--cell", required=True, help="cell file (scores or features)")
    q.add_argument("--source", help="labeled source file: scores (em, cm) or features (da_mix)")
    q.add_argument("--model", help="classifier JSON, needed for feature cells")
    q.add_argument("--budget", type=int, help="annotation budget for supervised methods")
    q.add_argument("--seed", type=_u64, default=0)

    b = sub.add_parser("benchmark", help="full sweep over cells, methods, budgets and seeds")
    b.add_argument("--config", required=True)
    b.add_argument("--out")
    b.add_argument("--format", type=_formats)
    b.add_argument("--seed", type=_u64, help="run this single seed instead of the configured list")
    b.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("report", help="re-render outputs from a report JSON")
    r.add_argument("--config", required=True, help="report.json written by benchmark")
    r.add_argument("--out", required=True)
    r.add_argument("--format", type=_formats, default=("csv", "svg"))
    return p


def _scenario_from(path, seed):
    doc = config_mod.read_toml(path)
    scen = config_mod.load_scenario(doc.get("scenario", doc), Path(path).parent)
    if not isinstance(scen, ScenarioConfig):
        raise ConfigError("simulate needs a simulated scenario, not ingested scores")
    return scen if seed is None else scen.with_seed(seed)


def cmd_simulate(args) -> int:
    scen = _scenario_from(args.config, args.seed)
    out = Path(args.out)
    names = scen.names()
    source = gen_source(scen)
    write_labeled(out / "source.csv", source, names)
    cells = [gen_cell(scen, spec) for spec in scen.cells]
    for cell in cells:
        write_cell(out / "cells" / f"{cell.id}.csv", cell, names)
    (out / "scenario.json").write_text(json.dumps(scen.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if args.scores:
        tcfg = TrainConfig(seed=derive_seed(scen.seed, "train"))
        model = train(source, tcfg)
        model.save(out / "model.json")
        for cell in cells:
            scored = Cell(cell.id, scores=model.posteriors(cell.features), truth=cell.truth)
            write_cell(out / "scores" / f"{cell.id}.csv", scored, names)
        write_labeled(out / "source_scores.csv", _out_of_fold(source, tcfg), names, kind="scores")
    print(f"wrote {len(cells)} cells to {out}")
    return EXIT_OK


def _out_of_fold(source: LabeledDataset, tcfg: TrainConfig, folds: int = 5) -> LabeledDataset:
    order = np.random.Generator(np.random.PCG64(tcfg.seed)).permutation(source.n)
    post = np.zeros((source.n, source.c))
    for k, held in enumerate(np.array_split(order, folds)):
        keep = np.setdiff1d(order, held, assume_unique=True)
        m = train(source.subset(keep), replace(tcfg, seed=(tcfg.seed + k + 1) % 2**64))
        post[held] = m.posteriors(source.features[held]).values
    return LabeledDataset(post, source.labels, source.c)


def cmd_quantify(args) -> int:
    cell, names = read_cell(args.cell)
    c = len(names)
    model = SoftmaxClassifier.load(args.model) if args.model else None
    if cell.kind == "scores":
        scores = cell.scores
    elif model is None:
        raise ConfigError("a feature cell needs --model")
    else:
        scores = model.posteriors(cell.features)

    source, source_kind = None, None
    if args.source:
        source, header = read_labeled(args.source)
        source_kind = header.kind
        if header.classes != names:
            raise ConfigError("source and cell class catalogs differ")

    m = args.method
    result = {"method": m, "cell": cell.id, "classes": names}
    if m in config_mod.UNSUPERVISED:
        if m in ("em", "cm") and source is None:
            raise ConfigError(f"{m} needs --source")
        if m == "cc":
            est = classify_and_count(scores)
        elif m == "pcc":
            est = expected_count(scores)
        elif m == "em":
            em = em_adjust(scores, source.prior())
            est = em.prior
            result.update(iterations=em.iterations, converged=em.converged)
        else:
            if source_kind == "scores":
                predicted = source.features.argmax(axis=1)
            elif model is not None:
                predicted = model.predict(source.features)
            else:
                raise ConfigError("cm needs a scores --source, or a features --source with --model")
            confusion = ConfusionMatrix.from_counts(confusion_counts(source.labels, predicted, c))
            est = cm_adjust(classify_and_count(scores), confusion)
    else:
        if args.budget is None:
            raise ConfigError(f"{m} needs --budget")
        subset = draw_subset(cell, args.budget, args.seed)
        truth_sub = srs_estimate(subset, c)
        cc_full = classify_and_count(scores)
        if m == "srs":
            est = truth_sub
        elif m == "offset":
            est = offset_estimate(cc_full, subset_counts(scores, subset), truth_sub)
        elif m == "ratio":
            est = ratio_estimate(cc_full, subset_counts(scores, subset), truth_sub)
        else:
            if model is None or source is None:
                raise ConfigError("da_mix needs --model and a features --source")
            est = da_mix_quantify(model, source, cell, subset, replace(FINE_TUNE_DEFAULT, seed=args.seed))
        result["budget"] = args.budget
    result["estimate"] = est.probs.tolist()
    if cell.truth is not None:
        result["bray_curtis"] = bray_curtis(make_distribution(np.bincount(cell.truth, minlength=c)), est)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = config_mod.load(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seeds=(args.seed,))
    if args.format:
        cfg = replace(cfg, formats=args.format)
    out = Path(args.out) if args.out else cfg.out_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set [output] dir")
    report = run_benchmark(cfg, jobs=max(1, args.jobs))
    for path in emit_report(report, out, cfg.formats):
        log.info("wrote %s", path)
    for a in report.aggregates:
        budget = "" if a.budget is None else f" b={a.budget}"
        print(f"{a.method}{budget}: {a.mean:.4f} +- {a.se:.4f} (n={a.n_cells})")
    failed = report.failed_methods()
    if failed:
        print(f"methods failed on every cell: {', '.join(failed)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    report = load_json(args.config)
    for path in emit_report(report, args.out, args.format):
        print(path)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "quantify": cmd_quantify, "benchmark": cmd_benchmark, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (QuantError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
