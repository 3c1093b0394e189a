"""Command-line front end: synth, summarize, screen, benchmark.

Exit codes: 0 success, 2 config or parse error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys

import numpy as np

from markerstack import __version__
from markerstack.config import ConfigError, ToolkitConfig, load_config
from markerstack.dataset import (
    Dataset,
    DatasetError,
    class_marker_means,
    generate_synthetic,
    parse_csv,
    series_length_histogram,
    write_csv,
)
from markerstack.ensemble import StackingError
from markerstack.evaluation import EvaluationError, run_benchmark
from markerstack.stats import screen_markers

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        self.code = code
        super().__init__(message)


# ---------------------------------------------------------------------- helpers


def _load(args) -> ToolkitConfig:
    overrides = {"seed": args.seed} if args.seed is not None else {}
    if args.jobs is not None:
        overrides["n_jobs"] = args.jobs
    try:
        return load_config(args.config, overrides)
    except ConfigError as exc:
        raise CliError(f"config error: {exc}", EXIT_CONFIG) from None
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from None


def _read_text(path: str) -> str:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _read_dataset(path: str, cfg: ToolkitConfig) -> tuple[Dataset, str]:
    text = _read_text(path)
    try:
        ds = parse_csv(text, cfg.label_map)
    except DatasetError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONFIG) from None
    return ds, hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write(path: str, text: str) -> None:
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _class_name(cfg: ToolkitConfig, cls: int) -> str:
    for name, code in cfg.label_map.items():
        if code == cls:
            return name
    return str(cls)


def histogram_text(ds: Dataset) -> str:
    hist = series_length_histogram(ds)
    head = "Group " + "".join(f"{L:>5d}" for L in hist.lengths) + f"{'Total':>7}"
    lines = [head]
    for group, label in (("control", "D=0"), ("disease", "D=1")):
        cells = "".join(f"{c:>5d}" for c in hist.counts[group])
        lines.append(f"{label:<6}{cells}{hist.total(group):>7d}")
    lines.append(f"Observations: {hist.observations()}")
    return "\n".join(lines) + "\n"


def means_text(ds: Dataset, cfg: ToolkitConfig) -> str:
    means = class_marker_means(ds)
    width = max([len("Class")] + [len(_class_name(cfg, c)) for c in means])
    cols = [max(10, len(m)) for m in ds.marker_names]
    lines = [f"{'Class':<{width}}" + "".join(f"  {m:>{w}}" for m, w in zip(ds.marker_names, cols))]
    for cls, row in means.items():
        lines.append(f"{_class_name(cfg, cls):<{width}}"
                     + "".join(f"  {row[m]:>{w}.4f}" for m, w in zip(ds.marker_names, cols)))
    return "\n".join(lines) + "\n"


def summary_document(ds: Dataset, cfg: ToolkitConfig) -> dict:
    hist = series_length_histogram(ds)
    return {
        "schema_version": 1,
        "histogram": {"lengths": list(hist.lengths), "control": list(hist.counts["control"]),
                      "disease": list(hist.counts["disease"])},
        "patients": {"control": hist.total("control"), "disease": hist.total("disease")},
        "observations": hist.observations(),
        "class_means": {_class_name(cfg, c): row for c, row in class_marker_means(ds).items()},
    }


# ---------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    cfg = _load(args)
    ds = generate_synthetic(cfg.generator, cfg.seed)
    _write(os.path.join(args.out, cfg.outputs["cohort"]), write_csv(ds, cfg.label_map))
    sys.stdout.write(histogram_text(ds))
    return EXIT_OK


def cmd_summarize(args) -> int:
    cfg = _load(args)
    ds, _ = _read_dataset(args.data, cfg)
    if args.json:
        sys.stdout.write(json.dumps(summary_document(ds, cfg), indent=2) + "\n")
    else:
        sys.stdout.write(histogram_text(ds))
        sys.stdout.write("\n")
        sys.stdout.write(means_text(ds, cfg))
    return EXIT_OK


def cmd_screen(args) -> int:
    cfg = _load(args)
    ds, digest = _read_dataset(args.data, cfg)
    result = screen_markers(ds, cfg.screening_policy, cfg.screening)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["marker", "test", "class", "statistic", "p_value"])
    for s in result.scores:
        writer.writerow([s.marker, s.result.test_kind, _class_name(cfg, s.class_pair[0]),
                         repr(float(s.result.statistic)), repr(float(s.result.p_value))])
    doc = {
        "schema_version": 1,
        "data_sha256": digest,
        "alpha": result.alpha,
        "flatten": result.policy.kind,
        "tests": list(cfg.screening.tests),
        "k_per_comparison": cfg.screening.k_per_comparison,
        "selected": list(result.selected),
        "scores": [
            {"marker": s.marker, "test": s.result.test_kind, "class": _class_name(cfg, s.class_pair[0]),
             "statistic": float(s.result.statistic), "p_value": float(s.result.p_value),
             "method": s.result.method, "df": None if s.result.df is None else float(s.result.df)}
            for s in result.scores
        ],
    }
    _write(os.path.join(args.out, cfg.outputs["screening_csv"]), buf.getvalue())
    _write(os.path.join(args.out, cfg.outputs["screening_json"]), json.dumps(doc, indent=2) + "\n")

    if args.json:
        sys.stdout.write(json.dumps({"selected": list(result.selected)}) + "\n")
    else:
        sys.stdout.write("Selected markers (min p across comparisons)\n")
        for m in result.selected:
            p = min(s.result.p_value for s in result.scores if s.marker == m)
            sys.stdout.write(f"  {m:<20} {p:.3g}\n")
    return EXIT_OK


def _parse_lengths(text: str) -> list[int]:
    try:
        lengths = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not lengths or any(L < 1 for L in lengths):
        raise argparse.ArgumentTypeError("lengths must be integers >= 1")
    return lengths


def cmd_benchmark(args) -> int:
    cfg = _load(args)
    ds, digest = _read_dataset(args.data, cfg)
    lengths = args.series_sweep if args.series_sweep is not None else list(cfg.sweep_lengths)
    extra = {"seed": cfg.seed, "data_sha256": digest, "meta_overrides": dict(cfg.meta_overrides)}
    report = run_benchmark(
        ds, cfg.benchmark_models(), cfg.cv, cfg.flatten,
        screening=cfg.screening if args.use_screening else None,
        screening_policy=cfg.screening_policy,
        sweep_lengths=lengths or None,
        sweep_model=cfg.sweep_model,
        extra_config=extra,
        n_jobs=cfg.n_jobs,
    )
    _write(os.path.join(args.out, cfg.outputs["report_json"]), report.to_json())
    _write(os.path.join(args.out, cfg.outputs["report_text"]), report.to_text())
    if args.json:
        sys.stdout.write(json.dumps({"ranking": list(report.ranking)}) + "\n")
    else:
        sys.stdout.write(report.to_text())
    return EXIT_OK


# ---------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config overlaid on the shipped defaults")
    common.add_argument("--seed", type=int, metavar="N", help="global seed (overrides the config)")
    common.add_argument("--json", action="store_true", help="machine-readable standard output")
    common.add_argument("--out", metavar="DIR", default=".", help="directory for output files (default: .)")
    common.add_argument("--jobs", type=int, metavar="N", help="worker threads (results do not depend on it)")

    parser = argparse.ArgumentParser(prog="markerstack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic cohort CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("summarize", parents=[common], help="series-length histogram and class means")
    p.add_argument("data", help="cohort CSV")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("screen", parents=[common], help="two-sample marker screening")
    p.add_argument("data", help="cohort CSV")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("benchmark", parents=[common], help="cross-validated model benchmark")
    p.add_argument("data", help="cohort CSV")
    p.add_argument("--use-screening", action="store_true", help="restrict models to the screened markers")
    p.add_argument("--series-sweep", type=_parse_lengths, metavar="L,L,...",
                   help="also report accuracy after truncating series to each length")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs is not None and args.jobs < 1:
        sys.stderr.write("markerstack: --jobs must be >= 1\n")
        return EXIT_CONFIG
    try:
        with np.errstate(all="ignore"):
            return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"markerstack: {exc}\n")
        return exc.code
    except (ArithmeticError, StackingError, EvaluationError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"markerstack: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except ValueError as exc:
        sys.stderr.write(f"markerstack: {exc}\n")
        return EXIT_CONFIG
