"""Command-line front end: ``bayes-evidence generate|sweep|compare``.

Every run writes into ``<out-dir>/<command>-<timestamp>-<confighash>/``:
``config.yaml`` (the parsed flags), the dataset or report files, and for
sweeps a ``plot.tsv`` with (model_id, score).  The default ``--out-dir`` is
``$BAYES_EVIDENCE_OUT`` or ``./runs``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .datagen import DatasetFormatError, GmmGenSpec, PolyGenSpec, generate_gmm, generate_polynomial, read_dataset, write_dataset
from .harness import (
    DEFAULT_N_LIVE,
    VbConfig,
    compare_methods,
    config_hash,
    default_ns_config,
    sweep,
    write_plot_data,
    write_report,
)
from .nested import MIN_STEPS, STEPS_PER_DIM, NsConfig

OUT_ENV = "BAYES_EVIDENCE_OUT"
EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- flag parsing


def parse_floats(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    return values


def parse_int_range(text: str) -> list[int]:
    """``3``, ``1..10`` (inclusive) or ``1,3,5``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if lo > hi:
                raise argparse.ArgumentTypeError(f"empty range {text!r}")
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N, A..B or a comma list, got {text!r}") from None


def parse_interval(text: str) -> tuple[float, float]:
    values = parse_floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected two numbers A,B, got {text!r}")
    return values


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out-dir", default=None, help=f"output root; falls back to ${OUT_ENV}, then ./runs")
    p.add_argument("-v", "--verbose", action="store_true", help="print per-model lines")


def _add_backend_flags(p, family):
    ns = p.add_argument_group("nested sampling")
    d = NsConfig()
    ns.add_argument("--n-live", type=int, default=DEFAULT_N_LIVE[family], help="live points N")
    ns.add_argument("--steps-per-replacement", type=int, default=d.steps_per_replacement,
                    help=f"random-walk steps per replaced point; None means {STEPS_PER_DIM} x dimension, "
                    f"at least {MIN_STEPS}")
    ns.add_argument("--de-fraction", type=float, default=d.de_fraction,
                    help="share of steps built from live-point differences (covariance proposal only)")
    ns.add_argument("--max-iterations", type=int, default=d.max_iterations, help="iteration cap")
    ns.add_argument("--target-acceptance", type=float, default=d.target_acceptance,
                    help="acceptance rate the step sizes are tuned towards")
    ns.add_argument("--stop-delta-logz", type=float, default=d.stop_delta_logz,
                    help="stop once ln Z changes by less than this ...")
    ns.add_argument("--stop-info-factor", type=float, default=d.stop_info_factor,
                    help="... and the iteration count exceeds this times N H")
    ns.add_argument("--proposal", choices=("covariance", "axis"), default=d.proposal,
                    help="random-walk shape: live-point covariance or per-axis")
    ns.add_argument("--retry-budget", type=int, default=d.retry_budget,
                    help="restarts from other live points before giving up")
    vb = p.add_argument_group("variational Bayes")
    v = VbConfig()
    vb.add_argument("--tol", type=float, default=v.tol, help="stop when the bound changes by less than this")
    vb.add_argument("--max-iter", type=int, default=v.max_iter, help="iteration cap per fit")
    if family == "gmm":
        vb.add_argument("--restarts", type=int, default=v.restarts, help="random restarts per component count")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="bayes-evidence", description="Evidence-based model selection by nested sampling and variational Bayes.",
        formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    cmds = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = cmds.add_parser("generate", help="write a synthetic dataset", formatter_class=fmt)
    gen_fam = gen.add_subparsers(dest="family", required=True, metavar="FAMILY")
    gp = gen_fam.add_parser("poly", help="polynomial plus Gaussian noise", formatter_class=fmt)
    gp.add_argument("--coeffs", type=parse_floats, required=True, help="coefficients, constant term first")
    gp.add_argument("--interval", type=parse_interval, default=(-2.0, 2.0), help="abscissa range A,B")
    gp.add_argument("--n", type=int, default=40, help="number of points")
    gp.add_argument("--sigma", type=float, default=2.0, help="noise standard deviation")
    gg = gen_fam.add_parser("gmm", help="1-D Gaussian mixture sample", formatter_class=fmt)
    gg.add_argument("--means", type=parse_floats, required=True, help="component means")
    gg.add_argument("--sigmas", type=parse_floats, required=True, help="component standard deviations")
    gg.add_argument("--weights", type=parse_floats, required=True, help="mixing weights, summing to 1")
    gg.add_argument("--n", type=int, default=300, help="number of points")
    for p in (gp, gg):
        p.add_argument("--output", default=None, help="dataset path; None writes data.tsv in a new run directory")
        _add_common(p)

    for name, help_text in (("sweep", "score a range of models"), ("compare", "compare two methods on one model")):
        cmd = cmds.add_parser(name, help=help_text, formatter_class=fmt)
        fam = cmd.add_subparsers(dest="family", required=True, metavar="FAMILY")
        for family in ("poly", "gmm"):
            p = fam.add_parser(family, formatter_class=fmt)
            p.add_argument("--data", required=True, help="dataset file")
            size_flag = "--orders" if family == "poly" else "--components"
            if name == "sweep":
                p.add_argument(size_flag, dest="sizes", type=parse_int_range,
                               default="1..10" if family == "poly" else "1..6", help="N, A..B or a comma list")
                p.add_argument("--method", choices=("vb", "ns"), default="vb", help="evidence backend")
                p.add_argument("--workers", type=int, default=1, help="processes for independent sweep entries")
            else:
                p.add_argument(size_flag.rstrip("s"), dest="size", type=int, default=None,
                               help="model size; None picks the VB sweep argmax")
                p.add_argument("--method", dest="methods", action="append", choices=("vb", "ns"), default=None,
                               help="give twice; None means vb then ns")
                p.add_argument("--seeds", type=parse_int_range, default=None,
                               help="seeds averaged per method; None means SEED..SEED+3")
            _add_backend_flags(p, family)
            _add_common(p)
    return parser


# ---------------------------------------------------------------- run directory


def _out_root(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_ENV) or "runs")


def _echo(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items()) if k not in ("out_dir", "verbose")}


def make_run_dir(args) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%dT%H%M%S%f")
    echo = _echo(args)
    run = _out_root(args) / f"{args.command}-{stamp}-{config_hash(echo)}"
    run.mkdir(parents=True, exist_ok=False)
    (run / "config.yaml").write_text(yaml.safe_dump(echo, sort_keys=True), encoding="utf-8", newline="\n")
    return run


def _ns_config(args) -> NsConfig:
    return replace(
        default_ns_config(args.family),
        n_live=args.n_live, steps_per_replacement=args.steps_per_replacement,
        max_iterations=args.max_iterations, target_acceptance=args.target_acceptance,
        stop_delta_logz=args.stop_delta_logz, stop_info_factor=args.stop_info_factor,
        proposal=args.proposal, retry_budget=args.retry_budget, de_fraction=args.de_fraction, seed=args.seed,
    )


def _vb_config(args) -> VbConfig:
    return VbConfig(tol=args.tol, max_iter=args.max_iter, restarts=getattr(args, "restarts", VbConfig().restarts))


def _configs(args) -> dict:
    try:
        return {"ns": _ns_config(args), "vb": _vb_config(args)}
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path) -> "Dataset":
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"dataset not found: {p}")
    return read_dataset(p)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    try:
        if args.family == "poly":
            spec = PolyGenSpec(args.coeffs, tuple(args.interval), args.n, args.sigma, args.seed)
            data = generate_polynomial(spec)
        else:
            spec = GmmGenSpec(args.means, args.sigmas, args.weights, args.n, args.seed)
            data = generate_gmm(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.output:
        path = Path(args.output)
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path = make_run_dir(args) / "data.tsv"
    write_dataset(data, path)
    y = data.ordinates
    print(path)
    print(f"points: {data.count}  mean: {y.mean():.6g}  std: {y.std():.6g}  min: {y.min():.6g}  max: {y.max():.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfgs = _configs(args)
    if any(s < 1 for s in args.sizes):
        raise UsageError("model sizes must be >= 1")
    data = _load(args.data)
    report = sweep(args.family, data, args.sizes, args.method, cfgs[args.method], args.seed, workers=args.workers)
    run = make_run_dir(args)
    write_report(report, run / "report.yaml")
    write_plot_data(report, run / "plot.tsv")
    for r in report.records:
        if args.verbose or r.error:
            score = "failed: " + r.error if r.error else f"{r.score:.6f}"
            print(f"{r.model_id}\t{score}")
    print(run)
    if report.argmax is not None:
        print(f"best: {report.argmax} score: {report.record(report.argmax).score:.6f}")
    failed = [r for r in report.records if r.error]
    if failed:
        print(f"{len(failed)} of {len(report.records)} fits failed", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_compare(args) -> int:
    cfgs = _configs(args)
    methods = tuple(args.methods or ("vb", "ns"))
    if len(methods) != 2:
        raise UsageError("--method must be given exactly twice (or not at all)")
    if args.size is not None and args.size < 1:
        raise UsageError("model size must be >= 1")
    data = _load(args.data)
    seeds = args.seeds if args.seeds is not None else range(args.seed, args.seed + 4)
    report = compare_methods(data, args.family, cfgs, seeds=seeds, size=args.size, methods=methods)
    run = make_run_dir(args)
    write_report(report, run / "report.yaml")
    a, b = report.methods
    print(run)
    print(f"model: {report.model_id}")
    print(f"{'param':<10}{a:>16}{b:>16}{'disagree %':>14}")
    for name, x, y, d in zip(report.param_names, report.reference_values, report.other_values, report.disagreement):
        print(f"{name:<10}{x:>16.6g}{y:>16.6g}{d:>14.4g}")
    print(f"averaged disagreement: {report.averaged_disagreement:.4g}%")
    print(f"timing ratio {b}/{a}: {report.timing_ratio:.4g}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "sweep": cmd_sweep, "compare": cmd_compare}


# a value such as "-2,2" would otherwise be read by argparse as an option
_NUMBER_LIST = re.compile(r"^-[\d.][\d.,eE+-]*$")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -1,2`` as ``--flag=-1,2`` for comma-separated numbers."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NUMBER_LIST.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 on usage errors, 0 for --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bayes-evidence: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetFormatError) as exc:
        print(f"bayes-evidence: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as exc:
        print(f"bayes-evidence: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
