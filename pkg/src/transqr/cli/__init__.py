"""Command line front end: simulate, fit, transfer, infer, detect, experiment, plot.

Exit status is 0 on success, 1 for usage or configuration errors and 2 when
the computation or file handling fails.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from ..core import InvalidInputError, MultiSourceData
from ..detection import DetectionConfig, detect
from ..inference import confidence_interval
from ..simgen import ERROR_FAMILIES, SimDesign, gen_scenario
from ..solver import cross_validate_lambda, fit_penalized_qr
from ..transfer import oracle_transfer
from .config import METHODS, ConfigError, ExperimentConfig, parse_config
from .experiment import ExperimentRow, run_experiment
from .io import emit_csv, fmt, load_dataset_csv, read_results_csv, write_dataset_csv
from .plot import emit_svg_plot

__all__ = ["ExperimentConfig", "ExperimentRow", "emit_csv", "emit_svg_plot", "load_dataset_csv",
           "main", "parse_config", "read_results_csv", "run_experiment", "write_dataset_csv",
           "METHODS"]

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load(args) -> MultiSourceData:
    target = load_dataset_csv(args.target, 0)
    sources = tuple(load_dataset_csv(path, k) for k, path in enumerate(args.source or (), 1))
    return MultiSourceData(target, sources)


def _write_coefs(beta, path):
    lines = ["j,beta"] + [f"{j},{fmt(b)}" for j, b in enumerate(beta, 1)]
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _int_set(text):
    if text is None or text.strip() == "":
        return ()
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"bad index list {text!r}") from None


def cmd_simulate(args):
    design = SimDesign(p=args.p, n0=args.n0, nk=args.nk, K=args.K, h=args.h, s0=args.s0,
                       num_transferable=args.num_transferable, tau=args.tau,
                       error_family=args.error_family,
                       heterogeneous=not args.homogeneous, seed=args.seed)
    sc = gen_scenario(design)
    os.makedirs(args.output_dir, exist_ok=True)
    write_dataset_csv(sc.data.target, os.path.join(args.output_dir, "target.csv"))
    for k, src in enumerate(sc.data.sources, 1):
        write_dataset_csv(src, os.path.join(args.output_dir, f"source_{k}.csv"))
    with open(os.path.join(args.output_dir, "coefficients.csv"), "w", encoding="utf-8") as fh:
        fh.write("domain," + ",".join(f"b{j}" for j in range(1, design.p + 1)) + "\n")
        for k, b in enumerate((sc.beta0,) + sc.source_betas):
            fh.write(f"{k}," + ",".join(fmt(v) for v in b) + "\n")
    print(f"wrote target and {design.K} sources to {args.output_dir}; "
          f"transferable: {list(sc.transferable)}")


def cmd_fit(args):
    data = MultiSourceData(load_dataset_csv(args.target, 0), ())
    lam = args.lam
    if lam is None:
        lam = cross_validate_lambda(data, (0,), args.tau, folds=args.folds, seed=args.cv_seed).lam
    fit = fit_penalized_qr(data, (0,), args.tau, lam)
    print(f"# lambda={fmt(fit.lam)} objective={fmt(fit.objective)} "
          f"kkt={fit.kkt_residual:.3g} status={fit.status}", file=sys.stderr)
    _write_coefs(fit.beta, args.out)


def cmd_transfer(args):
    data = _load(args)
    tset = _int_set(args.transfer_set) if args.transfer_set is not None else \
        tuple(range(1, data.K + 1))
    est = oracle_transfer(data, tset, args.tau, args.lambda_beta, args.lambda_delta,
                          folds=args.folds, cv_seed=args.cv_seed)
    print(f"# transfer_set={list(est.transfer_set)} lambda_beta={fmt(est.lambda_beta)} "
          f"lambda_delta={fmt(est.lambda_delta)}", file=sys.stderr)
    _write_coefs(est.beta_target, args.out)


def cmd_infer(args):
    data = _load(args)
    tset = _int_set(args.transfer_set) if args.transfer_set is not None else \
        tuple(range(1, data.K + 1))
    est = oracle_transfer(data, tset, args.tau, folds=args.folds, cv_seed=args.cv_seed)
    res = confidence_interval(data, tset, args.tau, args.m, est.beta_target, alpha=args.alpha,
                              folds=args.folds, cv_seed=args.cv_seed)
    print("m,beta_hat,beta_tilde,h_cond,sigma,ci_low,ci_high,alpha")
    print(",".join([str(res.m)] + [fmt(v) for v in (res.beta_hat, res.beta_tilde, res.h_cond,
                                                    res.sigma, res.ci_low, res.ci_high,
                                                    res.alpha)]))


def cmd_detect(args):
    data = _load(args)
    cfg = DetectionConfig(epsilon0=args.epsilon0, split_seed=args.split_seed, folds=args.folds,
                          cv_seed=args.cv_seed)
    res = detect(data, args.tau, cfg)
    print(f"baseline_loss={fmt(res.baseline_loss)}")
    for k, v in enumerate(res.source_losses, 1):
        print(f"source {k}: loss={fmt(v)}{' selected' if k in res.selected else ''}")
    print("selected=" + ",".join(str(k) for k in res.selected))
    if args.out:
        _write_coefs(res.final_estimate.beta_target, args.out)


def cmd_experiment(args):
    overrides = {k: getattr(args, k) for k in
                 ("output_dir", "replications", "threads", "seed", "methods", "taus", "h",
                  "num_transferable", "p", "n0", "nk", "K", "s0", "error_family")}
    config = parse_config(args.config, overrides)
    os.makedirs(config.output_dir, exist_ok=True)

    def progress(i, n):
        if not args.quiet:
            print(f"\r{i}/{n} scenarios", end="" if i < n else "\n", file=sys.stderr)

    rows = run_experiment(config, progress)
    csv_path = os.path.join(config.output_dir, "results.csv")
    emit_csv(rows, csv_path)
    emit_svg_plot(rows, ("method",), os.path.join(config.output_dir, "errors.svg"))
    failed = sum(1 for r in rows if r.error)
    print(f"wrote {len(rows)} rows to {csv_path} ({failed} failed)")


def cmd_plot(args):
    rows = read_results_csv(args.results)
    emit_svg_plot(rows, tuple(args.group_by.split(",")), args.out)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="transqr", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def data_args(p, sources=True):
        p.add_argument("--target", required=True, help="target dataset CSV (y,z1..zp)")
        if sources:
            p.add_argument("--source", action="append", help="source dataset CSV, repeatable")
        p.add_argument("--tau", type=float, default=0.5)
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--cv-seed", type=int, default=0)

    p = sub.add_parser("simulate", help="write a simulated scenario as CSV files")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--n0", type=int, default=100)
    p.add_argument("--nk", type=int, default=150)
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--h", type=float, default=6.0)
    p.add_argument("--s0", type=int, default=15)
    p.add_argument("--num-transferable", type=int, default=10)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--error-family", choices=ERROR_FAMILIES, default="normal")
    p.add_argument("--homogeneous", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="penalized quantile regression on one dataset")
    data_args(p, sources=False)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transfer", help="two-step transfer estimate")
    data_args(p)
    p.add_argument("--transfer-set", help="comma separated source numbers (default: all)")
    p.add_argument("--lambda-beta", type=float)
    p.add_argument("--lambda-delta", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("infer", help="confidence interval for one coefficient")
    data_args(p)
    p.add_argument("--transfer-set")
    p.add_argument("--m", type=int, required=True, help="1-based coefficient index")
    p.add_argument("--alpha", type=float, default=0.025)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("detect", help="select transferable sources")
    data_args(p)
    p.add_argument("--epsilon0", type=float, default=0.01)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("experiment", help="replicated simulation study")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--output-dir")
    p.add_argument("--replications")
    p.add_argument("--threads")
    p.add_argument("--seed")
    p.add_argument("--methods")
    p.add_argument("--taus")
    p.add_argument("--h")
    p.add_argument("--num-transferable")
    p.add_argument("--p")
    p.add_argument("--n0")
    p.add_argument("--nk")
    p.add_argument("--K")
    p.add_argument("--s0")
    p.add_argument("--error-family")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="SVG chart from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--group-by", default="method")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        np.seterr(all="ignore")
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK
