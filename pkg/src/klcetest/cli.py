"""Command-line entry point: audit, diagnose, metrics, recalibrate, simulate.

Exit codes: 0 local calibration retained, 2 rejected, 1 usage or input error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import sys
import warnings
from typing import Sequence

import numpy as np

from . import metrics
from . import recalibration as recal
from . import simulation as sim
from ._backend import NAME as BACKEND
from .bootstrap import DegenerateNullWarning, TestConfig, run_test
from .data import (AuditError, dataset_to_csv, format_float, load_dataset,
                   standardize_features)
from .kernels import KernelError, KernelSpec
from .klce import kce2
from .lcb import NoSupportError, group_trend, lcb_profile

EXIT_RETAINED = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2

CONFIG_KEYS = ("kernel.k.family", "kernel.k.bandwidth", "kernel.l.family",
               "kernel.l.bandwidth")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _flatten(obj, prefix=""):
    out = {}
    for key, value in obj.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def load_config(path: str | None) -> dict:
    """Read a JSON config with dotted (``kernel.k.family``) or nested keys."""
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        flat = _flatten(json.load(fh))
    unknown = sorted(set(flat) - set(CONFIG_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return flat


def kernel_specs(args) -> tuple[KernelSpec, KernelSpec]:
    cfg = load_config(getattr(args, "config", None))

    def pick(side, attr):
        flag = getattr(args, f"{side}_{attr}")
        if flag is not None:
            return flag
        return cfg.get(f"kernel.{side}.{attr}", "rbf" if attr == "family" else "median")

    return (KernelSpec.parse(pick("k", "family"), pick("k", "bandwidth")),
            KernelSpec.parse(pick("l", "family"), pick("l", "bandwidth")))


def _features(args):
    return [f.strip() for f in args.features.split(",")] if args.features else None


def read_dataset(path: str, args):
    if path == "-":
        d = load_dataset(sys.stdin.buffer.read(), args.label, args.score, _features(args))
    else:
        d = load_dataset(path, args.label, args.score, _features(args))
    return standardize_features(d) if args.standardize else d


@contextlib.contextmanager
def open_output(path: str):
    if path == "-":
        yield sys.stdout
        sys.stdout.flush()
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def dump_json(obj, path: str) -> None:
    with open_output(path) as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True))
        fh.write("\n")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _test_config(args) -> TestConfig:
    k_spec, l_spec = kernel_specs(args)
    return TestConfig(n_bootstrap=args.bootstrap, alpha_p=args.alpha, seed=args.seed,
                      k_spec=k_spec, l_spec=l_spec, bound_B=args.bound_b,
                      recenter=not args.no_recenter, threads=args.threads)


def audit_report(d, cfg: TestConfig, n_bins: int) -> dict:
    res = run_test(d, cfg)
    report = res.to_report()
    report["kce2"] = kce2(d, res.k_spec).value
    report["metrics"] = metrics.summary(d, n_bins)
    return report


def _provenance(args, **extra) -> dict:
    # destinations and thread count do not change results
    skip = {"func", "threads", "output", "report", "save", "trend_json", "reliability_csv"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg.update(extra)
    cfg["backend"] = BACKEND
    return cfg


def cmd_audit(args) -> int:
    d = read_dataset(args.input, args)
    cfg = _test_config(args)
    report = audit_report(d, cfg, args.n_bins)
    report["config"] = _provenance(args, test=cfg.describe())
    dump_json(report, args.output)
    return EXIT_REJECTED if report["reject"] else EXIT_RETAINED


def cmd_diagnose(args) -> int:
    d = read_dataset(args.input, args)
    kernels = kernel_specs(args)
    queries = None
    if args.queries:
        q = read_dataset(args.queries, args)
        if q.feature_names != d.feature_names:
            raise UsageError("query file features differ from the input file")
        queries = list(zip(q.x, q.fhat))
    profile = lcb_profile(d, kernels, queries)
    with open_output(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, "fhat", "bias", "debiased_fhat", "effective_weight"])
        for est in profile.ok:
            w.writerow([*(format_float(v) for v in est.query_x), format_float(est.query_fhat),
                        format_float(est.bias), format_float(est.debiased_fhat),
                        format_float(est.effective_weight)])
    for _, msg in profile.failures:
        print(f"warning: {msg}", file=sys.stderr)
    if args.trend_json:
        if not (args.group_feature and args.axis_feature):
            raise UsageError("--trend-json needs --group-feature and --axis-feature")
        names = list(d.feature_names)
        for name in (args.group_feature, args.axis_feature):
            if name not in names:
                raise UsageError(f"unknown feature {name!r}")
        fits = group_trend(profile.ok, names.index(args.group_feature),
                           names.index(args.axis_feature), args.degree)
        dump_json({
            "group_feature": args.group_feature,
            "axis_feature": args.axis_feature,
            "degree": args.degree,
            "groups": [{"group": g, "coefficients": [float(c) for c in coef]}
                       for g, coef in fits.items()],
        }, args.trend_json)
    return EXIT_RETAINED


def cmd_metrics(args) -> int:
    d = read_dataset(args.input, args)
    dump_json(metrics.summary(d, args.n_bins), args.output)
    if args.reliability_csv:
        with open_output(args.reliability_csv) as fh:
            metrics.reliability(d, args.n_bins).to_csv(fh)
    return EXIT_RETAINED


def cmd_recalibrate(args) -> int:
    if args.then_audit and args.report == "-" and args.output == "-":
        raise UsageError("--then-audit needs --report or --output to be a file")
    test = read_dataset(args.test, args)
    if args.load:
        with open(args.load, encoding="utf-8") as fh:
            r = recal.Recalibrator.from_json(fh.read())
    else:
        if not args.calib:
            raise UsageError("need --calib (or --load)")
        r = recal.FITTERS[args.method](read_dataset(args.calib, args))
    post = recal.apply(r, test)
    with open_output(args.output) as fh:
        fh.write(dataset_to_csv(post, args.label, args.score))
    if args.save:
        with open(args.save, "w", encoding="utf-8") as fh:
            fh.write(r.to_json() + "\n")
    if not args.then_audit:
        return EXIT_RETAINED
    cfg = _test_config(args)
    report = {
        "recalibrator": json.loads(r.to_json()),
        "pre": audit_report(test, cfg, args.n_bins),
        "post": audit_report(post, cfg, args.n_bins),
        "config": _provenance(args, test=cfg.describe()),
    }
    dump_json(report, args.report)
    return EXIT_REJECTED if report["post"]["reject"] else EXIT_RETAINED


def cmd_simulate(args) -> int:
    cfg = sim.SimConfig(d=2, N=500, replicates=args.replicates, alpha_p=args.alpha,
                        n_bootstrap=args.bootstrap, seed=args.seed,
                        recenter=not args.no_recenter, threads=args.threads)
    if args.mode == "sample":
        d_values, n_values = _ints(args.d_grid), _ints(args.n_grid)
        if len(d_values) != 1 or len(n_values) != 1:
            raise UsageError("--mode sample takes a single --d-grid and --n-grid value")
        scfg = sim.SimConfig(d=d_values[0], N=n_values[0], seed=args.seed, model=args.model)
        data = sim.gen_synthetic(scfg, args.replicate)
        with open_output(args.output) as fh:
            fh.write(dataset_to_csv(data))
        return EXIT_RETAINED
    if args.mode == "type1":
        report = sim.type1_experiment(cfg, _floats(args.bandwidth_scales),
                                      _ints(args.n_grid), _ints(args.d_grid))
    else:
        report = sim.type2_experiment(cfg, _ints(args.d_grid), _ints(args.n_grid))
    buf = io.StringIO()
    report.write_csv(buf)
    with open_output(args.output) as fh:
        fh.write(buf.getvalue())
    return EXIT_RETAINED


def _add_data_args(p, positional=True):
    if positional:
        p.add_argument("input", help="CSV with a header row ('-' for stdin)")
    p.add_argument("--label", default="y", help="label column (default: y)")
    p.add_argument("--score", default="p", help="score column (default: p)")
    p.add_argument("--features", help="comma-separated feature columns "
                                      "(default: all other columns)")
    p.add_argument("--standardize", action="store_true",
                   help="scale features to mean 0, sample sd 1")


def _add_kernel_args(p):
    p.add_argument("--config", help="JSON file with kernel.{k,l}.{family,bandwidth}")
    for side, what in (("k", "score"), ("l", "feature")):
        p.add_argument(f"--{side}-family", choices=["rbf", "constant"],
                       help=f"{what}-space kernel family (default: rbf)")
        p.add_argument(f"--{side}-bandwidth",
                       help=f"{what}-space bandwidth: 'median' or a positive number")


def _add_test_args(p):
    p.add_argument("--bootstrap", type=int, default=500, help="bootstrap replicates")
    p.add_argument("--alpha", type=float, default=0.05, help="significance level")
    p.add_argument("--bound-b", type=float, default=1.0,
                   help="per-pair bound B for the analytic threshold")
    p.add_argument("--no-recenter", action="store_true",
                   help="resample raw residuals instead of mean-centred ones")
    p.add_argument("--n-bins", type=int, default=10, help="bins for ECE/MCE")


def _add_run_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker threads")
    p.add_argument("--output", "-o", default="-", help="output path ('-' for stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="klcetest", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("audit", help="test local calibration; JSON report")
    _add_data_args(p)
    _add_kernel_args(p)
    _add_test_args(p)
    _add_run_args(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("diagnose", help="per-record local calibration bias CSV")
    _add_data_args(p)
    _add_kernel_args(p)
    _add_run_args(p)
    p.add_argument("--queries", help="CSV of query points (default: the input records)")
    p.add_argument("--trend-json", help="write per-group polynomial fits here")
    p.add_argument("--group-feature", help="feature whose values define groups")
    p.add_argument("--axis-feature", help="feature on the fit's x-axis")
    p.add_argument("--degree", type=int, default=3)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("metrics", help="Brier, ECE, MCE, accuracy as JSON")
    _add_data_args(p)
    _add_run_args(p)
    p.add_argument("--n-bins", type=int, default=10)
    p.add_argument("--reliability-csv", help="write reliability-diagram bins here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("recalibrate", help="fit on --calib, apply to --test")
    _add_data_args(p, positional=False)
    _add_kernel_args(p)
    _add_test_args(p)
    _add_run_args(p)
    p.add_argument("--calib", help="calibration CSV")
    p.add_argument("--test", required=True, help="test CSV to recalibrate")
    p.add_argument("--method", choices=sorted(recal.FITTERS), default="temperature")
    p.add_argument("--save", help="write the fitted recalibrator JSON here")
    p.add_argument("--load", help="reuse a recalibrator JSON instead of fitting")
    p.add_argument("--then-audit", action="store_true",
                   help="audit the test set before and after recalibration")
    p.add_argument("--report", default="-", help="audit report path for --then-audit")
    p.set_defaults(func=cmd_recalibrate)

    p = sub.add_parser("simulate", help="synthetic Type-I/II experiments; CSV")
    p.add_argument("--mode", choices=["type1", "type2", "sample"], default="type2")
    p.add_argument("--d-grid", default="2,3,4,5,6,7,8,9,10")
    p.add_argument("--n-grid", default="500,1000")
    p.add_argument("--bandwidth-scales", default="1",
                   help="type1: comma-separated multiples of the median bandwidth")
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstrap", type=int, default=500)
    p.add_argument("--no-recenter", action="store_true")
    p.add_argument("--model", choices=[sim.BAYES, sim.DROPLAST], default=sim.DROPLAST,
                   help="sample mode: scoring model")
    p.add_argument("--replicate", type=int, default=0, help="sample mode: replicate index")
    _add_run_args(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        with np.errstate(all="ignore"), warnings.catch_warnings():
            # surfaced in the report's "warnings" field instead
            warnings.simplefilter("ignore", DegenerateNullWarning)
            return args.func(args)
    except (AuditError, KernelError, NoSupportError, recal.RecalibrationError,
            UsageError, ValueError, OSError) as exc:
        print(f"klcetest: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
