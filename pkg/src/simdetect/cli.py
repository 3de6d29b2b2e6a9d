"""Command-line interface: ``simdetect gen|test|calibrate|hc|power``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 a power run
finished with reference-flag failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baseline_hc import hc_statistic
from .detect import Anova, CalibratedThresholds, CalibrationMode, calibrate, run_test
from .errors import NumericalError, SimDetectError
from .models import CovarianceSpec, Dataset, Link, ModelSpec, generate
from .sir import DEFAULT_SLICES, slice_dataset
from .sparse_eig import SdpSettings

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_FLAGS = 0, 1, 2, 3

log = logging.getLogger("simdetect")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_test_options(p: argparse.ArgumentParser):
    p.add_argument("data", help="CSV with columns y,x1,...,xp")
    p.add_argument("--h-slices", type=int, default=DEFAULT_SLICES, metavar="H")
    p.add_argument("--ks", type=int, help="sparsity of the restricted eigenvalue (default k * s from the sidecar)")
    p.add_argument("--k", type=int, default=1, help="multiplier for s when --ks is not given")
    p.add_argument("--mode", choices=["auto", "exact", "sdp"], default="auto")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--null-reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--anova", choices=[a.value for a in Anova], default=Anova.RAW.value)
    p.add_argument("--bonferroni", action="store_true", help="use level/2 for each spectral test")
    p.add_argument("--gap-tolerance", type=float, default=1e-2, help="SDP duality gap, relative to max |a_ij|")
    p.add_argument("--max-iterations", type=int, default=3000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simdetect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="simulate a dataset to CSV plus a JSON sidecar")
    g.add_argument("--model", default="null", choices=[m.value for m in Link])
    g.add_argument("--s", type=int)
    g.add_argument("--kappa", type=float, default=1.0)
    g.add_argument("--sigma-eps", type=float, default=1.0)
    g.add_argument("--support", choices=["first", "random"], default="first")
    g.add_argument("--cov", choices=["identity", "toeplitz", "blocked"], default="identity")
    g.add_argument("--p", type=int, default=100)
    g.add_argument("--rho", type=float, default=0.0)
    g.add_argument("--cross", type=float, default=0.1)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--out", required=True)

    t = sub.add_parser("test", help="calibrate on the data's x and test; prints JSON")
    _add_test_options(t)
    t.add_argument("--thresholds", help="thresholds JSON from 'calibrate' (skips calibration)")
    t.add_argument("--dump-slices", metavar="CSV", help="write slice sizes and means")
    t.add_argument("--full-solve", action="store_true", help="solve the SDP fully instead of stopping at the decision")

    c = sub.add_parser("calibrate", help="null thresholds for the data's x; prints JSON")
    _add_test_options(c)
    c.add_argument("-o", "--out")

    h = sub.add_parser("hc", help="Higher Criticism score of a dataset")
    h.add_argument("data")
    h.add_argument("--c-hc", type=float, help="also report hc_score > c_hc")
    h.add_argument("--full", action="store_true", help="include t statistics and p-values")

    w = sub.add_parser("power", help="run a power experiment from a config file or built-in name")
    w.add_argument("config", nargs="?", help="TOML path or built-in name")
    w.add_argument("--list", action="store_true", help="list built-in configs")
    w.add_argument("--profile", help="profile in the config, e.g. desk or full")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--out-dir", default="results")
    w.add_argument("--replications", type=int)
    w.add_argument("--master-seed", type=int)
    w.add_argument("--level", type=float)
    return parser


def _ks(args, ds: Dataset) -> int:
    if args.ks is not None:
        return args.ks
    s = ((ds.truth or {}).get("model") or {}).get("s") or 0
    if s < 1:
        raise UsageError("no support size in the sidecar; pass --ks")
    return args.k * int(s)


def _load(path) -> Dataset:
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return Dataset.from_csv(path)


def _settings(args) -> SdpSettings:
    return SdpSettings(gap_tolerance=args.gap_tolerance, max_iterations=args.max_iterations)


def _calibrate(args, ds: Dataset, ks: int) -> CalibratedThresholds:
    return calibrate(
        ds.x, args.h_slices, ks, _settings(args), args.level, args.null_reps,
        CalibrationMode.PER_DATASET, args.seed, args.mode, args.anova, args.bonferroni,
    )


def cmd_gen(args) -> int:
    model = ModelSpec(link=args.model, s=args.s, support=args.support, kappa=args.kappa, sigma_eps=args.sigma_eps)
    cov = CovarianceSpec(kind=args.cov, p=args.p, rho=args.rho, cross=args.cross)
    ds = generate(model, cov, args.n, np.random.default_rng(args.seed))
    path = ds.to_csv(args.out, sidecar={"seed": args.seed})
    print(path)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    ds = _load(args.data)
    th = _calibrate(args, ds, _ks(args, ds))
    text = th.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_test(args) -> int:
    ds = _load(args.data)
    ks = _ks(args, ds)
    if args.thresholds:
        th = CalibratedThresholds.from_dict(json.loads(Path(args.thresholds).read_text()))
    else:
        th = _calibrate(args, ds, ks)
    if args.dump_slices:
        slice_dataset(ds.x, ds.y, args.h_slices).to_csv(args.dump_slices)
    out = run_test(ds, th, args.h_slices, ks, _settings(args), early_stop=not args.full_solve)
    print(out.to_json())
    return EXIT_OK


def cmd_hc(args) -> int:
    res = hc_statistic(_load(args.data))
    d = res.to_dict() if args.full else {k: v for k, v in res.to_dict().items() if k in ("hc_score", "threshold_index")}
    if args.c_hc is not None:
        d["reject"] = bool(res.hc_score > args.c_hc)
    print(json.dumps(d, indent=2))
    return EXIT_OK


def cmd_power(args) -> int:
    from .experiments import builtin_configs, emit_outputs, load_config, run_experiment

    if args.list:
        print("\n".join(builtin_configs()))
        return EXIT_OK
    if not args.config:
        raise UsageError("power needs a config (or --list)")
    try:
        config = load_config(
            args.config, args.profile,
            replications=args.replications, master_seed=args.master_seed, level=args.level,
        )
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    report = run_experiment(config, workers=args.workers)
    emit_outputs(report, args.out_dir)
    print(Path(args.out_dir) / "power_table.csv")
    for f in report.failures:
        print(f"cell {f['cell']} failed: {f['error']}", file=sys.stderr)
    for f in report.flags:
        print(
            f"FLAG {f.method} model={f.model} p={f.p} rho={f.rho:g} type={f.cov_type}: "
            f"power {f.power:.2f}, reference {f.reference:.2f} (tolerance {f.tolerance:.2f})",
            file=sys.stderr,
        )
    return EXIT_FLAGS if report.flags else EXIT_OK


COMMANDS = {"gen": cmd_gen, "test": cmd_test, "calibrate": cmd_calibrate, "hc": cmd_hc, "power": cmd_power}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"simdetect: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, SimDetectError, ValueError) as exc:
        print(f"simdetect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
