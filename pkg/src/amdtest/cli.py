"""Command-line entry point.

``amdtest test`` runs the two-phase test on sample files; ``amdtest bench``
runs the Monte Carlo suites and writes a comma-separated table.

Exit codes: 0 success (whatever the test decides), 1 usage error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from . import harness
from . import rng as rngmod
from .errors import (AMDError, DegenerateDataError, HarnessError, InputError, NumericError,
                     UnsupportedSpecError)
from .estimator import SampleTriple
from .kernels import median_heuristic
from .phase1 import Phase1Config, run_phase1
from .phase2 import TestConfig, run_amd_b, run_oriented, run_phase2
from .synthetics import laplace_gaussian_pair, mean_shift_pair

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

TEST_MODES = ("amd", "amd-b", "amd-na", "amd-sq", "oriented-p", "oriented-q")
_PHASE1_MODE = {"amd": "AMD", "amd-b": "AMD", "amd-na": "AMD-NA", "amd-sq": "AMD-SQ"}
MIN_ROWS = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_phase1_flags(p):
    p.add_argument("--kernel", choices=("gaussian", "deep"), default="gaussian")
    p.add_argument("--epochs", type=_positive_int, default=200)
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate (default 0.05 gaussian, 0.001 deep)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstraps", type=_positive_int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1,
                   help="worker processes for bench runs; a single test runs in-process")
    p.add_argument("--out", default=None, help="output path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amdtest", description="Anchor-based relative similarity testing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("test", help="test which candidate sample is closer to the anchor")
    t.add_argument("--anchor", help="anchor sample file (Z)")
    t.add_argument("--p", help="first candidate sample file (X)")
    t.add_argument("--q", help="second candidate sample file (Y)")
    for phase in ("train", "test"):
        for name in ("anchor", "p", "q"):
            t.add_argument(f"--{phase}-{name}", default=None)
    t.add_argument("--mode", choices=TEST_MODES, default="amd")
    t.add_argument("--train-frac", type=float, default=0.5)
    t.add_argument("--timings", action="store_true", help="record wall-clock timings")
    _add_phase1_flags(t)

    b = sub.add_parser("bench", help="Monte Carlo benchmark suites")
    b.add_argument("suite", choices=("power", "type1", "beta", "lambda"))
    b.add_argument("--pair", choices=("mean-shift", "laplace-gaussian"), default="mean-shift")
    b.add_argument("--dim", type=_positive_int, default=2)
    b.add_argument("--shift", type=float, default=1.0)
    b.add_argument("--nu", type=_float_list, default=None,
                   help="comma-separated mixture weights")
    b.add_argument("--m", type=_positive_int, default=100)
    b.add_argument("--m-grid", type=_int_list, default=[20, 50, 100, 200])
    b.add_argument("--lambda-grid", type=_float_list, default=[1e-6, 1e-3, 1.0, 10.0])
    b.add_argument("--reps", type=_positive_int, default=300)
    b.add_argument("--methods", type=_str_list, default=None)
    b.add_argument("--phase2-kernel", choices=("learned", "median"), default="learned")
    _add_phase1_flags(b)
    return parser


def read_matrix(path: str) -> np.ndarray:
    """Comma-separated numeric matrix; a non-numeric first line is taken as a header."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise InputError(f"{path}: ragged row {i + 1} has {len(r)} columns, expected {width}")
    try:
        M = np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from exc
    if not np.all(np.isfinite(M)):
        raise InputError(f"{path}: non-finite entry")
    return M


def _check_shapes(named):
    shapes = {k: v.shape for k, v in named.items()}
    if len(set(shapes.values())) != 1:
        desc = ", ".join(f"{k} {s[0]}x{s[1]}" for k, s in shapes.items())
        raise InputError(f"sample shapes differ: {desc}")


def load_triples(args):
    """Train and test triples from explicit split files or from one shuffled split."""
    split_files = [getattr(args, f"{ph}_{n}") for ph in ("train", "test") for n in ("anchor", "p", "q")]
    whole = [args.anchor, args.p, args.q]
    if any(f is not None for f in split_files):
        if any(f is None for f in split_files) or any(f is not None for f in whole):
            raise UsageError("explicit splits need all six --train-*/--test-* files and no --anchor/--p/--q")
        mats = [read_matrix(f) for f in split_files]
        _check_shapes(dict(zip(("train anchor", "train p", "train q"), mats[:3])))
        _check_shapes(dict(zip(("test anchor", "test p", "test q"), mats[3:])))
        if mats[0].shape[1] != mats[3].shape[1]:
            raise InputError("train and test samples have different dimensions")
        train, test = mats[:3], mats[3:]
    else:
        if any(f is None for f in whole):
            raise UsageError("--anchor, --p and --q are required")
        if not 0.0 < args.train_frac < 1.0:
            raise UsageError("--train-frac must lie in (0, 1)")
        Z, X, Y = (read_matrix(f) for f in whole)
        _check_shapes({"anchor": Z, "p": X, "q": Y})
        n = Z.shape[0]
        # one permutation for all three files keeps paired rows paired
        perm = rngmod.substream(args.seed, rngmod.SPLIT).permutation(n)
        n_train = int(round(args.train_frac * n))
        tr, te = perm[:n_train], perm[n_train:]
        train, test = [M[tr] for M in (Z, X, Y)], [M[te] for M in (Z, X, Y)]
    for label, mats in (("train", train), ("test", test)):
        if mats[0].shape[0] < MIN_ROWS:
            raise InputError(f"{label} split has {mats[0].shape[0]} rows; need at least {MIN_ROWS}")
    return SampleTriple(*train), SampleTriple(*test)


def _phase1_config(args, mode="AMD"):
    return Phase1Config(epochs=args.epochs, learning_rate=args.lr, lam=args.lam, mode=mode,
                        kernel_family=args.kernel, seed=args.seed)


def _test_config(args):
    return TestConfig(alpha=args.alpha, bootstraps=args.bootstraps, seed=args.seed)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        harness.write_atomic(out, text)


def cmd_test(args) -> int:
    oriented = args.mode.startswith("oriented")
    if oriented and args.kernel != "gaussian":
        raise UsageError("oriented modes use the median-heuristic Gaussian kernel; drop --kernel deep")
    try:
        p1cfg = _phase1_config(args, _PHASE1_MODE.get(args.mode, "AMD"))
        tcfg = _test_config(args)
    except InputError as exc:
        raise UsageError(str(exc)) from exc
    train, test = load_triples(args)

    t0 = time.perf_counter()
    tie = False
    d_plus = d_minus = None
    if oriented:
        kernel = median_heuristic(train.Z, train.X, train.Y)
        F_spec = 1 if args.mode == "oriented-p" else -1
        t1 = time.perf_counter()
        res = run_oriented(test, kernel, F_spec, tcfg)
    else:
        p1 = run_phase1(train, p1cfg)
        kernel, tie = p1.selected, p1.tie_broken
        d_plus, d_minus = p1.d_plus, p1.d_minus
        t1 = time.perf_counter()
        res = run_amd_b(test, kernel, tcfg) if args.mode == "amd-b" else run_phase2(test, kernel, p1.F, tcfg)
    t2 = time.perf_counter()

    config = {
        "mode": args.mode,
        "train_frac": args.train_frac,
        "train_rows": train.m,
        "test_rows": test.m,
        "dim": train.d,
        "phase1": None if oriented else p1cfg.as_dict(),
        "test": tcfg.as_dict(),
        "inputs": {k: getattr(args, k) for k in ("anchor", "p", "q", "train_anchor", "train_p",
                                                 "train_q", "test_anchor", "test_p", "test_q")},
    }
    doc = {
        "version": __version__,
        "mode": args.mode,
        "kernel": _jsonable(kernel.summary()),
        "F": int(res.F),
        "statistic": float(res.statistic),
        "tau": float(res.tau),
        "alpha": tcfg.alpha,
        "bootstraps": int(tcfg.bootstraps),
        "p_value": float(res.p_value),
        "reject": bool(res.reject),
        "tie_broken": bool(tie),
        "double_reject": bool(res.double_reject),
        "d_plus": d_plus,
        "d_minus": d_minus,
        "seed": args.seed,
        "config": config,
        "timings": {"phase1": t1 - t0, "phase2": t2 - t1} if args.timings else None,
    }
    _emit(_dump(doc), args.out)
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


_BENCH_DEFAULT_NU = {"power": [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0], "type1": [0.5],
                     "beta": [0.3], "lambda": [0.1]}
_BENCH_DEFAULT_METHODS = ("AMD", "AMD-B", "MMD-H:+", "MMD-H:-")


def bench_config(args) -> harness.ExperimentConfig:
    if args.pair == "mean-shift":
        P, Q = mean_shift_pair(args.dim, args.shift)
    else:
        P, Q = laplace_gaussian_pair(args.dim)
    nus = args.nu if args.nu is not None else _BENCH_DEFAULT_NU[args.suite]
    if not nus:
        raise UsageError("--nu is empty")
    methods = args.methods if args.methods is not None else _BENCH_DEFAULT_METHODS
    try:
        return harness.ExperimentConfig(
            P=P, Q=Q, nu_grid=tuple(nus), m=args.m, reps=args.reps,
            phase1=_phase1_config(args), test=_test_config(args), methods=tuple(methods),
            master_seed=args.seed, workers=args.workers, phase2_kernel=args.phase2_kernel)
    except InputError as exc:
        raise UsageError(str(exc)) from exc


def cmd_bench(args) -> int:
    cfg = bench_config(args)
    if args.suite == "power":
        text = harness.format_table(harness.power_curve(cfg), harness.POWER_COLUMNS)
    elif args.suite == "type1":
        text = harness.format_table(harness.type1_calibration(cfg), harness.TYPE1_COLUMNS)
    else:
        if len(cfg.nu_grid) != 1:
            raise UsageError(f"bench {args.suite} takes a single --nu value")
        nu = cfg.nu_grid[0]
        if nu == 0.5:
            raise UsageError(f"bench {args.suite} needs --nu different from 0.5")
        if args.suite == "beta":
            if not args.m_grid or min(args.m_grid) < 2:
                raise UsageError("--m-grid values must be >= 2")
            text = harness.format_table(harness.beta_curve(cfg, args.m_grid, nu), harness.BETA_COLUMNS)
        else:
            if not args.lambda_grid or min(args.lambda_grid) < 0:
                raise UsageError("--lambda-grid values must be nonnegative")
            text = harness.format_table(harness.lambda_sweep(cfg, args.lambda_grid, nu),
                                        harness.LAMBDA_COLUMNS)
    _emit(text, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        handler = cmd_test if args.command == "test" else cmd_bench
        return handler(args)
    except UsageError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (UnsupportedSpecError,) as exc:
        code, msg = EXIT_USAGE, f"unsupported: {exc}"
    except (InputError, DegenerateDataError) as exc:
        code, msg = EXIT_DATA, f"data error: {exc}"
    except (NumericError, HarnessError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, f"numeric failure: {exc}"
    except AMDError as exc:
        code, msg = EXIT_NUMERIC, f"error: {exc}"
    except OSError as exc:
        code, msg = EXIT_DATA, f"I/O error: {exc}"
    sys.stderr.write(" ".join(msg.split()) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
