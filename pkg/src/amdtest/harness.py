"""Monte Carlo experiments: power curves, type-I calibration, direction accuracy, lambda sweeps.

Each (nu, rep) cell draws its own data from keyed substreams, so every table is
identical whatever the worker count or execution order. All methods inside a
cell see the same data and the same Phase 1/Phase 2 seeds (common random
numbers), which makes method comparisons paired.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import rng as rngmod
from .errors import AMDError, HarnessError, InputError
from .estimator import SampleTriple
from .kernels import median_heuristic
from .phase1 import Phase1Config, run_phase1
from .phase2 import TestConfig, run_amd_b, run_oriented, run_phase2
from .synthetics import DistributionSpec, MixtureSpec, mean_shift_pair, sample, true_sign

log = logging.getLogger(__name__)

METHODS = ("AMD", "AMD-B", "AMD-NA", "AMD-SQ", "MMD-H:+", "MMD-H:-")
_PHASE1_MODE = {"AMD": "AMD", "AMD-B": "AMD", "AMD-NA": "AMD-NA", "AMD-SQ": "AMD-SQ"}
MAX_FAILURE_FRACTION = 0.01


def canonical_method(name: str) -> str:
    name = name.strip().replace("−", "-")
    upper = name.upper()
    for m in METHODS:
        if m.upper() == upper:
            return m
    raise InputError(f"unknown method {name!r}; choose from {METHODS}")


def _default_pair():
    return mean_shift_pair()


@dataclass(frozen=True)
class ExperimentConfig:
    P: DistributionSpec = field(default_factory=lambda: _default_pair()[0])
    Q: DistributionSpec = field(default_factory=lambda: _default_pair()[1])
    nu_grid: Tuple[float, ...] = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    m: int = 100
    reps: int = 300
    phase1: Phase1Config = field(default_factory=Phase1Config)
    test: TestConfig = field(default_factory=TestConfig)
    methods: Tuple[str, ...] = ("AMD",)
    master_seed: int = 0
    workers: int = 1
    # "learned": Phase 2 uses the Phase 1 kernel; "median": it uses the
    # median-heuristic kernel, keeping only F from Phase 1
    phase2_kernel: str = "learned"
    # test-only degenerate generator: Y is an exact copy of X
    coupled_candidates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "nu_grid", tuple(float(v) for v in self.nu_grid))
        object.__setattr__(self, "methods", tuple(canonical_method(m) for m in self.methods))
        if int(self.reps) < 1:
            raise InputError("reps must be >= 1")
        if any(not 0.0 <= v <= 1.0 for v in self.nu_grid):
            raise InputError("nu values must lie in [0, 1]")
        if int(self.m) < 2:
            raise InputError("m must be >= 2")
        if int(self.workers) < 1:
            raise InputError("workers must be >= 1")
        if self.phase2_kernel not in ("learned", "median"):
            raise InputError("phase2_kernel must be 'learned' or 'median'")
        MixtureSpec(self.P, self.Q, 0.5)  # dimension check


@dataclass
class TrialRecord:
    method: str
    nu: float
    m: int
    rep: int
    F: int = 0
    reject: bool = False
    p_value: float = float("nan")
    statistic: float = float("nan")
    tau: float = float("nan")
    wall_time: float = 0.0
    error: Optional[str] = None

    def same_outcome(self, other: "TrialRecord") -> bool:
        """Equality of every field except ``wall_time``."""
        a, b = dict(vars(self)), dict(vars(other))
        a.pop("wall_time")
        b.pop("wall_time")
        return all(a[k] == b[k] or (isinstance(a[k], float) and math.isnan(a[k]) and math.isnan(b[k]))
                   for k in a)


def _nu_key(nu: float) -> int:
    return int(round(nu * 1_000_000))


def draw_cell_data(cfg: ExperimentConfig, nu: float, rep: int, m: Optional[int] = None):
    """Train and test triples for one cell: 2m rows per distribution, split in halves."""
    m = int(cfg.m if m is None else m)
    key = (_nu_key(nu), m, rep)
    mix = MixtureSpec(cfg.P, cfg.Q, nu)
    Z = sample(mix, 2 * m, rngmod.substream(cfg.master_seed, rngmod.DATA_Z, *key))
    X = sample(cfg.P, 2 * m, rngmod.substream(cfg.master_seed, rngmod.DATA_X, *key))
    if cfg.coupled_candidates:
        Y = X.copy()
    else:
        Y = sample(cfg.Q, 2 * m, rngmod.substream(cfg.master_seed, rngmod.DATA_Y, *key))
    return SampleTriple(Z[:m], X[:m], Y[:m]), SampleTriple(Z[m:], X[m:], Y[m:])


def _cell_seeds(cfg, nu, rep, m):
    key = (cfg.master_seed, _nu_key(nu), int(m), int(rep))
    return rngmod.mix_seed("phase1", *key), rngmod.mix_seed("phase2", *key)


def _run_cell(cfg: ExperimentConfig, nu: float, rep: int, methods: Sequence[str]) -> List[TrialRecord]:
    """Run every requested method on one cell's data, sharing Phase 1 where possible."""
    train, test = draw_cell_data(cfg, nu, rep)
    s1, s2 = _cell_seeds(cfg, nu, rep, cfg.m)
    tcfg = replace(cfg.test, seed=s2)
    phase1_cache = {}
    median = {}
    out = []
    for method in methods:
        start = time.perf_counter()
        rec = TrialRecord(method, float(nu), int(cfg.m), int(rep))
        try:
            if method.startswith("MMD-H"):
                if "k" not in median:
                    median["k"] = median_heuristic(train.Z, train.X, train.Y)
                F_spec = 1 if method.endswith("+") else -1
                res = run_oriented(test, median["k"], F_spec, tcfg)
            else:
                mode = _PHASE1_MODE[method]
                if mode not in phase1_cache:
                    phase1_cache[mode] = run_phase1(train, replace(cfg.phase1, mode=mode, seed=s1))
                p1 = phase1_cache[mode]
                kernel = p1.selected
                if cfg.phase2_kernel == "median":
                    if "k" not in median:
                        median["k"] = median_heuristic(train.Z, train.X, train.Y)
                    kernel = median["k"]
                if method == "AMD-B":
                    res = run_amd_b(test, kernel, tcfg)
                else:
                    res = run_phase2(test, kernel, p1.F, tcfg)
            rec.F, rec.reject, rec.p_value = int(res.F), bool(res.reject), float(res.p_value)
            rec.statistic, rec.tau = float(res.statistic), float(res.tau)
        except (AMDError, FloatingPointError, np.linalg.LinAlgError) as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
            log.warning("trial %s nu=%s rep=%s failed: %s", method, nu, rep, rec.error)
            log.debug("%s", traceback.format_exc())
        rec.wall_time = time.perf_counter() - start
        out.append(rec)
    return out


def run_trial(cfg: ExperimentConfig, method: str, nu: float, rep: int) -> TrialRecord:
    """One method end to end on freshly drawn data for cell ``(nu, rep)``."""
    return _run_cell(cfg, nu, rep, [canonical_method(method)])[0]


def _cell_job(args):
    cfg, nu, rep, methods = args
    return _run_cell(cfg, nu, rep, methods)


def _map(cfg, fn, jobs):
    if cfg.workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=int(cfg.workers)) as ex:
        chunk = max(1, len(jobs) // (4 * int(cfg.workers)))
        return list(ex.map(fn, jobs, chunksize=chunk))


def run_grid(cfg: ExperimentConfig, nus=None, methods=None) -> List[TrialRecord]:
    """All trials over ``nus`` x ``range(reps)`` x ``methods``, in deterministic order."""
    nus = cfg.nu_grid if nus is None else tuple(nus)
    methods = cfg.methods if methods is None else tuple(canonical_method(m) for m in methods)
    jobs = [(cfg, nu, rep, methods) for nu in nus for rep in range(int(cfg.reps))]
    records = [r for cell in _map(cfg, _cell_job, jobs) for r in cell]
    _check_failures(records)
    return records


def _check_failures(records):
    failed = sum(r.error is not None for r in records)
    if records and failed / len(records) > MAX_FAILURE_FRACTION:
        raise HarnessError(f"{failed} of {len(records)} trials failed")


def binomial_stderr(rate: float, n: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / n) if n > 0 else float("nan")


def _aggregate(records, key_fn):
    groups: Dict[tuple, List[TrialRecord]] = {}
    for r in records:
        groups.setdefault(key_fn(r), []).append(r)
    rows = []
    for key, recs in groups.items():
        ok = [r for r in recs if r.error is None]
        n = len(ok)
        rate = sum(r.reject for r in ok) / n if n else float("nan")
        rows.append((key, {
            "rejection_rate": rate,
            "stderr": binomial_stderr(rate, n),
            "mean_p_value": float(np.mean([r.p_value for r in ok])) if n else float("nan"),
            "trials": n,
            "failures": len(recs) - n,
        }))
    return rows


POWER_COLUMNS = ("method", "nu", "rejection_rate", "stderr", "mean_p_value", "trials", "failures")


def power_curve(cfg: ExperimentConfig, records: Optional[List[TrialRecord]] = None) -> List[dict]:
    """Rejection rate per (method, nu); one row each, methods in config order."""
    if records is None:
        records = run_grid(cfg)
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows = [{"method": k[0], "nu": k[1], **v}
            for k, v in _aggregate(records, lambda r: (r.method, r.nu))]
    rows.sort(key=lambda row: (order.get(row["method"], len(order)), row["nu"]))
    return rows


TYPE1_COLUMNS = ("method", "rejection_rate", "stderr", "mean_p_value", "trials", "failures")


def type1_calibration(cfg: ExperimentConfig) -> List[dict]:
    """Rejection rate per method at ``nu = 0.5``, where no direction holds."""
    rows = power_curve(replace(cfg, nu_grid=(0.5,)))
    for row in rows:
        row.pop("nu")
    return rows


BETA_COLUMNS = ("m", "beta", "stderr", "trials", "failures")


def _beta_job(args):
    cfg, nu, m, rep = args
    train, _ = draw_cell_data(cfg, nu, rep, m)
    s1, _ = _cell_seeds(cfg, nu, rep, m)
    try:
        return run_phase1(train, replace(cfg.phase1, seed=s1)).F, None
    except AMDError as exc:
        return 0, f"{type(exc).__name__}: {exc}"


def beta_curve(cfg: ExperimentConfig, m_grid: Sequence[int], nu: Optional[float] = None) -> List[dict]:
    """Fraction of reps whose Phase 1 direction matches the true sign, per sample size."""
    nu = cfg.nu_grid[0] if nu is None else float(nu)
    if nu == 0.5:
        raise InputError("beta is undefined at nu = 0.5")
    sign = true_sign(MixtureSpec(cfg.P, cfg.Q, nu))
    rows = []
    for m in m_grid:
        jobs = [(cfg, nu, int(m), rep) for rep in range(int(cfg.reps))]
        results = _map(cfg, _beta_job, jobs)
        ok = [F for F, err in results if err is None]
        failures = len(results) - len(ok)
        if failures / len(results) > MAX_FAILURE_FRACTION:
            raise HarnessError(f"{failures} of {len(results)} Phase 1 runs failed at m={m}")
        beta = sum(F == sign for F in ok) / len(ok)
        rows.append({"m": int(m), "beta": beta, "stderr": binomial_stderr(beta, len(ok)),
                     "trials": len(ok), "failures": failures})
    return rows


LAMBDA_COLUMNS = ("lambda", "rejection_rate", "stderr", "mean_p_value", "trials", "failures")


def lambda_sweep(cfg: ExperimentConfig, lambda_grid: Sequence[float], nu: Optional[float] = None) -> List[dict]:
    """AMD rejection rate per regularisation weight at a fixed ``nu``."""
    nu = cfg.nu_grid[0] if nu is None else float(nu)
    if nu == 0.5:
        raise InputError("lambda sweep needs nu != 0.5")
    rows = []
    for lam in lambda_grid:
        sub = replace(cfg, phase1=replace(cfg.phase1, lam=float(lam)), nu_grid=(nu,), methods=("AMD",))
        row = power_curve(sub)[0]
        row.pop("method")
        row.pop("nu")
        rows.append({"lambda": float(lam), **row})
    return rows


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(row[c]) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path: str, rows: Sequence[dict], columns: Sequence[str]) -> None:
    write_atomic(path, format_table(rows, columns))
