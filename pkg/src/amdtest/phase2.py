"""Phase 2: wild-bootstrap calibration and the unified one-sided decision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from . import rng as rngmod
from .errors import InputError, NumericError
from .estimator import SampleTriple, h_matrix, u_statistic
from .kernels import KernelParams


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    bootstraps: int = 500
    seed: int = 0

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        if int(self.bootstraps) < 1:
            raise InputError("bootstraps must be >= 1")

    def as_dict(self):
        return {"alpha": self.alpha, "bootstraps": self.bootstraps, "seed": self.seed}


@dataclass(eq=False)
class TestOutcome:
    F: int
    statistic: float
    tau: float
    reject: bool
    p_value: float
    bootstrap_stats: np.ndarray = field(repr=False)
    double_reject: bool = False

    __test__ = False


def bootstrap_weights(m: int, rng: np.random.Generator) -> np.ndarray:
    """Exponential(1) multipliers normalised to sum to ``m``."""
    if m < 2:
        raise InputError("need m >= 2")
    for _ in range(2):
        xi = -np.log1p(-rng.random(m))
        s = xi.sum()
        if s > 0:
            return m * xi / s
    raise NumericError("exponential draws summed to zero twice")


def bootstrap_statistic(h: np.ndarray, zeta) -> float:
    """``sum_{i != j} (zeta_i zeta_j - 1) h_ij / (2 m (m - 1))``."""
    return float(bootstrap_statistics(h, np.asarray(zeta, dtype=float)[None, :])[0])


def bootstrap_statistics(h: np.ndarray, zetas: np.ndarray) -> np.ndarray:
    """Vectorised :func:`bootstrap_statistic` over the rows of ``zetas``."""
    m = h.shape[0]
    if zetas.shape[1] != m:
        raise InputError(f"weights have length {zetas.shape[1]}, h is {m} x {m}")
    H = np.array(h, dtype=float)
    np.fill_diagonal(H, 0.0)
    quad = np.einsum("bi,bi->b", zetas @ H, zetas)
    return (quad - H.sum()) / (2.0 * m * (m - 1))


def draw_bootstrap_stats(h: np.ndarray, B: int, seed: int) -> np.ndarray:
    """``B`` wild-bootstrap statistics; draw ``b`` uses the substream keyed by ``(seed, b)``."""
    m = h.shape[0]
    zetas = np.stack([bootstrap_weights(m, rngmod.substream(seed, rngmod.BOOTSTRAP, b))
                      for b in range(B)])
    return bootstrap_statistics(h, zetas)


def _order_index(B: int, alpha: float) -> int:
    # k = ceil((1 - alpha) * B), guarded against round-off just above an integer
    k = math.ceil((1.0 - alpha) * B - 1e-9)
    return min(max(k, 1), B)


def threshold(stats, F: int, alpha: float) -> float:
    """``tau`` such that ``F * tau`` is the k-th smallest of ``F * T_b``, ``k = ceil((1-alpha) B)``."""
    if F not in (1, -1):
        raise InputError("F must be +1 or -1")
    s = np.sort(F * np.asarray(stats, dtype=float))
    return float(F * s[_order_index(s.size, alpha) - 1])


def p_value(stats, F: int, stat: float) -> float:
    stats = np.asarray(stats, dtype=float)
    return float((1 + np.count_nonzero(F * stats >= F * stat)) / (stats.size + 1))


def decide_from_h(h: np.ndarray, F: int, cfg: TestConfig) -> TestOutcome:
    """Unified one-sided test in direction ``F`` given a precomputed h-matrix."""
    if F not in (1, -1):
        raise InputError("F must be +1 or -1")
    d = u_statistic(h)
    stats = draw_bootstrap_stats(h, int(cfg.bootstraps), cfg.seed)
    tau = threshold(stats, F, cfg.alpha)
    return TestOutcome(F, d, tau, bool(F * d > F * tau), p_value(stats, F, d), stats)


def run_phase2(test_triple: SampleTriple, params: KernelParams, F: int, cfg: TestConfig) -> TestOutcome:
    """Test whether the direction ``F`` found in Phase 1 is significant on held-out data.

    ``test_triple`` must be independent of the data used to choose ``params`` and ``F``.
    """
    return decide_from_h(h_matrix(test_triple, params), F, cfg)


def run_oriented(test_triple: SampleTriple, params: KernelParams, F_spec: int,
                 cfg: TestConfig) -> TestOutcome:
    """Fixed-direction test; with median-heuristic ``params`` this is the MMD-H baseline."""
    return run_phase2(test_triple, params, F_spec, cfg)


def run_amd_b(test_triple: SampleTriple, params: KernelParams, cfg: TestConfig) -> TestOutcome:
    """Test both directions at level ``alpha / 2`` on one set of bootstrap draws."""
    h = h_matrix(test_triple, params)
    d = u_statistic(h)
    stats = draw_bootstrap_stats(h, int(cfg.bootstraps), cfg.seed)
    half = cfg.alpha / 2.0
    tau_p = threshold(stats, 1, half)
    tau_m = threshold(stats, -1, half)
    rej_p = d > tau_p
    rej_m = -d > -tau_m
    p_p = p_value(stats, 1, d)
    p_m = p_value(stats, -1, d)
    p = min(1.0, 2.0 * min(p_p, p_m))
    double = bool(rej_p and rej_m)
    if double:
        F = 1 if abs(d - tau_p) >= abs(d - tau_m) else -1
    elif rej_p or rej_m:
        F = 1 if rej_p else -1
    else:
        F = 1 if p_p <= p_m else -1
    tau = tau_p if F == 1 else tau_m
    return TestOutcome(F, d, tau, bool(rej_p or rej_m), p, stats, double)
