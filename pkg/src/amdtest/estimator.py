"""The relative-similarity U-statistic, its gradient, and population-level evaluation.

For a kernel ``k`` and samples ``Z ~ U``, ``X ~ P``, ``Y ~ Q`` of equal size ``m``,
the pairwise function is::

    h_ij = k(z_i, x_j) + k(z_j, x_i) - k(z_i, y_j) - k(z_j, y_i) - k(x_i, x_j) + k(y_i, y_j)

and the statistic is ``d_hat = sum_{i != j} h_ij / (2 m (m - 1))``. Its population
counterpart ``E k(z,x) - E k(z,y) - E k(x,x')/2 + E k(y,y')/2`` is positive when P
is closer to U than Q is, and negative in the opposite case.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InputError, NumericError
from .kernels import (GaussianParams, KernelParams, gaussian_weighted_sum, gram_block, sq_dists,
                      weighted_kernel_sum)


@dataclass(frozen=True, eq=False)
class SampleTriple:
    """Anchor sample ``Z`` and candidate samples ``X``, ``Y``; all (m, d)."""

    Z: np.ndarray
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        mats = []
        for name in "ZXY":
            M = np.asarray(getattr(self, name), dtype=float)
            if M.ndim == 1:
                M = M[:, None]
            if M.ndim != 2:
                raise InputError(f"{name} must be a matrix, got shape {M.shape}")
            if not np.all(np.isfinite(M)):
                raise InputError(f"{name} has non-finite entries")
            object.__setattr__(self, name, M)
            mats.append(M)
        shapes = {M.shape for M in mats}
        if len(shapes) != 1:
            raise InputError(f"Z, X, Y shapes differ: {[M.shape for M in mats]}")
        m, d = mats[0].shape
        if m < 2 or d < 1:
            raise InputError(f"need m >= 2 rows and d >= 1 columns, got {(m, d)}")

    @property
    def m(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    def swapped(self) -> "SampleTriple":
        """The triple with the roles of X and Y exchanged."""
        return SampleTriple(self.Z, self.Y, self.X)

    def rows(self, idx) -> "SampleTriple":
        return SampleTriple(self.Z[idx], self.X[idx], self.Y[idx])


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if s.shape[0] != w.size:
            raise InputError("support and weights have different lengths")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InputError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)


def h_matrix(t: SampleTriple, params: KernelParams) -> np.ndarray:
    """Symmetric m x m matrix of pairwise h-values; the diagonal is set to zero."""
    Kzx = gram_block(params, t.Z, t.X)
    Kzy = gram_block(params, t.Z, t.Y)
    Kxx = gram_block(params, t.X, t.X)
    Kyy = gram_block(params, t.Y, t.Y)
    # grouped so that X == Y gives exactly zero and H is exactly symmetric
    D = Kzx - Kzy
    H = (D + D.T) + (Kyy - Kxx)
    np.fill_diagonal(H, 0.0)
    return H


def u_statistic(h: np.ndarray) -> float:
    """``sum_{i<j} h_ij / (m (m - 1))``, equal to the full off-diagonal sum over ``2 m (m - 1)``."""
    m = h.shape[0]
    if m < 2:
        raise InputError("need at least two rows")
    return float(np.triu(h, 1).sum() / (m * (m - 1)))


def statistic(t: SampleTriple, params: KernelParams) -> float:
    return u_statistic(h_matrix(t, params))


@lru_cache(maxsize=16)
def _dhat_blocks(m):
    c = 1.0 / (2.0 * m * (m - 1))
    off = 1.0 - np.eye(m)
    blocks = [(0, 1, 2.0 * c * off), (0, 2, -2.0 * c * off), (1, 1, -c * off), (2, 2, c * off)]
    for _, _, W in blocks:
        W.flags.writeable = False
    # mats order: Z, X, Y
    return blocks


def triple_distances(t: SampleTriple):
    """Squared-distance blocks (ZX, ZY, XX, YY) reusable across Gaussian bandwidths."""
    return (sq_dists(t.Z, t.X), sq_dists(t.Z, t.Y), sq_dists(t.X, t.X), sq_dists(t.Y, t.Y))


def statistic_and_gradient(t: SampleTriple, params: KernelParams, dists=None):
    """``d_hat`` on ``t`` and its exact gradient with respect to ``params``.

    ``dists`` optionally carries :func:`triple_distances` of ``t`` (Gaussian family only).
    """
    blocks = _dhat_blocks(t.m)
    if dists is not None and isinstance(params, GaussianParams):
        return gaussian_weighted_sum(params, [(D, W) for D, (_, _, W) in zip(dists, blocks)])
    return weighted_kernel_sum(params, [t.Z, t.X, t.Y], blocks)


def branch_objective_and_gradient(t: SampleTriple, aug: SampleTriple | None, lam: float,
                                  branch: str, params: KernelParams, dists=None, aug_dists=None):
    """Maximise-form branch objective and its gradient.

    ``branch='+'``: ``d_hat(t) - lam * d_hat(aug)**2``;
    ``branch='-'``: ``-d_hat(t) - lam * d_hat(aug)**2``;
    ``branch='sq'``: ``d_hat(t)**2 - lam * d_hat(aug)**2`` (squared-form ablation).

    ``aug`` may be ``None`` when ``lam == 0``. ``dists``/``aug_dists`` are optional
    cached :func:`triple_distances`.
    """
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    value, grad = statistic_and_gradient(t, params, dists)
    if branch == "+":
        obj = value
    elif branch == "-":
        obj, grad = -value, -grad
    elif branch == "sq":
        obj, grad = value * value, (2.0 * value) * grad
    else:
        raise InputError(f"unknown branch {branch!r}")
    if lam > 0:
        if aug is None:
            raise InputError("augmented triple required when lambda > 0")
        a_val, a_grad = statistic_and_gradient(aug, params, aug_dists)
        obj = obj - lam * a_val * a_val
        grad = grad + (-2.0 * lam * a_val) * a_grad
    if not np.isfinite(obj):
        raise NumericError("non-finite branch objective")
    return float(obj), grad


def variance_estimate(h: np.ndarray) -> float:
    """Plug-in estimate of the asymptotic variance of ``sqrt(m) * d_hat``.

    Uses the U-statistic kernel ``h / 2`` (``d_hat`` averages ``h / 2`` over pairs):
    ``4 * (mean_i g_i**2 - d_hat**2)`` with ``g_i`` the off-diagonal row mean of
    ``h / 2``. Clamped at zero.
    """
    m = h.shape[0]
    if m < 2:
        raise InputError("need at least two rows")
    H = np.array(h, dtype=float)
    np.fill_diagonal(H, 0.0)
    g = H.sum(axis=1) / (2.0 * (m - 1))
    u = u_statistic(H)
    return float(max(0.0, 4.0 * (np.mean(g * g) - u * u)))


def _expect(params, A: DiscreteDistribution, B: DiscreteDistribution) -> float:
    return float(A.weights @ gram_block(params, A.support, B.support) @ B.weights)


def population_dk_discrete(params: KernelParams, U: DiscreteDistribution,
                           P: DiscreteDistribution, Q: DiscreteDistribution) -> float:
    """Exact ``E k(z,x) - E k(z,y) - E k(x,x')/2 + E k(y,y')/2`` for discrete U, P, Q."""
    d = {U.support.shape[1], P.support.shape[1], Q.support.shape[1]}
    if len(d) != 1:
        raise InputError("supports have different dimensions")
    # grouped per candidate so that swapping P and Q negates the result exactly
    return ((_expect(params, U, P) - 0.5 * _expect(params, P, P))
            - (_expect(params, U, Q) - 0.5 * _expect(params, Q, Q)))


def mmd2_discrete(params: KernelParams, A: DiscreteDistribution, B: DiscreteDistribution) -> float:
    """Population squared MMD between two discrete distributions."""
    return _expect(params, A, A) + _expect(params, B, B) - 2.0 * _expect(params, A, B)


def amd_discrete(kernels, U, P, Q) -> float:
    """Anchor-based maximum discrepancy over a finite set of kernels."""
    return max(abs(population_dk_discrete(k, U, P, Q)) for k in kernels)
