"""Synthetic benchmark distributions and closed-form population values."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InputError, UnsupportedSpecError
from .estimator import DiscreteDistribution
from .kernels import GaussianParams


@dataclass(frozen=True, eq=False)
class IsotropicGaussian:
    mean: np.ndarray
    stdev: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        if not self.stdev > 0:
            raise InputError("stdev must be positive")

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class IsotropicLaplace:
    location: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "location", np.atleast_1d(np.asarray(self.location, dtype=float)))
        if not self.scale > 0:
            raise InputError("scale must be positive")

    @property
    def dim(self) -> int:
        return self.location.size


@dataclass(frozen=True, eq=False)
class Discrete:
    dist: DiscreteDistribution

    @property
    def dim(self) -> int:
        return self.dist.support.shape[1]


DistributionSpec = Union[IsotropicGaussian, IsotropicLaplace, Discrete]


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """Anchor ``U = nu * P + (1 - nu) * Q``."""

    P: DistributionSpec
    Q: DistributionSpec
    nu: float

    def __post_init__(self):
        if not 0.0 <= self.nu <= 1.0:
            raise InputError("nu must lie in [0, 1]")
        if self.P.dim != self.Q.dim:
            raise InputError("P and Q have different dimensions")

    @property
    def dim(self) -> int:
        return self.P.dim


def sample(spec, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``m`` i.i.d. rows from a distribution or mixture spec.

    A mixture draws ``m`` rows from P first, then ``m`` rows from Q, then the
    per-row component labels, so at ``nu = 1`` it reproduces ``sample(P)`` exactly.
    """
    if m < 1:
        raise InputError("m must be >= 1")
    if isinstance(spec, IsotropicGaussian):
        return spec.mean + spec.stdev * rng.standard_normal((m, spec.dim))
    if isinstance(spec, IsotropicLaplace):
        u = rng.random((m, spec.dim)) - 0.5
        return spec.location - spec.scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    if isinstance(spec, Discrete):
        idx = rng.choice(spec.dist.weights.size, size=m, p=spec.dist.weights)
        return spec.dist.support[idx].copy()
    if isinstance(spec, MixtureSpec):
        xp = sample(spec.P, m, rng)
        xq = sample(spec.Q, m, rng)
        from_p = rng.random(m) < spec.nu
        return np.where(from_p[:, None], xp, xq)
    raise UnsupportedSpecError(f"cannot sample from {type(spec).__name__}")


def gaussian_kernel_mean(sigma: float, a: IsotropicGaussian, b: IsotropicGaussian) -> float:
    """``E exp(-|x - y|^2 / (2 sigma^2))`` for independent ``x ~ a``, ``y ~ b``."""
    v = sigma ** 2 + a.stdev ** 2 + b.stdev ** 2
    d = a.dim
    return float((sigma ** 2 / v) ** (d / 2.0) * np.exp(-np.sum((a.mean - b.mean) ** 2) / (2.0 * v)))


def closed_form_dk(kernel: GaussianParams, mix: MixtureSpec) -> float:
    """Exact population statistic for a Gaussian kernel and a Gaussian mixture anchor."""
    P, Q, nu = mix.P, mix.Q, mix.nu
    if not (isinstance(P, IsotropicGaussian) and isinstance(Q, IsotropicGaussian)):
        raise UnsupportedSpecError("closed form needs isotropic Gaussian P and Q")
    if not isinstance(kernel, GaussianParams):
        raise UnsupportedSpecError("closed form needs a Gaussian kernel")
    s = kernel.bandwidth
    e = lambda a, b: gaussian_kernel_mean(s, a, b)  # noqa: E731
    e_pp, e_qq, e_pq = e(P, P), e(Q, Q), e(P, Q)
    e_zx = nu * e_pp + (1.0 - nu) * e_pq
    e_zy = nu * e_pq + (1.0 - nu) * e_qq
    return e_zx - e_zy - 0.5 * e_pp + 0.5 * e_qq


def mean_shift_pair(dim: int = 2, shift: float = 1.0, stdev: float = 1.0):
    """Default benchmark pair: ``P = N(0, I)``, ``Q = N(shift * e_1, I)``."""
    mq = np.zeros(dim)
    mq[0] = shift
    return IsotropicGaussian(np.zeros(dim), stdev), IsotropicGaussian(mq, stdev)


def laplace_gaussian_pair(dim: int = 2, scale: float = 1.0 / np.sqrt(2.0)):
    """Variance-matched Laplace P versus standard Gaussian Q."""
    return IsotropicLaplace(np.zeros(dim), scale), IsotropicGaussian(np.zeros(dim), 1.0)


def true_sign(mix: MixtureSpec) -> int:
    """Sign of the population statistic for a mixture anchor (any characteristic kernel)."""
    if mix.nu == 0.5:
        raise InputError("nu = 0.5: no direction is defined")
    return 1 if mix.nu > 0.5 else -1
