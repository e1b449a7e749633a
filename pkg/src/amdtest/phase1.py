"""Phase 1: learn a kernel and the hypothesis direction together.

Two kernels are trained from the same median-heuristic start. The ``+`` branch
pushes the statistic up, the ``-`` branch pushes it down, and both are
penalised by the squared statistic on augmented samples, whose expectation is
zero. The branch with the larger ``|d_hat|`` wins, and its sign sets ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from . import rng as rngmod
from .errors import InputError, NumericError
from .estimator import SampleTriple, branch_objective_and_gradient, statistic, triple_distances
from .kernels import (DEFAULT_HIDDEN, DeepKernelParams, GaussianParams, KernelParams,
                      init_deep_kernel, median_heuristic)

MODES = ("AMD", "AMD-NA", "AMD-SQ")
FAMILIES = ("gaussian", "deep")
OPTIMIZERS = ("plain", "adam")

_DEFAULT_LR = {"gaussian": 0.05, "deep": 0.001}
_DEFAULT_OPT = {"gaussian": "plain", "deep": "adam"}


@dataclass(frozen=True)
class Phase1Config:
    """Phase 1 settings. ``learning_rate``/``optimizer`` left as ``None`` take family defaults."""

    epochs: int = 200
    learning_rate: Optional[float] = None
    lam: float = 1.0
    mode: str = "AMD"
    kernel_family: str = "gaussian"
    optimizer: Optional[str] = None
    seed: int = 0
    hidden: Tuple[int, ...] = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kernel_family not in FAMILIES:
            raise InputError(f"kernel_family must be one of {FAMILIES}")
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", _DEFAULT_LR[self.kernel_family])
        if self.optimizer is None:
            object.__setattr__(self, "optimizer", _DEFAULT_OPT[self.kernel_family])
        if self.optimizer not in OPTIMIZERS:
            raise InputError(f"optimizer must be one of {OPTIMIZERS}")
        if int(self.epochs) < 1:
            raise InputError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise InputError("learning rate must be nonnegative")
        if not self.lam >= 0:
            raise InputError("lambda must be nonnegative")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def effective_lam(self) -> float:
        return 0.0 if self.mode == "AMD-NA" else float(self.lam)

    def as_dict(self):
        return {
            "epochs": self.epochs, "learning_rate": self.learning_rate, "lambda": self.lam,
            "mode": self.mode, "kernel_family": self.kernel_family,
            "optimizer": self.optimizer, "seed": self.seed, "hidden": list(self.hidden),
        }


@dataclass(eq=False)
class Phase1Result:
    selected: KernelParams
    F: int
    d_plus: float
    d_minus: float
    loss_history_plus: List[float] = field(default_factory=list)
    loss_history_minus: List[float] = field(default_factory=list)
    tie_broken: bool = False
    kernel_plus: Optional[KernelParams] = None
    kernel_minus: Optional[KernelParams] = None


def generate_augmented(t: SampleTriple, rng: np.random.Generator) -> SampleTriple:
    """Augmented triple whose two candidate samples share one distribution.

    ``Z_aug`` resamples rows of ``Z`` with replacement. With index vectors ``p``, ``q``
    drawn uniformly with replacement, ``X_aug = (X[p] + Y[q]) / 2`` and
    ``Y_aug = (X[q] + Y[p]) / 2``. Each row is a midpoint of an X row and a Y row,
    the pair ``(X_aug, Y_aug)`` is exchangeable, and swapping ``X`` with ``Y`` in the
    input swaps ``X_aug`` with ``Y_aug`` row for row.
    """
    m = t.m
    iz = rng.integers(0, m, size=m)
    p = rng.integers(0, m, size=m)
    q = rng.integers(0, m, size=m)
    return SampleTriple(
        t.Z[iz],
        0.5 * t.X[p] + 0.5 * t.Y[q],
        0.5 * t.X[q] + 0.5 * t.Y[p],
    )


def initial_kernel(t: SampleTriple, cfg: Phase1Config) -> KernelParams:
    """Median-heuristic start for the configured family."""
    if cfg.kernel_family == "gaussian":
        return median_heuristic(t.Z, t.X, t.Y)
    return init_deep_kernel(t.Z, t.X, t.Y, rngmod.substream(cfg.seed, rngmod.INIT), cfg.hidden)


class _Adam:
    def __init__(self, size, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, g):
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return self.lr * mh / (np.sqrt(vh) + self.eps)


class _Plain:
    def __init__(self, size, lr):
        self.lr = lr

    def step(self, g):
        return self.lr * g


def _optimize(t: SampleTriple, cfg: Phase1Config, branches, init: KernelParams):
    """Run the given branches in lockstep, sharing each epoch's augmented triple.

    Every branch owns its parameters and optimiser state, so the result for one
    branch does not depend on which others run alongside it.
    """
    lam = cfg.effective_lam
    use_aug = cfg.mode != "AMD-NA" and lam > 0
    params = {b: init for b in branches}
    opts = {b: (_Adam if cfg.optimizer == "adam" else _Plain)(init.size, cfg.learning_rate)
            for b in branches}
    history = {b: [] for b in branches}
    gaussian = isinstance(init, GaussianParams)
    dists = triple_distances(t) if gaussian else None
    for epoch in range(int(cfg.epochs)):
        aug = aug_dists = None
        if use_aug:
            aug = generate_augmented(t, rngmod.substream(cfg.seed, rngmod.AUGMENT, epoch))
            aug_dists = triple_distances(aug) if gaussian else None
        for b in branches:
            try:
                val, grad = branch_objective_and_gradient(t, aug, lam, b, params[b], dists, aug_dists)
            except NumericError as exc:
                raise NumericError(f"branch {b}: {exc} at epoch {epoch}") from exc
            history[b].append(val)
            step = opts[b].step(grad.flat())
            new = params[b].flat() + step
            if not np.all(np.isfinite(new)):
                raise NumericError(f"branch {b}: non-finite parameters at epoch {epoch}")
            params[b] = params[b].unflat(new)
    return params, history


def optimize_branch(t: SampleTriple, cfg: Phase1Config, branch: str, init: KernelParams):
    """Gradient ascent on one branch's objective for ``cfg.epochs`` epochs.

    ``branch`` is ``'+'`` or ``'-'``; in mode ``AMD-SQ`` the squared-form objective
    is optimised whatever the branch. Returns ``(final_params, objective_history)``.
    """
    if branch not in ("+", "-"):
        raise InputError(f"branch must be '+' or '-', got {branch!r}")
    _check_family(cfg, init)
    key = "sq" if cfg.mode == "AMD-SQ" else branch
    params, history = _optimize(t, cfg, [key], init)
    return params[key], history[key]


def _check_family(cfg, init):
    expected = GaussianParams if cfg.kernel_family == "gaussian" else DeepKernelParams
    if not isinstance(init, expected):
        raise InputError(f"initial kernel is not of family {cfg.kernel_family!r}")


def select_direction(d_plus: float, d_minus: float):
    """``F = +1`` iff ``|d_plus| >= |d_minus|``; returns ``(F, tie_broken)``."""
    a, b = abs(d_plus), abs(d_minus)
    return (1 if a >= b else -1), bool(a == b)


def run_phase1(t: SampleTriple, cfg: Phase1Config, init: Optional[KernelParams] = None) -> Phase1Result:
    """Train both branches, select the kernel with the larger ``|d_hat|`` and infer ``F``."""
    if init is None:
        init = initial_kernel(t, cfg)
    _check_family(cfg, init)
    if cfg.mode == "AMD-SQ":
        params, history = _optimize(t, cfg, ["sq"], init)
        k = params["sq"]
        d = statistic(t, k)
        F = 1 if d >= 0 else -1
        return Phase1Result(k, F, d, d, history["sq"], list(history["sq"]), d == 0.0, k, k)
    params, history = _optimize(t, cfg, ["+", "-"], init)
    d_plus = statistic(t, params["+"])
    d_minus = statistic(t, params["-"])
    if not (math.isfinite(d_plus) and math.isfinite(d_minus)):
        raise NumericError("non-finite statistic after training")
    F, tie = select_direction(d_plus, d_minus)
    selected = params["+"] if F == 1 else params["-"]
    return Phase1Result(selected, F, d_plus, d_minus, history["+"], history["-"], tie,
                        params["+"], params["-"])


def with_seed(cfg: Phase1Config, seed: int) -> Phase1Config:
    return replace(cfg, seed=int(seed))
