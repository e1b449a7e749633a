"""Kernel families, Gram blocks, exact parameter gradients and the median heuristic.

Two families are provided, both bounded in ``(0, 1]``:

* :class:`GaussianParams` -- ``k(a, b) = exp(-|a - b|^2 / (2 s^2))``.
* :class:`DeepKernelParams` --
  ``k(a, b) = [(1 - eps) G1(phi(a), phi(b)) + eps] * G2(a, b)`` where ``phi`` is a
  small softplus MLP and ``G1``/``G2`` are Gaussian kernels on features and raw
  inputs respectively.

All parameters are stored in unconstrained coordinates (log bandwidths,
logit of ``eps``, raw network weights) so that plain gradient steps keep every
constraint satisfied. Gradients are returned as instances of the same class as
the parameters; they support ``+``, ``-`` and scaling by a real.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, InputError, NumericError


class _FlatMixin:
    """Arithmetic on parameter/gradient carriers through their flat vector."""

    def flat(self) -> np.ndarray:
        raise NotImplementedError

    def unflat(self, vec):
        raise NotImplementedError

    def __add__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.unflat(self.flat() + other.flat())

    def __sub__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.unflat(self.flat() - other.flat())

    def __mul__(self, c):
        return self.unflat(self.flat() * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.unflat(-self.flat())

    @property
    def size(self) -> int:
        return self.flat().size


@dataclass(frozen=True, eq=False)
class GaussianParams(_FlatMixin):
    """Gaussian kernel with bandwidth ``exp(log_bandwidth)``."""

    log_bandwidth: float

    def __post_init__(self):
        with np.errstate(over="ignore"):
            bw = np.exp(self.log_bandwidth)
        if not (np.isfinite(bw) and bw > 0):
            raise InputError(f"bandwidth exp({self.log_bandwidth}) is not finite and positive")

    @property
    def bandwidth(self) -> float:
        # gradient carriers may hold values whose exponential overflows
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_bandwidth))

    @property
    def dim(self):
        return None

    def flat(self):
        return np.array([self.log_bandwidth], dtype=float)

    def unflat(self, vec):
        # also used for gradient carriers, which need not be valid bandwidths
        obj = object.__new__(GaussianParams)
        object.__setattr__(obj, "log_bandwidth", float(vec[0]))
        return obj

    def summary(self):
        return {"family": "gaussian", "bandwidth": self.bandwidth}


@dataclass(frozen=True, eq=False)
class NetworkParams(_FlatMixin):
    """Feed-forward network; ``layers[i] = (W, b)`` with ``W`` of shape (out, in).

    Softplus after every layer but the last.
    """

    layers: Tuple[Tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if not self.layers:
            raise InputError("network needs at least one layer")
        fixed = []
        prev = None
        for i, (w, b) in enumerate(self.layers):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise InputError(f"layer {i}: weight {w.shape} and bias {b.shape} do not agree")
            if prev is not None and w.shape[1] != prev:
                raise InputError(f"layer {i} expects {w.shape[1]} inputs, previous layer gives {prev}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InputError(f"layer {i} has non-finite entries")
            prev = w.shape[0]
            fixed.append((w, b))
        object.__setattr__(self, "layers", tuple(fixed))

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def dims(self):
        return [self.in_dim] + [w.shape[0] for w, _ in self.layers]

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in self.layers])

    def unflat(self, vec):
        vec = np.asarray(vec, dtype=float)
        out, pos = [], 0
        for w, b in self.layers:
            nw = w.size
            out.append((vec[pos:pos + nw].reshape(w.shape), vec[pos + nw:pos + nw + b.size].copy()))
            pos += nw + b.size
        return NetworkParams(tuple(out))


@dataclass(frozen=True, eq=False)
class DeepKernelParams(_FlatMixin):
    network: NetworkParams
    log_bw_feature: float
    log_bw_raw: float
    logit_eps: float

    @property
    def eps(self) -> float:
        return float(expit(self.logit_eps))

    @property
    def bw_feature(self) -> float:
        return float(np.exp(self.log_bw_feature))

    @property
    def bw_raw(self) -> float:
        return float(np.exp(self.log_bw_raw))

    @property
    def dim(self):
        return self.network.in_dim

    def flat(self):
        head = np.array([self.log_bw_feature, self.log_bw_raw, self.logit_eps], dtype=float)
        return np.concatenate([head, self.network.flat()])

    def unflat(self, vec):
        vec = np.asarray(vec, dtype=float)
        return DeepKernelParams(self.network.unflat(vec[3:]), float(vec[0]), float(vec[1]), float(vec[2]))

    def summary(self):
        return {
            "family": "deep",
            "bandwidth_feature": self.bw_feature,
            "bandwidth_raw": self.bw_raw,
            "eps": self.eps,
            "network_dims": self.network.dims,
        }


KernelParams = Union[GaussianParams, DeepKernelParams]
ParamGradient = KernelParams


# ----------------------------------------------------------------------------
# evaluation


def softplus(x):
    return np.logaddexp(0.0, x)


def _as_rows(A, dim=None, name="input"):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise InputError(f"{name} must be a matrix, got shape {A.shape}")
    if dim is not None and A.shape[1] != dim:
        raise InputError(f"{name} has {A.shape[1]} columns, kernel expects {dim}")
    return A


def sq_dists(A, B):
    """Pairwise squared distances via the norm expansion, clamped at zero."""
    na = np.einsum("ij,ij->i", A, A)
    nb = np.einsum("ij,ij->i", B, B)
    D = na[:, None] + nb[None, :] - 2.0 * (A @ B.T)
    return np.maximum(D, 0.0)


def exact_sq_dists(A, B):
    """Pairwise squared distances from explicit differences; exact zero for equal rows."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _forward(net: NetworkParams, X):
    """Return (output, cache) where cache holds (inputs, pre-activations) per hidden layer."""
    cache = []
    H = X
    last = len(net.layers) - 1
    for i, (w, b) in enumerate(net.layers):
        Zp = H @ w.T + b
        if i < last:
            cache.append((H, Zp))
            H = softplus(Zp)
        else:
            cache.append((H, None))
            H = Zp
    return H, cache


def _backward(net: NetworkParams, cache, G):
    """Backpropagate upstream gradient ``G`` (n x out) to per-layer (dW, db)."""
    grads = [None] * len(net.layers)
    dH = G
    for i in range(len(net.layers) - 1, -1, -1):
        w, _ = net.layers[i]
        H_in, Zp = cache[i]
        dZ = dH if Zp is None else dH * expit(Zp)
        grads[i] = (dZ.T @ H_in, dZ.sum(axis=0))
        if i > 0:
            dH = dZ @ w
    return grads


def network_forward(net: NetworkParams, x):
    """Apply the feature network to a vector or to each row of a matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = _as_rows(x, net.in_dim)
    out, _ = _forward(net, X)
    return out[0] if single else out


def gram_block(params: KernelParams, A, B):
    """Kernel matrix with entry (i, j) = k(A_i, B_j)."""
    dim = params.dim
    A = _as_rows(A, dim, "A")
    B = _as_rows(B, A.shape[1] if dim is None else dim, "B")
    if isinstance(params, GaussianParams):
        return np.exp(-sq_dists(A, B) / (2.0 * params.bandwidth ** 2))
    FA = network_forward(params.network, A)
    FB = network_forward(params.network, B)
    G1 = np.exp(-sq_dists(FA, FB) / (2.0 * params.bw_feature ** 2))
    G2 = np.exp(-sq_dists(A, B) / (2.0 * params.bw_raw ** 2))
    eps = params.eps
    return ((1.0 - eps) * G1 + eps) * G2


def kernel_eval(params: KernelParams, a, b) -> float:
    """Single kernel value ``k(a, b)``."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if params.dim is not None and a.size != params.dim:
        raise InputError(f"vectors have dimension {a.size}, kernel expects {params.dim}")
    d2 = float(np.sum((a - b) ** 2))
    if isinstance(params, GaussianParams):
        return float(np.exp(-d2 / (2.0 * params.bandwidth ** 2)))
    fa = network_forward(params.network, a)
    fb = network_forward(params.network, b)
    g1 = np.exp(-float(np.sum((fa - fb) ** 2)) / (2.0 * params.bw_feature ** 2))
    g2 = np.exp(-d2 / (2.0 * params.bw_raw ** 2))
    eps = params.eps
    return float(((1.0 - eps) * g1 + eps) * g2)


# ----------------------------------------------------------------------------
# gradients


def weighted_kernel_sum(params: KernelParams, mats: Sequence[np.ndarray],
                        blocks: Sequence[Tuple[int, int, np.ndarray]], dist_fn=sq_dists):
    """Value and exact gradient of ``sum_blocks sum_ij W_ij k(mats[a]_i, mats[b]_j)``.

    Parameters
    ----------
    params : KernelParams
    mats : sequence of (n_k, d) arrays
        Distinct sample matrices; each is pushed through the network once.
    blocks : sequence of (a, b, W)
        Index pairs into ``mats`` and a weight matrix of shape (n_a, n_b).
    dist_fn : callable, optional
        Squared-distance routine for both raw inputs and features.

    Returns
    -------
    value : float
    grad : same type as ``params``
    """
    mats = [_as_rows(M, params.dim) for M in mats]
    d = mats[0].shape[1]
    if any(M.shape[1] != d for M in mats):
        raise InputError("sample matrices have different column counts")
    for a, b, W in blocks:
        if np.shape(W) != (mats[a].shape[0], mats[b].shape[0]):
            raise InputError(f"weight block shape {np.shape(W)} does not match matrices {a}, {b}")

    if isinstance(params, GaussianParams):
        return gaussian_weighted_sum(params, [(dist_fn(mats[a], mats[b]), W) for a, b, W in blocks])

    net = params.network
    eps = params.eps
    s1 = params.bw_feature ** 2
    s2 = params.bw_raw ** 2
    feats, caches = [], []
    for M in mats:
        F, c = _forward(net, M)
        feats.append(F)
        caches.append(c)
    # overflow is reported below as NumericError rather than as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        dF = [np.zeros_like(F) for F in feats]
        value = 0.0
        g_bw1 = g_bw2 = g_eps = 0.0
        for a, b, W in blocks:
            FA, FB = feats[a], feats[b]
            D1 = dist_fn(FA, FB)
            D2 = dist_fn(mats[a], mats[b])
            G1 = np.exp(-D1 / (2.0 * s1))
            G2 = np.exp(-D2 / (2.0 * s2))
            WG2 = W * G2
            WK = WG2 * ((1.0 - eps) * G1 + eps)
            value += WK.sum()
            g_bw2 += (WK * D2).sum() / s2
            g_eps += (WG2 * (1.0 - G1)).sum() * eps * (1.0 - eps)
            M = (1.0 - eps) * WG2 * G1 / s1
            g_bw1 += (M * D1).sum()
            # d/dFA_i of M_ij * (-|FA_i - FB_j|^2 / 2) summed
            dF[a] -= M.sum(axis=1)[:, None] * FA - M @ FB
            dF[b] -= M.sum(axis=0)[:, None] * FB - M.T @ FA
        layer_grads = None
        for F_grad, cache in zip(dF, caches):
            lg = _backward(net, cache, F_grad)
            if layer_grads is None:
                layer_grads = lg
            else:
                layer_grads = [(w0 + w1, b0 + b1) for (w0, b0), (w1, b1) in zip(layer_grads, lg)]
    finite = np.isfinite([value, g_bw1, g_bw2, g_eps]).all() and all(
        np.isfinite(w).all() and np.isfinite(b).all() for w, b in layer_grads)
    if not finite:
        raise NumericError("non-finite kernel sum or gradient")
    grad = DeepKernelParams(NetworkParams(tuple(layer_grads)), g_bw1, g_bw2, g_eps)
    return float(value), grad


def gaussian_weighted_sum(params: GaussianParams, dist_blocks):
    """Gaussian-family :func:`weighted_kernel_sum` from precomputed ``(sq_dists, W)`` pairs."""
    s2 = params.bandwidth ** 2
    value = 0.0
    g = 0.0
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for D, W in dist_blocks:
            WK = W * np.exp(-D / (2.0 * s2))
            value += WK.sum()
            g += (WK * D).sum() / s2
    if not (np.isfinite(value) and np.isfinite(g)):
        raise NumericError("non-finite kernel sum or gradient")
    return float(value), params.unflat([g])


def zero_gradient(params: KernelParams):
    return params.unflat(np.zeros(params.size))


def pairwise_weighted_gradient(params: KernelParams, pairs):
    """Exact gradient of ``sum_k w_k k(a_k, b_k)`` over a list of ``(a, b, w)``."""
    pairs = list(pairs)
    if not pairs:
        return zero_gradient(params)
    A = np.array([np.asarray(p[0], dtype=float).ravel() for p in pairs])
    B = np.array([np.asarray(p[1], dtype=float).ravel() for p in pairs])
    if A.shape != B.shape:
        raise InputError("pair vectors have inconsistent dimensions")
    W = np.diag([float(p[2]) for p in pairs])
    _, grad = weighted_kernel_sum(params, [A, B], [(0, 1, W)], exact_sq_dists)
    return grad


# ----------------------------------------------------------------------------
# bandwidth selection and initialisation


def median_heuristic(Z, X, Y) -> GaussianParams:
    """Average of the median anchor-to-P and anchor-to-Q pairwise distances.

    Raises
    ------
    DegenerateDataError
        If the resulting bandwidth is zero.
    """
    Z = _as_rows(Z, name="Z")
    X = _as_rows(X, Z.shape[1], "X")
    Y = _as_rows(Y, Z.shape[1], "Y")
    dzx = np.sqrt(sq_dists(Z, X)).ravel()
    dzy = np.sqrt(sq_dists(Z, Y)).ravel()
    sigma = 0.5 * (np.median(dzx) + np.median(dzy))
    if not sigma > 0:
        raise DegenerateDataError("median heuristic bandwidth is zero: all points coincide")
    return GaussianParams(float(np.log(sigma)))


def init_network(dims, rng) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append((w, b))
    return NetworkParams(tuple(layers))


DEFAULT_HIDDEN = (32, 32)


def init_deep_kernel(Z, X, Y, rng, hidden=DEFAULT_HIDDEN) -> DeepKernelParams:
    """Fresh deep kernel: random network, median-heuristic bandwidths, eps = 0.5."""
    Z = _as_rows(Z)
    net = init_network([Z.shape[1], *hidden], rng)
    raw = median_heuristic(Z, X, Y)
    feat = median_heuristic(network_forward(net, Z), network_forward(net, X), network_forward(net, Y))
    return DeepKernelParams(net, feat.log_bandwidth, raw.log_bandwidth, 0.0)
