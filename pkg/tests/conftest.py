import numpy as np
import pytest

from amdtest.kernels import init_deep_kernel

FD_STEP = 1e-5
# coordinates whose gradient is below this magnitude are compared in absolute terms
FD_FLOOR = 1e-4


def central_diff(fn, params, step=FD_STEP):
    """Central finite differences of ``fn(params)`` over the flat parameter vector."""
    base = params.flat()
    out = np.empty_like(base)
    for i in range(base.size):
        up, down = base.copy(), base.copy()
        up[i] += step
        down[i] -= step
        out[i] = (fn(params.unflat(up)) - fn(params.unflat(down))) / (2 * step)
    return out


def rel_errors(analytic, numeric, floor=FD_FLOOR):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def small_deep_kernel(rng, d=2, hidden=(5, 4), m=6):
    Z, X, Y = (rng.normal(size=(m, d)) for _ in range(3))
    k = init_deep_kernel(Z, X, Y, rng, hidden)
    # move away from the default eps = 0.5 and default bandwidths
    return k.unflat(k.flat() + rng.normal(scale=0.3, size=k.size))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
