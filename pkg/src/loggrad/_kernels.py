"""Grid kernels used by the solver and the field diagnostics.

Every kernel exists twice: a numba ``@njit`` loop and a plain numpy
version.  Setting ``LOGGRAD_DISABLE_NUMBA=1`` in the environment (before
import) selects the numpy path; it is also used automatically when numba
cannot be imported.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

_DISABLED = os.environ.get("LOGGRAD_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not _DISABLED

# centered stencils (offsets -2..2)
D1_4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
D2_4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
D1_2 = np.array([0.0, -0.5, 0.0, 0.5, 0.0])
D2_2 = np.array([0.0, 1.0, -2.0, 1.0, 0.0])


def backend():
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# stencil along the last axis of a 2-D array

def _np_stencil_rows(a, weights, scale):
    n = a.shape[1]
    out = np.full(a.shape, np.nan)
    acc = np.zeros((a.shape[0], n - 4))
    for k in range(5):
        w = weights[k]
        if w != 0.0:
            acc += w * a[:, k:n - 4 + k]
    out[:, 2:n - 2] = acc * scale
    return out


if HAVE_NUMBA:
    @njit(cache=True)
    def _nb_stencil_rows(a, weights, scale):
        m, n = a.shape
        out = np.empty((m, n))
        for i in range(m):
            out[i, 0] = np.nan
            out[i, 1] = np.nan
            out[i, n - 2] = np.nan
            out[i, n - 1] = np.nan
            for j in range(2, n - 2):
                s = 0.0
                for k in range(5):
                    s += weights[k] * a[i, j + k - 2]
                out[i, j] = s * scale
        return out
else:  # pragma: no cover
    _nb_stencil_rows = _np_stencil_rows


def apply_stencil(a, axis, weights, scale, impl=None):
    """Apply a 5-point centered stencil along ``axis``.

    The two outermost layers on each side are NaN.  ``impl`` forces
    ``"numba"`` or ``"numpy"``.
    """
    a = np.asarray(a, dtype=float)
    moved = np.moveaxis(a, axis, -1)
    shape = moved.shape
    flat = np.ascontiguousarray(moved.reshape(-1, shape[-1]))
    if shape[-1] < 5:
        raise ValueError("axis too short for a 5-point stencil")
    impl = impl or backend()
    fn = _nb_stencil_rows if impl == "numba" else _np_stencil_rows
    weights = np.asarray(weights, dtype=float)
    # twelfths are applied as integers so constants are annihilated exactly
    num = np.rint(12.0 * weights)
    if np.allclose(num, 12.0 * weights, rtol=0.0, atol=1e-12):
        weights, scale = num, scale / 12.0
    out = fn(flat, weights, float(scale))
    return np.moveaxis(out.reshape(shape), -1, axis)


# ---------------------------------------------------------------------------
# explicit Euler step for u_t = coef * Lap_h u on a masked lattice

def _np_explicit_step_2d(u, mask, coef, inv_h2):
    lap = np.zeros_like(u)
    lap[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2]
                       - 4.0 * u[1:-1, 1:-1]) * inv_h2
    out = u.copy()
    out[mask] = u[mask] + coef[mask] * lap[mask]
    return out


def _np_explicit_step_1d(u, mask, coef, inv_h2):
    lap = np.zeros_like(u)
    lap[1:-1] = (u[2:] + u[:-2] - 2.0 * u[1:-1]) * inv_h2
    out = u.copy()
    out[mask] = u[mask] + coef[mask] * lap[mask]
    return out


if HAVE_NUMBA:
    @njit(cache=True)
    def _nb_explicit_step_2d(u, mask, coef, inv_h2):
        out = u.copy()
        nx, ny = u.shape
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                if mask[i, j]:
                    lap = (u[i + 1, j] + u[i - 1, j] + u[i, j + 1] + u[i, j - 1]
                           - 4.0 * u[i, j]) * inv_h2
                    out[i, j] = u[i, j] + coef[i, j] * lap
        return out

    @njit(cache=True)
    def _nb_explicit_step_1d(u, mask, coef, inv_h2):
        out = u.copy()
        for i in range(1, u.shape[0] - 1):
            if mask[i]:
                out[i] = u[i] + coef[i] * (u[i + 1] + u[i - 1] - 2.0 * u[i]) * inv_h2
        return out
else:  # pragma: no cover
    _nb_explicit_step_2d = _np_explicit_step_2d
    _nb_explicit_step_1d = _np_explicit_step_1d


def explicit_step(u, mask, coef, h, impl=None):
    """One forward-Euler diffusion step on nodes where ``mask`` is set.

    ``coef`` holds dt times the local diffusivity (dt/phi on conformal
    metrics).  Nodes off the mask are copied unchanged.
    """
    impl = impl or backend()
    inv_h2 = 1.0 / (h * h)
    u = np.ascontiguousarray(u, dtype=float)
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    coef = np.ascontiguousarray(coef, dtype=float)
    if u.ndim == 2:
        fn = _nb_explicit_step_2d if impl == "numba" else _np_explicit_step_2d
    elif u.ndim == 1:
        fn = _nb_explicit_step_1d if impl == "numba" else _np_explicit_step_1d
    else:
        raise ValueError("explicit_step supports 1-D and 2-D lattices")
    return fn(u, mask, coef, inv_h2)


# ---------------------------------------------------------------------------
# masked reductions used by the estimate checks

def _np_masked_max_ratio(lhs, rhs, mask):
    sel = mask & (lhs > 0.0)
    if not sel.any():
        return 0.0, -1
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        ratio = np.where(sel, lhs / np.where(rhs > 0.0, rhs, np.nan), -np.inf)
    ratio = np.where(sel & ~(rhs > 0.0), np.inf, ratio)
    idx = int(np.argmax(ratio))
    return float(ratio[idx]), idx


if HAVE_NUMBA:
    @njit(cache=True)
    def _nb_masked_max_ratio(lhs, rhs, mask):
        best = 0.0
        arg = -1
        for i in range(lhs.shape[0]):
            if mask[i] and lhs[i] > 0.0:
                if rhs[i] > 0.0:
                    r = lhs[i] / rhs[i]
                else:
                    r = np.inf
                if arg < 0 or r > best:
                    best = r
                    arg = i
        return best, arg
else:  # pragma: no cover
    _nb_masked_max_ratio = _np_masked_max_ratio


def masked_max_ratio(lhs, rhs, mask, impl=None):
    """Max of lhs/rhs over masked nodes with lhs > 0, and its flat index.

    Nodes with rhs <= 0 and lhs > 0 count as an infinite ratio.  Returns
    ``(0.0, -1)`` when no node qualifies.
    """
    impl = impl or backend()
    lhs = np.ascontiguousarray(np.ravel(lhs), dtype=float)
    rhs = np.ascontiguousarray(np.ravel(rhs), dtype=float)
    mask = np.ascontiguousarray(np.ravel(mask), dtype=np.bool_)
    fn = _nb_masked_max_ratio if impl == "numba" else _np_masked_max_ratio
    best, arg = fn(lhs, rhs, mask)
    return float(best), int(arg)


def set_threads(n):
    if USE_NUMBA and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
