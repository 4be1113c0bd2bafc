"""Transition profile alpha and the space/time cut-offs built from it.

alpha(t) = t^(2/(1-a)) on [0, 1/4], 1 - (1-t)^4 on [3/4, 1], 0 below 0
and 1 above 1.  On (1/4, 3/4) a quintic Hermite polynomial matches value,
first and second derivative at both junctions, which makes alpha C^2.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LEFT, RIGHT = 0.25, 0.75
ZERO_FLOOR = 1e-300


class CutoffError(ValueError):
    pass


@dataclass(frozen=True)
class CutoffParams:
    a: float
    R: float
    rho: float
    t0: float = 0.0
    T: float = 1.0
    delta: float = 0.5

    def __post_init__(self):
        _check_a(self.a)
        if not 0.0 < self.rho < self.R:
            raise CutoffError(f"need 0 < rho < R, got rho={self.rho}, R={self.R}")
        if not 0.0 < self.delta < self.T:
            raise CutoffError(f"need 0 < delta < T, got delta={self.delta}, T={self.T}")


def _check_a(a):
    if not 0.0 < a < 1.0:
        raise CutoffError(f"exponent a must lie in (0, 1), got {a}")


def _left_jets(a):
    p = 2.0 / (1.0 - a)
    s = LEFT
    return p, (s ** p, p * s ** (p - 1.0), p * (p - 1.0) * s ** (p - 2.0))


def _right_jets():
    s = 1.0 - RIGHT
    return (1.0 - s ** 4, 4.0 * s ** 3, -12.0 * s ** 2)


@lru_cache(maxsize=64)
def bridge_coefficients(a):
    """Quintic coefficients c_0..c_5 in powers of (t - 1/4)."""
    _check_a(a)
    _, y0 = _left_jets(a)
    y1 = _right_jets()
    L = RIGHT - LEFT
    A = np.zeros((6, 6))
    b = np.zeros(6)
    for d in range(3):
        for kk in range(d, 6):
            fac = np.prod(np.arange(kk - d + 1, kk + 1)) if d else 1.0
            A[d, kk] = fac * (0.0 if kk != d else 1.0)
            A[3 + d, kk] = fac * L ** (kk - d)
        b[d], b[3 + d] = y0[d], y1[d]
    coef = np.linalg.solve(A, b)
    # the bridge must be strictly increasing for alpha to be usable
    tau = np.linspace(0.0, L, 1001)
    slope = np.polyval(np.polyder(coef[::-1]), tau)
    if not np.all(slope > 0.0):
        raise CutoffError(f"Hermite bridge is not strictly increasing for a={a}")
    return tuple(coef)


def alpha_derivs(t, a):
    """alpha, alpha', alpha'' at ``t`` (array-valued)."""
    _check_a(a)
    t = np.asarray(t, dtype=float)
    p = 2.0 / (1.0 - a)
    f0 = np.zeros_like(t)
    f1 = np.zeros_like(t)
    f2 = np.zeros_like(t)

    f0[t > 1.0] = 1.0

    lo = (t >= 0.0) & (t <= LEFT)
    s = t[lo]
    f0[lo] = s ** p
    f1[lo] = p * s ** (p - 1.0)
    f2[lo] = p * (p - 1.0) * s ** (p - 2.0)

    mid = (t > LEFT) & (t < RIGHT)
    c = np.array(bridge_coefficients(float(a)))[::-1]
    tau = t[mid] - LEFT
    f0[mid] = np.polyval(c, tau)
    f1[mid] = np.polyval(np.polyder(c), tau)
    f2[mid] = np.polyval(np.polyder(c, 2), tau)

    hi = (t >= RIGHT) & (t <= 1.0)
    q = 1.0 - t[hi]
    f0[hi] = 1.0 - q ** 4
    f1[hi] = 4.0 * q ** 3
    f2[hi] = -12.0 * q ** 2
    return f0, f1, f2


def alpha(t, a):
    scalar = np.ndim(t) == 0
    out = alpha_derivs(np.atleast_1d(t), a)[0]
    return float(out[0]) if scalar else out


def psi_bar(r, p):
    """Spatial cut-off: 1 on [0, R - rho], 0 on [R, inf), decreasing."""
    scalar = np.ndim(r) == 0
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise CutoffError("radius must be non-negative")
    out = alpha_derivs((p.R - r) / p.rho, p.a)[0]
    return float(out[0]) if scalar else out


def psi_bar_derivs(r, p):
    s = (p.R - np.asarray(r, dtype=float)) / p.rho
    f0, f1, f2 = alpha_derivs(s, p.a)
    return f0, -f1 / p.rho, f2 / p.rho ** 2


def phi_time(t, p):
    """Temporal cut-off: 0 for t <= t0 - T, 1 for t >= t0 - T + delta, increasing."""
    scalar = np.ndim(t) == 0
    s = (np.atleast_1d(np.asarray(t, dtype=float)) - p.t0 + p.T) / p.delta
    out = alpha_derivs(s, p.a)[0]
    return float(out[0]) if scalar else out


def phi_time_derivs(t, p):
    s = (np.asarray(t, dtype=float) - p.t0 + p.T) / p.delta
    f0, f1, f2 = alpha_derivs(s, p.a)
    return f0, f1 / p.delta, f2 / p.delta ** 2


@dataclass
class CutoffConstants:
    C_space: float
    C_time: float
    C_space_power: float      # sup over the t^(2/(1-a)) piece
    C_space_bridge: float     # sup over the Hermite bridge and the quartic piece
    history_space: list
    history_time: list


def space_ratio(r, p):
    """(rho|psi'| + rho^2|psi''|) / psi^a, and the mask of points where psi > 0."""
    f0, f1, f2 = psi_bar_derivs(r, p)
    num = p.rho * np.abs(f1) + p.rho ** 2 * np.abs(f2)
    keep = f0 > ZERO_FLOOR
    ratio = np.zeros_like(f0)
    ratio[keep] = num[keep] / f0[keep] ** p.a
    return ratio, keep


def time_ratio(t, p):
    f0, f1, _ = phi_time_derivs(t, p)
    keep = f0 > ZERO_FLOOR
    ratio = np.zeros_like(f0)
    ratio[keep] = p.delta * np.abs(f1[keep]) / f0[keep] ** ((1.0 + p.a) / 2.0)
    return ratio, keep


def _checked_max(x, what):
    if not np.all(np.isfinite(x)):
        raise CutoffError(f"non-finite derivative sample in {what}")
    return float(x.max()) if x.size else 0.0


def measure_cutoff_constants(p, grid_points=1000, r_range=None, t_range=None):
    """Sup of the derivative-bound ratios over a uniform grid and two dyadic refinements.

    Grids are laid out in the rescaled variable s = (R - r)/rho (resp.
    (t - t0 + T)/delta) over [-1/4, 5/4] unless explicit ranges are given,
    which makes the result exactly scale invariant.  The finest level is
    returned; ``history_*`` holds all three.
    """
    if grid_points < 100:
        raise CutoffError("grid_points must be at least 100")
    hs, ht, hp, hb = [], [], [], []
    for level in range(3):
        n = grid_points * 2 ** level + 1
        if r_range is None:
            s = np.linspace(-0.25, 1.25, n)
            r = p.R - p.rho * s
            r = r[r >= 0]
        else:
            r = np.linspace(r_range[0], r_range[1], n)
        if t_range is None:
            t = p.t0 - p.T + p.delta * np.linspace(-0.25, 1.25, n)
        else:
            t = np.linspace(t_range[0], t_range[1], n)
        rs, _ = space_ratio(r, p)
        rt, _ = time_ratio(t, p)
        sv = (p.R - r) / p.rho
        power = (sv >= 0) & (sv <= LEFT)
        hs.append(_checked_max(rs, "space ratio"))
        ht.append(_checked_max(rt, "time ratio"))
        hp.append(_checked_max(rs[power], "space ratio"))
        hb.append(_checked_max(rs[~power], "space ratio"))
    return CutoffConstants(C_space=hs[-1], C_time=ht[-1], C_space_power=hp[-1],
                           C_space_bridge=hb[-1], history_space=hs, history_time=ht)


def power_piece_bound(a):
    """Closed-form sup of the space ratio on the t^(2/(1-a)) piece."""
    return 1.0 / (2.0 * (1.0 - a)) + 2.0 * (1.0 + a) / (1.0 - a) ** 2
