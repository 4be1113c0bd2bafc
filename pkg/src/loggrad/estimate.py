"""Quantities entering the global logarithmic gradient bound.

Notation follows the code, not symbols: ``common`` = gamma^(1/3) + sqrt(mu),
``time_loc`` = 1/sqrt(delta), ``space_loc`` = 1/rho + 1/sqrt(rho (R - rho))
+ k_+^(1/4)/sqrt(rho); the ``*_sq`` variants are the squared-scale
versions used by the bounds on w.  Boundary traces that are not known
are passed as ``UNKNOWN`` (+inf); every min() then falls back to the
universal cut-off terms.
"""

from dataclasses import dataclass, asdict
import math

import numpy as np

from . import geometry
from .source import theta

UNKNOWN = math.inf

B1, B2, B3, INTERIOR = 0, 1, 2, 3
REGION_NAMES = ("B1", "B2", "B3", "I")


class EstimateError(ValueError):
    pass


@dataclass(frozen=True)
class EstimateConstants:
    gamma: float
    mu: float
    common: float
    time_loc: float
    space_loc: float
    common_sq: float
    time_loc_sq: float
    space_loc_sq: float

    @classmethod
    def build(cls, gamma, mu, domain, k):
        if gamma < 0 or mu < 0:
            raise EstimateError("gamma and mu must be non-negative")
        kp = max(k, 0.0)
        R, rho, delta = domain.R, domain.rho, domain.delta
        return cls(
            gamma=gamma, mu=mu,
            common=gamma ** (1.0 / 3.0) + math.sqrt(mu),
            time_loc=1.0 / math.sqrt(delta),
            space_loc=1.0 / rho + 1.0 / math.sqrt(rho * (R - rho)) + kp ** 0.25 / math.sqrt(rho),
            common_sq=gamma ** (2.0 / 3.0) + mu,
            time_loc_sq=1.0 / delta,
            space_loc_sq=1.0 / rho ** 2 + 1.0 / (rho * (R - rho)) + math.sqrt(kp) / rho,
        )

    @classmethod
    def from_analysis(cls, analysis, domain):
        return cls.build(analysis.gamma, analysis.mu, domain, analysis.k)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundaryTraces:
    tau: float      # initial slice
    sigma: float    # lateral boundary

    def __post_init__(self):
        if self.tau < 0 or self.sigma < 0:
            raise EstimateError("boundary traces are non-negative")

    def to_dict(self):
        return {"tau": _json_num(self.tau), "sigma": _json_num(self.sigma)}


def _json_num(x):
    return "unknown" if math.isinf(x) else x


@dataclass(frozen=True)
class RegionCoefficients:
    C: float
    beta1: float
    beta2: float
    beta3: float
    iota: float

    def as_array(self):
        return np.array([self.beta1, self.beta2, self.beta3, self.iota])


def coefficients(traces, consts, C):
    if not C > 0:
        raise EstimateError("C must be positive")
    s, t = traces.sigma, traces.tau
    T, S = consts.time_loc, consts.space_loc
    return RegionCoefficients(
        C=C,
        beta1=t + min(s, C * S),
        beta2=s + min(t, C * T),
        beta3=s + t,
        iota=min(s + t, s + C * T, t + C * S, C * (T + S)),
    )


def iota_arguments(traces, consts, C):
    s, t = traces.sigma, traces.tau
    T, S = consts.time_loc, consts.space_loc
    return (s + t, s + C * T, t + C * S, C * (T + S))


# ---------------------------------------------------------------------------
# regions


def region_codes(d, t, domain, tol=1e-12):
    """Region index per point from geodesic distance ``d`` and time ``t``.

    Seams: d = R - rho belongs to the annulus, t = t0 - T + delta to the
    later-time sets.
    """
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    scale_t = max(1.0, abs(domain.t0), domain.T)
    if np.any(d < 0) or np.any(d > domain.R * (1 + tol)):
        raise EstimateError("point outside the ball")
    if np.any(t < domain.t_start - tol * scale_t) or np.any(t > domain.t0 + tol * scale_t):
        raise EstimateError("time outside [t0 - T, t0]")
    near = d >= domain.R - domain.rho
    early = t < domain.t_switch
    out = np.where(early, np.where(near, B3, B1), np.where(near, B2, INTERIOR))
    return out.astype(np.int64)


def region_of(x, t, domain, metric=None):
    metric = metric or geometry.euclidean(len(domain.x0))
    d = geometry.geodesic_distance(metric, x, domain.x0)
    return REGION_NAMES[int(region_codes(d, t, domain))]


def indicators(d, t, domain):
    """The four 0/1 indicator arrays (B1, B2, B3, I)."""
    codes = region_codes(d, t, domain)
    return tuple((codes == c).astype(np.int64) for c in range(4))


def Z_from_codes(codes, traces, consts, C):
    return coefficients(traces, consts, C).as_array()[codes]


def eval_Z(x, t, traces, consts, C, domain, metric=None):
    metric = metric or geometry.euclidean(len(domain.x0))
    d = geometry.geodesic_distance(metric, x, domain.x0)
    return float(Z_from_codes(region_codes(d, t, domain), traces, consts, C))


def log_factor(u, M):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)) or np.any(u > M * (1 + 1e-12)):
        raise EstimateError("need 0 < u <= M")
    return 1.0 + np.log(M / u)


def theorem_rhs_codes(codes, u, M, traces, consts, C):
    return (C * consts.common + Z_from_codes(codes, traces, consts, C)) * log_factor(u, M)


def theorem_rhs(x, t, u_value, M, traces, consts, C, domain, metric=None):
    """(C * common + Z(x, t)) * (1 + ln(M/u))."""
    Z = eval_Z(x, t, traces, consts, C, domain, metric)
    return float((C * consts.common + Z) * log_factor(u_value, M))


# ---------------------------------------------------------------------------
# bounds on w


def regional_w_bounds(traces, consts, C):
    """Bounds on w valid on the four (overlapping) regional sets."""
    if not C > 0:
        raise EstimateError("C must be positive")
    s2, t2 = traces.sigma ** 2, traces.tau ** 2
    base = C * consts.common_sq
    Ts, Ss = consts.time_loc_sq, consts.space_loc_sq
    return {
        "B1": base + t2 + C * Ss,
        "B2": base + s2 + C * Ts,
        "B3": base + s2 + t2,
        "I": base + min(s2 + t2, s2 + C * Ts, t2 + C * Ss, C * (Ts + Ss)),
    }


def w_bound_codes(codes, traces, consts, C):
    """Pointwise combined bound on w: the best option available in each region."""
    s2, t2 = traces.sigma ** 2, traces.tau ** 2
    Ts, Ss = consts.time_loc_sq, consts.space_loc_sq
    per = np.array([
        t2 + min(s2, C * Ss),
        s2 + min(t2, C * Ts),
        s2 + t2,
        min(s2 + t2, s2 + C * Ts, t2 + C * Ss, C * (Ts + Ss)),
    ])
    return C * consts.common_sq + per[codes]


# ---------------------------------------------------------------------------
# corollary coefficients

COROLLARY_KINDS = ("SZ_heat", "MaZeng", "Semilinear_p", "Usquared", "Interior_general", "LAME")

MAZENG_REGIMES = ("Z1", "Z2", "Z3")


def mazeng_regime(lam, alpha):
    if lam >= 0 and 0 <= alpha < 1:
        return "Z1"
    if lam >= 0 and alpha >= 1:
        return "Z2"
    if lam < 0 and alpha <= 1:
        return "Z3"
    return None


def _need(params, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise EstimateError(f"missing parameters {missing}")
    return [float(params[k]) for k in keys]


def corollary_bound(kind, params, C):
    """Coefficient multiplying (1 + ln(M/u)) in the named corollary.

    ``MaZeng`` returns the coefficient of (1 + ln(M/u))^2 in the bound on
    |grad u|^2/u^2.  ``LAME`` is C (sqrt(k_+) + eps) with eps a bound on
    both boundary traces.
    """
    if not C > 0:
        raise EstimateError("C must be positive")
    if kind == "SZ_heat":
        k, R, T = _need(params, "k", "R", "T")
        if k < 0:
            raise EstimateError("SZ_heat needs k >= 0")
        return C * (1.0 / R + 1.0 / math.sqrt(T) + math.sqrt(k))
    if kind == "MaZeng":
        k, R, T, lam, a = _need(params, "k", "R", "T", "lambda", "alpha")
        natural = mazeng_regime(lam, a)
        if natural is None:
            raise EstimateError(f"lambda={lam}, alpha={a} is outside every MaZeng regime")
        regime = params.get("regime") or natural
        if regime != natural:
            raise EstimateError(f"lambda={lam}, alpha={a} is not in regime {regime}")
        if k < 0:
            raise EstimateError("MaZeng needs k >= 0")
        if regime == "Z1":
            (m,) = _need(params, "m")
            term = lam * a * m ** (a - 1.0) if lam != 0 else 0.0
        elif regime == "Z2":
            (M,) = _need(params, "M")
            term = lam * a * M ** (a - 1.0) if lam != 0 else 0.0
        else:
            (m,) = _need(params, "m")
            term = lam * (a - 1.0) * m ** (a - 1.0)
        return C * (k + 1.0 / R ** 2 + 1.0 / T + term)
    if kind == "Semilinear_p":
        k, R, T, p, M = _need(params, "k", "R", "T", "p", "M")
        m = float(params.get("m", M))
        th = float(params["theta"]) if "theta" in params else theta(p, M, m)
        src_term = 0.0 if p == 0 else p * th ** (p - 1.0)
        return C * (max(math.sqrt(max(k, 0.0)), math.sqrt(max(k + src_term, 0.0)))
                    + 1.0 / math.sqrt(T) + 1.0 / R)
    if kind == "Usquared":
        k, R, T, M = _need(params, "k", "R", "T", "M")
        return C * (1.0 / R + 1.0 / math.sqrt(T) + math.sqrt(max(2.0 * M + k, 0.0)))
    if kind == "Interior_general":
        k, R, T, gamma, mu = _need(params, "k", "R", "T", "gamma", "mu")
        common = gamma ** (1.0 / 3.0) + math.sqrt(mu)
        t_star = 1.0 / math.sqrt(T)
        s_star = 1.0 / R + max(k, 0.0) ** 0.25 / math.sqrt(R)
        return C * (common + t_star + s_star)
    if kind == "LAME":
        k, eps = _need(params, "k", "eps")
        return C * (math.sqrt(max(k, 0.0)) + eps)
    raise EstimateError(f"unknown corollary {kind!r}")


# ---------------------------------------------------------------------------
# grid diagnostics


@dataclass
class DerivedFields:
    v: np.ndarray
    grad_v: np.ndarray       # coordinate partials
    grad_v_norm: np.ndarray  # metric norm
    w: np.ndarray


def derived_fields(fld):
    """v = ln(u/M), grad v and w = |grad v|^2 / (1 - v)^2 on the whole lattice."""
    if np.any(fld.u[:, fld.inside] > fld.M * (1 + 1e-12)):
        raise EstimateError("u exceeds M on the ball")
    if np.any(~(fld.u[:, fld.inside] > 0)):
        raise EstimateError("u must be positive on the ball")
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.log(fld.u / fld.M)
        gu = fld.grad_u()
        gv = gu / fld.u[..., None]
        norm = np.sqrt(np.sum(gv * gv, axis=-1) / fld.phi)
        w = norm ** 2 / (1.0 - v) ** 2
    return DerivedFields(v=v, grad_v=gv, grad_v_norm=norm, w=w)


def log_gradient(fld):
    """|grad u|_g / u on the lattice."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return fld.grad_norm_u() / fld.u


def _sphere_points(fld, count):
    R = fld.domain.R
    if fld.radial:
        return np.array([[R]])
    n = fld.n
    x0 = np.asarray(fld.domain.x0)
    re = geometry.euclidean_radius(fld.metric, R)
    if n == 1:
        return np.array([[x0[0] - re], [x0[0] + re]])
    if n == 2:
        th = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        return x0 + re * np.stack([np.cos(th), np.sin(th)], axis=-1)
    raise EstimateError("sphere sampling beyond n = 2 needs radial mode")


def _closed_ratio(fld, X, t):
    cf = fld.closed
    u = cf.value(X, t)
    g = cf.grad(X, t)
    ph = (np.ones(u.shape) if (fld.metric.is_flat or fld.radial)
          else geometry.conformal_factor(fld.metric, np.broadcast_to(X, g.shape)))
    norm = np.sqrt(np.sum(g * g, axis=-1) / ph)
    v = np.log(u / fld.M)
    return norm / (u * (1.0 - v))


def boundary_traces(fld, tau_known=True, sigma_known=True, oversample=4):
    """tau (initial slice) and sigma (lateral boundary) of |grad u|_g / (u (1 - v)).

    Analytic fields are evaluated in closed form on the lattice nodes of
    the initial slice plus a dense sampling of the sphere, and on the
    sphere over ``oversample`` times as many time levels.  Grid fields
    use the inside nodes of the first level for tau and the
    boundary-adjacent nodes of every level for sigma.
    """
    if fld.t.size < 1 or not fld.boundary_adjacent.any():
        raise EstimateError("field has no lateral boundary layer")
    tau = sigma = None
    if fld.closed is not None:
        count = max(256, int(8 * 2 * math.pi * fld.domain.R / fld.h))
        sph = _sphere_points(fld, count)
        t0 = fld.t[0]
        ins = fld.points[fld.inside]
        tau = max(float(np.max(_closed_ratio(fld, ins, t0))),
                  float(np.max(_closed_ratio(fld, sph, t0))))
        ts = np.linspace(fld.domain.t_start, fld.domain.t0, oversample * (fld.t.size - 1) + 1)
        sigma = float(np.max(_closed_ratio(fld, sph[None, :, :], ts[:, None])))
    else:
        d = derived_fields(fld)
        q = d.grad_v_norm / (1.0 - d.v)
        tau = float(np.max(q[0][fld.inside]))
        sigma = float(np.max(q[:, fld.boundary_adjacent]))
    return BoundaryTraces(tau=tau if tau_known else UNKNOWN,
                          sigma=sigma if sigma_known else UNKNOWN)
