"""Nonlinear sources S(x, t, u) and the functionals gamma and mu.

gamma = sup |grad_x S| / u over the cylinder and u in (0, M];
mu    = sup (k + dS/du - S/u + S/(u(1 - v)))_+ with v = ln(u/M).

Power laws have closed forms; anything else is handled by a grid
supremum.  Custom sources are registered by id with vectorised
callables ``S(x, t, u)``, ``grad_x(x, t, u)`` (trailing axis = space) and
``d_u(x, t, u)``.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import geometry

CLOSED = "ClosedForm"
GRID = "GridSup"


class SourceError(ValueError):
    pass


@dataclass(frozen=True)
class CustomSource:
    S: object
    grad_x: object
    d_u: object


_CUSTOM = {}


def register_source(source_id, S, grad_x, d_u):
    _CUSTOM[source_id] = CustomSource(S, grad_x, d_u)


def registered_sources():
    return sorted(_CUSTOM)


@dataclass(frozen=True)
class SourceSpec:
    kind: str                      # "zero" | "power" | "semilinear" | "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "power":
            for key in ("lambda", "alpha"):
                if key not in self.params:
                    raise SourceError(f"power source needs {key!r}")
        elif self.kind == "semilinear":
            if "p" not in self.params:
                raise SourceError("semilinear source needs 'p'")
        elif self.kind == "custom":
            if self.params.get("id") not in _CUSTOM:
                raise SourceError(f"unknown custom source {self.params.get('id')!r}")
        elif self.kind != "zero":
            raise SourceError(f"unknown source kind {self.kind!r}")

    @property
    def lam_alpha(self):
        """(lambda, alpha) for the power-law family, None otherwise."""
        if self.kind == "zero":
            return 0.0, 1.0
        if self.kind == "power":
            return float(self.params["lambda"]), float(self.params["alpha"])
        if self.kind == "semilinear":
            return 1.0, float(self.params["p"])
        return None

    @property
    def x_independent(self):
        return self.kind != "custom"

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, d)


def zero():
    return SourceSpec("zero")


def power(lam, alpha):
    return SourceSpec("power", {"lambda": float(lam), "alpha": float(alpha)})


def semilinear(p):
    return SourceSpec("semilinear", {"p": float(p)})


def custom(source_id):
    return SourceSpec("custom", {"id": source_id})


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(~(u > 0)):
        raise SourceError("S is only defined for u > 0")
    return u


def _finite(val, what):
    if not np.all(np.isfinite(val)):
        raise SourceError(f"custom source produced non-finite {what}")
    return val


def eval_S(spec, x, t, u):
    u = _check_u(u)
    la = spec.lam_alpha
    if la is not None:
        lam, a = la
        if lam == 0.0:
            out = np.zeros_like(u)
        else:
            out = lam * u ** a
    else:
        out = _finite(np.asarray(_CUSTOM[spec.params["id"]].S(x, t, u), dtype=float), "S")
    return float(out) if np.ndim(out) == 0 else out


def eval_dS_du(spec, x, t, u):
    u = _check_u(u)
    la = spec.lam_alpha
    if la is not None:
        lam, a = la
        if lam == 0.0 or a == 0.0:
            out = np.zeros_like(u)
        else:
            out = lam * a * u ** (a - 1.0)
    else:
        out = _finite(np.asarray(_CUSTOM[spec.params["id"]].d_u(x, t, u), dtype=float), "dS/du")
    return float(out) if np.ndim(out) == 0 else out


def eval_grad_x_S(spec, x, t, u):
    """Spatial gradient of S, trailing axis = coordinates."""
    u = _check_u(u)
    x = np.asarray(x, dtype=float)
    if spec.x_independent:
        return np.zeros(np.broadcast_shapes(u.shape, x.shape[:-1]) + x.shape[-1:])
    return _finite(np.asarray(_CUSTOM[spec.params["id"]].grad_x(x, t, u), dtype=float), "grad S")


# ---------------------------------------------------------------------------
# sampling helpers


def ball_samples(metric, domain, nx):
    """Lattice points of the closed geodesic ball, nx per axis (odd, so x0 is hit)."""
    nx = int(nx) | 1
    n = metric.n
    x0 = np.asarray(domain.x0, dtype=float)
    if metric.is_flat:
        re = domain.R
    else:
        if np.any(x0 != 0.0):
            raise SourceError("conformal balls are sampled about the origin only")
        re = geometry.euclidean_radius(metric, domain.R)
    axes = [np.linspace(c - re, c + re, nx) for c in x0]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    d = geometry.distance_field(metric, pts, x0)
    return pts[d <= domain.R * (1 + 1e-12)]


def time_samples(domain, nt):
    return np.linspace(domain.t_start, domain.t0, max(int(nt), 2))


# ---------------------------------------------------------------------------
# gamma


@dataclass(frozen=True)
class GridSpec:
    nx: int = 17
    nt: int = 9
    nu: int = 41
    nv: int = 41

    def refined(self):
        return GridSpec(2 * self.nx - 1, 2 * self.nt - 1, 2 * self.nu - 1, 2 * self.nv - 1)


def _gamma_sup(spec, metric, domain, M, grid, u_floor):
    pts = ball_samples(metric, domain, grid.nx)
    ts = time_samples(domain, grid.nt)
    us = np.geomspace(u_floor, M, grid.nu)
    best = 0.0
    for t in ts:
        X = np.repeat(pts[:, None, :], us.size, axis=1)
        U = np.broadcast_to(us, X.shape[:-1])
        g = eval_grad_x_S(spec, X, np.full(U.shape, t), U)
        val = np.sqrt(np.sum(g * g, axis=-1)) / U
        best = max(best, float(np.max(val)))
    return best


def compute_gamma(spec, domain, M, grid=None, metric=None):
    """gamma for ``spec``; returns ``(value, method)``.

    Custom sources: grid sup with u log-spaced in (1e-6 M, M] plus one
    refinement.  If pushing the u floor down to 1e-9 M more than doubles
    the sup, |grad S|/u is treated as unbounded and ``inf`` is returned.
    """
    if not M > 0:
        raise SourceError("M must be positive")
    if spec.x_independent:
        return 0.0, CLOSED
    grid = grid or GridSpec()
    metric = metric or geometry.euclidean(len(domain.x0))
    base = _gamma_sup(spec, metric, domain, M, grid, 1e-6 * M)
    deep = _gamma_sup(spec, metric, domain, M, grid, 1e-9 * M)
    if deep > 2.0 * base + 1e-300:
        return math.inf, GRID
    return _gamma_sup(spec, metric, domain, M, grid.refined(), 1e-6 * M), GRID


# ---------------------------------------------------------------------------
# mu


def theta(p, M, m):
    """The u-level at which p * u^(p-1) is largest over [m, M]."""
    if p > 1:
        return M
    if p == 1:
        return 1.0
    if 0 < p < 1:
        return m
    if p == 0:
        return 0.0
    return M


def _pow_term(coef, base, expo):
    if coef == 0.0:
        return 0.0
    return coef * base ** expo


def mu_closed_form(spec, k, M, m):
    """Closed-form upper bound for mu, or None outside the covered regimes."""
    if spec.kind == "zero":
        return max(k, 0.0)
    if spec.kind == "semilinear":
        p = float(spec.params["p"])
        th = theta(p, M, m)
        return max(k + _pow_term(p, th, p - 1.0), 0.0)
    if spec.kind == "power":
        lam, a = spec.lam_alpha
        if lam == 0.0:
            return max(k, 0.0)
        if lam >= 0 and 0 <= a < 1:
            return max(k + lam * a * m ** (a - 1.0), 0.0)
        if lam >= 0 and a >= 1:
            return max(k + lam * a * M ** (a - 1.0), 0.0)
        if lam < 0 and a <= 1:
            return max(k + lam * (a - 1.0) * m ** (a - 1.0), 0.0)
    return None


def mu_integrand(spec, x, t, u, v, k):
    S = eval_S(spec, x, t, u)
    dS = eval_dS_du(spec, x, t, u)
    return k + dS - S / u + S / (u * (1.0 - v))


def _mu_grid(spec, metric, domain, k, M, m, grid):
    us = np.geomspace(m, M, grid.nu) if m < M else np.array([M])
    vs = np.linspace(math.log(m / M), 0.0, grid.nv) if m < M else np.array([0.0])
    U, V = np.meshgrid(us, vs, indexing="ij")
    if spec.x_independent:
        x = np.zeros(U.shape + (metric.n,))
        val = mu_integrand(spec, x, 0.0, U, V, k)
        return max(float(np.max(val)), 0.0)
    pts = ball_samples(metric, domain, grid.nx)
    best = -math.inf
    for t in time_samples(domain, grid.nt):
        X = np.broadcast_to(pts[:, None, None, :], (pts.shape[0],) + U.shape + (metric.n,))
        val = mu_integrand(spec, X, t, np.broadcast_to(U, X.shape[:-1]),
                           np.broadcast_to(V, X.shape[:-1]), k)
        best = max(best, float(np.max(val)))
    return max(best, 0.0)


def compute_mu(spec, domain, k, M, m=None, grid=None, method="auto", metric=None, field=None):
    """mu for ``spec``; returns ``(value, method)``.

    ``method``: "auto" (closed form where available), "closed" (error
    outside the closed-form regimes), "grid" (decoupled grid sup over
    u in [m, M], v in [ln(m/M), 0]) or "coupled" (sup along the nodes of
    ``field`` with v = ln(u/M)).
    """
    if field is not None and m is None:
        m = float(field.inside_min())
    if m is None:
        raise SourceError("field infimum m is required without an attached field")
    if not m > 0:
        raise SourceError("m must be positive")
    if not M > 0 or m > M:
        raise SourceError("need 0 < m <= M")
    metric = metric or geometry.euclidean(len(domain.x0))
    if method == "coupled":
        if field is None:
            raise SourceError("coupled mode needs a solution field")
        X, t, u = field.inside_samples()
        v = np.log(u / M)
        val = mu_integrand(spec, X, t, u, v, k)
        return max(float(np.max(val)), 0.0), GRID
    if method in ("auto", "closed"):
        cf = mu_closed_form(spec, k, M, m)
        if cf is not None:
            return cf, CLOSED
        if method == "closed":
            raise SourceError(f"no closed form for mu with source {spec.to_dict()}")
    elif method != "grid":
        raise SourceError(f"unknown mu method {method!r}")
    grid = grid or GridSpec()
    return _mu_grid(spec, metric, domain, k, M, m, grid.refined()), GRID


@dataclass(frozen=True)
class SourceAnalysis:
    gamma: float
    mu: float
    method: str
    k: float
    M: float
    m: float

    def to_dict(self):
        return {"gamma": self.gamma, "mu": self.mu, "method": self.method,
                "k": self.k, "M": self.M, "m": self.m}


def analyze(spec, domain, metric, M, m, grid=None, mu_method="auto", field=None):
    g, gm = compute_gamma(spec, domain, M, grid, metric)
    mu, mm = compute_mu(spec, domain, metric.k, M, m, grid, mu_method, metric, field)
    method = CLOSED if gm == CLOSED and mm == CLOSED else GRID
    return SourceAnalysis(g, mu, method, metric.k, M, m)
