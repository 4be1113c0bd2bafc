"""Ambient metrics: flat R^n and conformally flat 2-D metrics g = phi * delta.

Fields handed to the pointwise operators are callables ``f(x) -> float``.
A :class:`Sampler` can additionally carry closed-form derivatives, in
which case the stencils are skipped.
"""

from dataclasses import dataclass, field
import math

import numpy as np


class GeometryError(ValueError):
    pass


class UnsupportedMetric(GeometryError):
    pass


@dataclass(frozen=True)
class ConformalFactor:
    """phi(x) with its open domain; vectorised over the last axis of ``x``."""
    phi: object
    contains: object
    euclid_radius: object = None  # geodesic radius about x0 -> Euclidean radius (x0 = 0 only)


def _poincare_phi(x, lam):
    r2 = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    return 4.0 * lam * lam / (1.0 - r2) ** 2


def _poincare_contains(x, lam):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1) < 1.0


_FACTORS = {
    "poincare": ConformalFactor(
        phi=lambda x, p: _poincare_phi(x, p["lambda"]),
        contains=lambda x, p: _poincare_contains(x, p["lambda"]),
        euclid_radius=lambda R, p: math.tanh(R / (2.0 * p["lambda"])),
    ),
}


def register_conformal_factor(factor_id, phi, contains):
    """Register a 2-D conformal factor ``phi(x, params)`` with its domain predicate."""
    if factor_id in _FACTORS:
        raise GeometryError(f"conformal factor {factor_id!r} already registered")
    _FACTORS[factor_id] = ConformalFactor(phi=phi, contains=contains)


@dataclass(frozen=True)
class MetricSpec:
    kind: str                     # "euclidean" | "conformal2d"
    n: int
    k: float = 0.0                # Ric >= -k
    factor_id: str = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "euclidean":
            if self.n < 1:
                raise GeometryError("dimension must be positive")
            if self.k != 0.0:
                raise GeometryError("flat metric has k = 0")
        elif self.kind == "conformal2d":
            if self.n != 2:
                raise GeometryError("conformal metrics are two-dimensional")
            if self.factor_id not in _FACTORS:
                raise GeometryError(f"unknown conformal factor {self.factor_id!r}")
            if self.factor_id == "poincare":
                lam = self.params.get("lambda", 0.0)
                if not lam > 0:
                    raise GeometryError("Poincare scale lambda must be > 0")
                if not math.isclose(self.k, 1.0 / lam ** 2, rel_tol=1e-12):
                    raise GeometryError("Poincare disk requires k = 1/lambda^2")
        else:
            raise GeometryError(f"unknown metric kind {self.kind!r}")

    @property
    def k_plus(self):
        return max(self.k, 0.0)

    @property
    def is_flat(self):
        return self.kind == "euclidean"

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "k": self.k}
        if self.kind == "conformal2d":
            d["factor_id"] = self.factor_id
            d["params"] = dict(self.params)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], n=int(d["n"]), k=float(d.get("k", 0.0)),
                   factor_id=d.get("factor_id"), params=dict(d.get("params", {})))


def euclidean(n=2):
    return MetricSpec("euclidean", n)


def poincare(lam=1.0):
    return MetricSpec("conformal2d", 2, k=1.0 / lam ** 2, factor_id="poincare",
                      params={"lambda": float(lam)})


def conformal(factor_id, k, **params):
    return MetricSpec("conformal2d", 2, k=k, factor_id=factor_id, params=params)


def conformal_factor(metric, x):
    """phi at the point(s) ``x`` (last axis = coordinates); ones when flat."""
    x = np.asarray(x, dtype=float)
    if metric.is_flat:
        return np.ones(x.shape[:-1]) if x.ndim > 1 else 1.0
    fac = _FACTORS[metric.factor_id]
    return fac.phi(x, metric.params)


def in_domain(metric, x):
    x = np.asarray(x, dtype=float)
    if metric.is_flat:
        return np.ones(x.shape[:-1], dtype=bool) if x.ndim > 1 else True
    return _FACTORS[metric.factor_id].contains(x, metric.params)


def _check_point(metric, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != metric.n:
        raise GeometryError(f"point has {x.size} coordinates, metric has n = {metric.n}")
    if not np.all(np.isfinite(x)) or not bool(in_domain(metric, x)):
        raise GeometryError(f"point {x.tolist()} outside the metric domain")
    return x


def geodesic_distance(metric, x, x0):
    x = _check_point(metric, x)
    x0 = _check_point(metric, x0)
    if metric.is_flat:
        return float(np.linalg.norm(x - x0))
    if metric.factor_id != "poincare":
        raise UnsupportedMetric("distances are only available for the Poincare factor")
    lam = metric.params["lambda"]
    z, z0 = complex(*x), complex(*x0)
    q = abs(z - z0) / abs(1.0 - z0.conjugate() * z)
    return 2.0 * lam * math.atanh(min(q, 1.0))


def distance_field(metric, pts, x0):
    """Vectorised geodesic distance from ``x0`` to each row of ``pts``.

    Points outside the metric domain get ``inf``.
    """
    pts = np.asarray(pts, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if metric.is_flat:
        return np.linalg.norm(pts - x0, axis=-1)
    if metric.factor_id != "poincare":
        raise UnsupportedMetric("distances are only available for the Poincare factor")
    lam = metric.params["lambda"]
    z = pts[..., 0] + 1j * pts[..., 1]
    z0 = complex(x0[0], x0[1])
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.abs(z - z0) / np.abs(1.0 - np.conj(z0) * z)
        d = 2.0 * lam * np.arctanh(np.minimum(q, 1.0))
    d = np.where(np.abs(z) < 1.0, d, np.inf)
    return d


def euclidean_radius(metric, R):
    """Euclidean radius of the geodesic ball B(0, R)."""
    if metric.is_flat:
        return float(R)
    fac = _FACTORS[metric.factor_id]
    if fac.euclid_radius is None:
        raise UnsupportedMetric(f"no ball radius available for factor {metric.factor_id!r}")
    return float(fac.euclid_radius(R, metric.params))


def geodesic_radius(metric, r_euclid):
    """Inverse of :func:`euclidean_radius` (Poincare and flat only)."""
    if metric.is_flat:
        return float(r_euclid)
    if metric.factor_id != "poincare":
        raise UnsupportedMetric("distances are only available for the Poincare factor")
    return 2.0 * metric.params["lambda"] * math.atanh(r_euclid)


# ---------------------------------------------------------------------------
# pointwise differential operators


@dataclass(frozen=True)
class Sampler:
    """Scalar field with optional closed-form Euclidean derivatives.

    ``grad(x)`` returns the coordinate partials, ``lap(x)`` the flat
    Laplacian sum_i d_ii f.
    """
    f: object
    grad: object = None
    lap: object = None

    def __call__(self, x):
        return self.f(x)


def _sample(field, x):
    val = float(field(x))
    if not math.isfinite(val):
        raise GeometryError(f"non-finite sample at {np.asarray(x).tolist()}")
    return val


def _stencil_points(metric, x, h):
    n = metric.n
    pts = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        pts.append([x + s * e for s in (-2, -1, 0, 1, 2)])
    arr = np.array(pts)
    if not metric.is_flat and not np.all(in_domain(metric, arr.reshape(-1, n))):
        raise GeometryError("stencil leaves the metric domain")
    return pts


def euclidean_partials(metric, field, x, h=1e-3):
    """Coordinate partials of ``field`` at ``x`` (4th-order centered)."""
    x = _check_point(metric, x)
    grad = getattr(field, "grad", None)
    if grad is not None:
        return np.asarray(grad(x), dtype=float)
    out = np.empty(metric.n)
    for i, line in enumerate(_stencil_points(metric, x, h)):
        f = [_sample(field, p) for p in line]
        out[i] = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h)
    return out


def euclidean_laplacian(metric, field, x, h=1e-3):
    x = _check_point(metric, x)
    lap = getattr(field, "lap", None)
    if lap is not None:
        return float(lap(x))
    total = 0.0
    for line in _stencil_points(metric, x, h):
        f = [_sample(field, p) for p in line]
        total += (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h)
    return total


def laplace_beltrami(metric, field, x, h=1e-3):
    """Laplace-Beltrami operator; on conformal 2-D metrics this is phi^-1 times the flat Laplacian."""
    lap = euclidean_laplacian(metric, field, x, h)
    if metric.is_flat:
        return lap
    return lap / float(conformal_factor(metric, np.asarray(x, dtype=float)))


def gradient_norm(metric, field, x, h=1e-3):
    """sqrt(g^{ij} f_i f_j)."""
    g = euclidean_partials(metric, field, x, h)
    norm = float(np.sqrt(np.dot(g, g)))
    if metric.is_flat:
        return norm
    return norm / math.sqrt(float(conformal_factor(metric, np.asarray(x, dtype=float))))
