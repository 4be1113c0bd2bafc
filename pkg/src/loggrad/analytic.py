"""Closed-form solutions sampled onto the solver lattice.

* Gauss kernel  (4 pi t)^(-n/2) exp(-|x|^2 / 4t), heat equation, t > 0.
* 10 + eps * exp(x_1 + t), caloric in any dimension.
* x_1 + 2 on the Poincare disk, harmonic for the hyperbolic metric.

Each carries closed-form coordinate derivatives so that gradient-based
diagnostics do not pay stencil error.
"""

import math

import numpy as np
from scipy.optimize import minimize_scalar

from . import geometry
from .solver import SolutionField, lattice_axes, time_levels


class GaussKernel:
    kind = "gauss"

    def __init__(self, n=2):
        self.n = int(n)

    def params(self):
        return {"n": self.n}

    def _r2(self, X):
        return np.sum(np.asarray(X, dtype=float) ** 2, axis=-1)

    def value(self, X, t):
        t = np.asarray(t, dtype=float)
        return (4.0 * math.pi * t) ** (-self.n / 2.0) * np.exp(-self._r2(X) / (4.0 * t))

    def grad(self, X, t):
        t = np.asarray(t, dtype=float)
        u = self.value(X, t)
        return -np.asarray(X, dtype=float) / (2.0 * t[..., None]) * u[..., None]

    def ut(self, X, t):
        t = np.asarray(t, dtype=float)
        return self.value(X, t) * (self._r2(X) / (4.0 * t * t) - self.n / (2.0 * t))

    lap = ut

    def validate(self, domain, metric):
        if not metric.is_flat:
            raise ValueError("the Gauss kernel lives on flat space")
        if domain.t_start <= 0:
            raise ValueError("Gauss kernel needs t > 0 on the whole window")

    def sup(self, domain):
        """Max over the closed cylinder: nearest point to 0, best time."""
        rmin = max(float(np.linalg.norm(domain.x0)) - domain.R, 0.0)
        a, b = domain.t_start, domain.t0

        def neg_log(t):
            return rmin ** 2 / (4.0 * t) + self.n / 2.0 * math.log(4.0 * math.pi * t)

        cands = [a, b]
        res = minimize_scalar(neg_log, bounds=(a, b), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, b)})
        cands.append(float(res.x))
        if rmin > 0:
            tc = rmin ** 2 / (2.0 * self.n)
            if a <= tc <= b:
                cands.append(tc)
        X = np.array([rmin] + [0.0] * (self.n - 1))
        return max(float(self.value(X, t)) for t in cands)


class ExpExample:
    kind = "exp"

    def __init__(self, eps=0.01):
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        self.eps = float(eps)

    def params(self):
        return {"eps": self.eps}

    def _e(self, X, t):
        return self.eps * np.exp(np.asarray(X, dtype=float)[..., 0] + np.asarray(t, dtype=float))

    def value(self, X, t):
        return 10.0 + self._e(X, t)

    def grad(self, X, t):
        e = self._e(X, t)
        g = np.zeros(e.shape + (np.shape(X)[-1],))
        g[..., 0] = e
        return g

    def ut(self, X, t):
        return self._e(X, t)

    lap = ut

    def validate(self, domain, metric):
        if not metric.is_flat:
            raise ValueError("the exponential example lives on flat space")

    def sup(self, domain):
        return 10.0 + self.eps * math.exp(domain.x0[0] + domain.R + domain.t0)


class PoincareHarmonic:
    kind = "poincare_harmonic"

    def __init__(self, lam=1.0):
        self.lam = float(lam)

    def params(self):
        return {"lambda": self.lam}

    def value(self, X, t):
        X = np.asarray(X, dtype=float)
        return X[..., 0] + 2.0 + 0.0 * np.asarray(t, dtype=float)

    def grad(self, X, t):
        X = np.asarray(X, dtype=float)
        shape = np.broadcast_shapes(X.shape[:-1], np.shape(t))
        g = np.zeros(shape + X.shape[-1:])
        g[..., 0] = 1.0
        return g

    def ut(self, X, t):
        X = np.asarray(X, dtype=float)
        return np.zeros(np.broadcast_shapes(X.shape[:-1], np.shape(t)))

    lap = ut

    def validate(self, domain, metric):
        if metric.kind != "conformal2d" or metric.factor_id != "poincare":
            raise ValueError("x_1 + 2 example needs the Poincare metric")
        if not math.isclose(metric.params["lambda"], self.lam):
            raise ValueError("metric lambda does not match the example")

    def sup_inf(self, r_euclid):
        """sup and inf of x_1 + 2 on the Euclidean disk of radius r about 0."""
        return 2.0 + r_euclid, 2.0 - r_euclid

    def sup(self, domain, metric):
        return self.sup_inf(geometry.euclidean_radius(metric, domain.R))[0]


KINDS = {"gauss": GaussKernel, "exp": ExpExample, "poincare_harmonic": PoincareHarmonic}


def make_closed_form(kind, **params):
    try:
        cls = KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown analytic solution {kind!r}") from None
    if kind == "poincare_harmonic":
        return cls(params.get("lambda", params.get("lam", 1.0)))
    return cls(**params)


class _RadialClosed:
    """Adapter evaluating an isotropic closed form at radius r (X = r[..., None])."""

    def __init__(self, inner):
        self.inner = inner

    def value(self, X, t):
        return self.inner.value(X, t)

    def grad(self, X, t):
        # radial derivative, returned as a one-component partial
        return self.inner.grad(X, t)

    def ut(self, X, t):
        return self.inner.ut(X, t)

    def lap(self, X, t):
        return self.inner.lap(X, t)


def analytic_solution(kind, domain, metric=None, h=0.05, dt=None, M=None, radial=False,
                      label="", **params):
    """Sample a closed-form solution on the solver lattice.

    ``M`` defaults to the exact supremum over the closed cylinder; a
    declared value must dominate it.
    """
    cf = make_closed_form(kind, **params)
    if metric is None:
        metric = (geometry.poincare(cf.lam) if kind == "poincare_harmonic"
                  else geometry.euclidean(getattr(cf, "n", len(domain.x0))))
    cf.validate(domain, metric)
    if kind == "gauss" and cf.n != metric.n:
        raise ValueError("kernel dimension differs from the metric dimension")
    if radial and kind != "gauss":
        raise ValueError("radial sampling is only meaningful for the Gauss kernel")
    t, dt = time_levels(domain, dt if dt is not None else h)
    axes = lattice_axes(domain, metric, h, radial)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    u = cf.value(pts[None], t.reshape((-1,) + (1,) * len(axes)))
    exact = cf.sup(domain, metric) if kind == "poincare_harmonic" else cf.sup(domain)
    if M is None:
        M = exact
    elif M < exact * (1 - 1e-12):
        raise ValueError(f"declared M={M} is below the exact supremum {exact}")
    fld = SolutionField(domain=domain, metric=metric, axes=axes, t=t, u=np.ascontiguousarray(u),
                        M=float(M),
                        provenance={"type": "analytic", "kind": kind, "params": cf.params()},
                        h=h, dt=dt, radial=radial,
                        closed=_RadialClosed(cf) if radial else cf,
                        label=label or kind)
    return fld
