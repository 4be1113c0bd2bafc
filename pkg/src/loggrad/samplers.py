"""Initial/boundary data for the solver, looked up by id from configs.

A sampler factory takes keyword parameters plus the domain and returns
``(initial(X), boundary(X, t))``.  The analytic kinds feed the solver
their own traces, so the solve can be compared against the closed form.
"""

import numpy as np

from . import analytic

_SAMPLERS = {}


class SamplerError(ValueError):
    pass


def register_sampler(sampler_id, factory):
    _SAMPLERS[sampler_id] = factory


def registered_samplers():
    return sorted(_SAMPLERS)


def make_sampler(sampler_id, domain, **params):
    try:
        factory = _SAMPLERS[sampler_id]
    except KeyError:
        raise SamplerError(f"unknown sampler {sampler_id!r}") from None
    return factory(domain, **params)


def _constant(domain, value=1.0):
    if not value > 0:
        raise SamplerError("constant data must be positive")

    def initial(X):
        return np.full(np.shape(X)[:-1], float(value))

    def boundary(X, t):
        return np.full(np.shape(X)[:-1], float(value))

    return initial, boundary


def _cosine(domain, base=0.6, amp=0.2, freq=1.0):
    """Time-independent data base + amp * prod cos(freq * (x_i - x0_i))."""
    if not base - abs(amp) > 0:
        raise SamplerError("cosine data must stay positive: need base > |amp|")
    x0 = np.asarray(domain.x0)

    def initial(X):
        X = np.asarray(X, dtype=float)
        return base + amp * np.prod(np.cos(freq * (X - x0[: X.shape[-1]])), axis=-1)

    def boundary(X, t):
        return initial(X)

    return initial, boundary


def _analytic(kind):
    def factory(domain, **params):
        cf = analytic.make_closed_form(kind, **params)

        def initial(X):
            return cf.value(X, domain.t_start)

        def boundary(X, t):
            return cf.value(X, t)

        return initial, boundary

    return factory


register_sampler("constant", _constant)
register_sampler("cosine", _cosine)
for _kind in analytic.KINDS:
    register_sampler(_kind, _analytic(_kind))
