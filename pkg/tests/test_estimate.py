import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loggrad import estimate as est
from loggrad import geometry, samplers
from loggrad import source as src
from loggrad.analytic import analytic_solution
from loggrad.domain import DomainSpec
from loggrad.solver import solve_parabolic

DOM = DomainSpec((0.0, 0.0), 2.0, 1.0, 1.0, 0.5, 0.4)
CONSTS = est.EstimateConstants.build(0.3, 0.8, DOM, 0.5)

pos = st.floats(0.0, 50.0)
Cs = st.floats(1e-3, 1e3)


def test_constants_formulas():
    c = CONSTS
    assert c.common == pytest.approx(0.3 ** (1 / 3) + math.sqrt(0.8))
    assert c.common_sq == pytest.approx(0.3 ** (2 / 3) + 0.8)
    assert c.time_loc == pytest.approx(1 / math.sqrt(0.4))
    assert c.time_loc_sq == pytest.approx(1 / 0.4)
    assert c.space_loc == pytest.approx(1 / 0.5 + 1 / math.sqrt(0.5 * 1.5) + 0.5 ** 0.25 / math.sqrt(0.5))
    assert c.space_loc_sq == pytest.approx(1 / 0.25 + 1 / (0.5 * 1.5) + math.sqrt(0.5) / 0.5)
    with pytest.raises(est.EstimateError):
        est.EstimateConstants.build(-1.0, 0.0, DOM, 0.0)


def test_partition_identity_random_points():
    rng = np.random.default_rng(0)
    d = rng.uniform(0, DOM.R, 100_000)
    t = rng.uniform(DOM.t_start, DOM.t0, 100_000)
    ind = est.indicators(d, t, DOM)
    assert np.all(sum(ind) == 1)


def test_region_examples_and_seams():
    assert est.region_of((0.0, 0.0), DOM.t0, DOM) == "I"
    assert est.region_of((DOM.R - DOM.rho / 2, 0.0), DOM.t_start, DOM) == "B3"
    assert est.region_of((0.1, 0.0), DOM.t_switch, DOM) == "I"
    assert est.region_of((DOM.R - DOM.rho, 0.0), DOM.t0, DOM) == "B2"
    assert est.region_of((0.1, 0.0), DOM.t_start, DOM) == "B1"
    with pytest.raises(est.EstimateError):
        est.region_of((DOM.R + 0.1, 0.0), DOM.t0, DOM)
    with pytest.raises(est.EstimateError):
        est.region_of((0.0, 0.0), DOM.t0 + 1, DOM)


def test_region_on_poincare_disk_uses_geodesic_distance():
    dom = DomainSpec((0.0, 0.0), 1.0, 0.0, 1.0, 0.5, 0.5)
    m = geometry.poincare(1.0)
    r_in = geometry.euclidean_radius(m, 0.49)
    r_out = geometry.euclidean_radius(m, 0.51)
    assert est.region_of((r_in, 0.0), 0.0, dom, m) == "I"
    assert est.region_of((r_out, 0.0), 0.0, dom, m) == "B2"


@settings(max_examples=200, deadline=None)
@given(pos, pos, Cs)
def test_iota_below_each_argument(sigma, tau, C):
    tr = est.BoundaryTraces(tau, sigma)
    co = est.coefficients(tr, CONSTS, C)
    for arg in est.iota_arguments(tr, CONSTS, C):
        assert co.iota <= arg
    assert co.iota <= co.beta3
    assert co.beta3 == sigma + tau


@settings(max_examples=100, deadline=None)
@given(pos, pos, Cs, st.floats(1.0, 100.0))
def test_coefficients_monotone_in_C(sigma, tau, C, f):
    tr = est.BoundaryTraces(tau, sigma)
    a, b = est.coefficients(tr, CONSTS, C), est.coefficients(tr, CONSTS, C * f)
    assert b.beta1 >= a.beta1 and b.beta2 >= a.beta2 and b.iota >= a.iota
    assert b.beta3 == a.beta3


def test_iota_large_C_limit_and_zero_traces():
    tr = est.BoundaryTraces(0.3, 0.2)
    assert est.coefficients(tr, CONSTS, 1e12).iota == 0.5
    zero = est.BoundaryTraces(0.0, 0.0)
    co = est.coefficients(zero, CONSTS, 7.0)
    assert (co.beta1, co.beta2, co.beta3, co.iota) == (0.0, 0.0, 0.0, 0.0)
    rng = np.random.default_rng(1)
    d = rng.uniform(0, DOM.R, 1000)
    t = rng.uniform(DOM.t_start, DOM.t0, 1000)
    assert np.all(est.Z_from_codes(est.region_codes(d, t, DOM), zero, CONSTS, 7.0) == 0.0)


def test_z_examples():
    eps = 1e-3
    tr = est.BoundaryTraces(eps, eps)
    assert est.eval_Z((0.0, 0.0), DOM.t0, tr, CONSTS, 1.0, DOM) == pytest.approx(2 * eps)
    unknown = est.BoundaryTraces(est.UNKNOWN, est.UNKNOWN)
    co = est.coefficients(unknown, CONSTS, 2.0)
    assert co.iota == pytest.approx(2.0 * (CONSTS.time_loc + CONSTS.space_loc))
    assert est.BoundaryTraces(est.UNKNOWN, 0.1).to_dict()["tau"] == "unknown"


def test_reduction_inequality_grid():
    k = np.linspace(0.0, 10.0, 100)[:, None]
    R = np.linspace(0.05, 10.0, 100)[None, :]
    assert np.all(2 * k ** 0.25 / np.sqrt(R) <= np.sqrt(k) + 1 / R + 1e-12)


def test_universal_interior_reduces_to_classical_form():
    # with rho = R/2, delta = T/2: C (T + S) <= C' (sqrt k + 1/sqrt T + 1/R), C' <= 3 C
    for k in (0.0, 0.5, 4.0):
        for R in (0.5, 1.0, 3.0):
            for T in (0.25, 1.0, 4.0):
                dom = DomainSpec((0.0, 0.0), R, 0.0, T, R / 2, T / 2)
                c = est.EstimateConstants.build(0.0, 0.0, dom, k)
                lhs = c.time_loc + c.space_loc
                rhs = math.sqrt(k) + 1 / math.sqrt(T) + 1 / R
                assert lhs <= 3 * 1.42 * rhs


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(1.0, 50.0), st.floats(0.01, 100.0))
def test_theorem_rhs_monotone_in_C(u, M, C):
    u = min(u, M)
    tr = est.BoundaryTraces(0.2, 0.4)
    a = est.theorem_rhs((0.3, 0.2), 0.5, u, M, tr, CONSTS, C, DOM)
    b = est.theorem_rhs((0.3, 0.2), 0.5, u, M, tr, CONSTS, 2 * C, DOM)
    assert b >= a


def test_theorem_rhs_examples():
    tr = est.BoundaryTraces(0.2, 0.4)
    C = 1.5
    z = est.eval_Z((0.0, 0.0), 0.5, tr, CONSTS, C, DOM)
    assert est.theorem_rhs((0.0, 0.0), 0.5, 3.0, 3.0, tr, CONSTS, C, DOM) == pytest.approx(C * CONSTS.common + z)
    heat = est.EstimateConstants.build(0.0, 0.0, DOM, 0.0)
    val = est.theorem_rhs((0.0, 0.0), 0.5, 1.0, 3.0, tr, heat, C, DOM)
    assert val == pytest.approx(est.eval_Z((0.0, 0.0), 0.5, tr, heat, C, DOM) * (1 + math.log(3.0)))
    manifold = est.EstimateConstants.build(0.0, 0.5, DOM, 0.5)
    assert manifold.common == pytest.approx(math.sqrt(0.5))
    with pytest.raises(est.EstimateError):
        est.theorem_rhs((0.0, 0.0), 0.5, 4.0, 3.0, tr, CONSTS, C, DOM)


def test_regional_w_bounds():
    C = 2.0
    zero = est.BoundaryTraces(0.0, 0.0)
    flat = est.EstimateConstants.build(0.0, 0.0, DOM, 0.0)
    assert est.regional_w_bounds(zero, flat, C)["I"] == 0.0
    unknown = est.BoundaryTraces(est.UNKNOWN, est.UNKNOWN)
    b = est.regional_w_bounds(unknown, CONSTS, C)
    assert b["I"] == pytest.approx(C * CONSTS.common_sq + C * (CONSTS.time_loc_sq + CONSTS.space_loc_sq))
    tr = est.BoundaryTraces(0.3, 0.7)
    b = est.regional_w_bounds(tr, CONSTS, C)
    assert b["B3"] == pytest.approx(C * CONSTS.common_sq + 0.49 + 0.09)
    # the pointwise combined form never exceeds the regional bound of its region
    codes = np.arange(4)
    comb = est.w_bound_codes(codes, tr, CONSTS, C)
    for c, name in zip(codes, est.REGION_NAMES):
        assert comb[c] <= b[name] + 1e-12


def test_corollary_examples():
    assert est.corollary_bound("SZ_heat", {"k": 0.0, "R": 1.0, "T": 1.0}, 3.0) == 6.0
    p = {"k": 0.3, "R": 1.0, "T": 2.0, "M": 4.0}
    semi = est.corollary_bound("Semilinear_p", {**p, "p": 2.0}, 1.0)
    assert semi == pytest.approx(est.corollary_bound("Usquared", p, 1.0))
    z1 = est.corollary_bound("MaZeng", {"k": 0.3, "R": 1.0, "T": 2.0, "lambda": 0.0, "alpha": 0.5,
                                        "m": 0.1}, 1.0)
    assert z1 == pytest.approx(0.3 + 1 + 0.5)
    with pytest.raises(est.EstimateError):
        est.corollary_bound("MaZeng", {"k": 0.0, "R": 1.0, "T": 1.0, "lambda": -1.0,
                                       "alpha": 2.0, "m": 0.1}, 1.0)
    with pytest.raises(est.EstimateError):
        est.corollary_bound("MaZeng", {"k": 0.0, "R": 1.0, "T": 1.0, "lambda": 1.0,
                                       "alpha": 0.5, "m": 0.1, "regime": "Z2"}, 1.0)
    assert est.corollary_bound("LAME", {"k": 0.25, "eps": 0.1}, 2.0) == pytest.approx(1.2)
    ig = est.corollary_bound("Interior_general", {"k": 1.0, "R": 1.0, "T": 1.0, "gamma": 8.0,
                                                  "mu": 4.0}, 1.0)
    assert ig == pytest.approx(2 + 2 + 1 + 1 + 1)
    with pytest.raises(est.EstimateError):
        est.corollary_bound("SZ_heat", {"k": 0.0}, 1.0)


def test_mazeng_matches_closed_form_mu():
    # the source term of each regime is the closed-form mu minus k
    M, m, k = 3.0, 0.4, 0.2
    for lam, a in ((1.0, 0.5), (0.5, 2.0), (-1.0, 0.5)):
        mu, _ = src.compute_mu(src.power(lam, a), DOM, k, M, m, method="closed")
        coef = est.corollary_bound("MaZeng", {"k": k, "R": 1.0, "T": 1.0, "lambda": lam,
                                              "alpha": a, "m": m, "M": M}, 1.0)
        assert coef == pytest.approx(mu + 1.0 + 1.0)


def test_derived_fields_constant():
    dom = DomainSpec((0.0, 0.0), 1.0, 1.0, 1.0, 0.5, 0.5)
    ini, bnd = samplers.make_sampler("constant", dom, value=3.0)
    fld = solve_parabolic(dom, geometry.euclidean(2), src.zero(), ini, bnd, h=0.1,
                          scheme="explicit", dt=0.002)
    d = est.derived_fields(fld)
    assert np.all(d.v[:, fld.inside] == 0.0)
    assert np.all(d.w[:, fld.inside] == 0.0)
    assert est.boundary_traces(fld) == est.BoundaryTraces(0.0, 0.0)


def test_derived_fields_gauss():
    dom = DomainSpec((0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
    fld = analytic_solution("gauss", dom, h=0.05)
    lg = est.log_gradient(fld)
    r = np.linalg.norm(fld.points, axis=-1)
    want = r[None] / (2 * fld.t[:, None, None])
    assert np.abs(lg - want)[:, fld.inside].max() < 1e-12
    d = est.derived_fields(fld)
    sw = np.sqrt(d.w)
    assert np.allclose(sw[:, fld.inside], (want / (1 - d.v))[:, fld.inside], rtol=1e-12)


def test_w_identity_on_grid_field():
    dom = DomainSpec((0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
    fld = analytic_solution("gauss", dom, h=0.025)
    grid = fld.__class__(**{**fld.__dict__, "closed": None})
    for key in list(grid.__dict__):
        if key in ("points", "dist", "euclid_dist", "inside", "phi", "boundary_adjacent"):
            grid.__dict__.pop(key)
    d = est.derived_fields(grid)
    gu = grid.grad_u()
    lhs = d.w * (grid.u * (1 - d.v)) ** 2
    rhs = np.sum(gu * gu, axis=-1)
    stencil_err = np.abs(grid.grad_norm_u() - fld.grad_norm_u())[:, fld.inside].max()
    assert np.abs(lhs - rhs)[:, fld.inside].max() <= 10 * max(stencil_err, 1e-15)


def test_boundary_traces_exp():
    dom = DomainSpec((0.0, 0.0), 1.0, 1.0, 1.0, 0.5, 0.5)
    fld = analytic_solution("exp", dom, h=0.05, eps=0.01, M=19.0)
    tr = est.boundary_traces(fld)
    assert 0 < tr.tau <= math.e ** 2 * 0.01
    assert 0 < tr.sigma <= math.e ** 2 * 0.01
    v = np.log(fld.u / fld.M)[:, fld.inside]
    assert np.all((1 - v >= 1) & (1 - v <= 1 + math.log(19)))


def test_boundary_traces_gauss_refinement():
    dom = DomainSpec((0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
    a = est.boundary_traces(analytic_solution("gauss", dom, h=0.05))
    b = est.boundary_traces(analytic_solution("gauss", dom, h=0.025))
    assert abs(a.tau - b.tau) <= 0.02 * b.tau
    assert abs(a.sigma - b.sigma) <= 0.02 * b.sigma
    # |x|/(2t) / (1 + |x|^2/(4t) + ln t): at |x| = 1, t = 1 this is 0.5/1.25
    assert b.tau == pytest.approx(0.4, rel=1e-12)


def test_derived_fields_rejects_u_above_M():
    dom = DomainSpec((0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
    fld = analytic_solution("gauss", dom, h=0.1)
    fld.M = 0.5 * fld.M
    with pytest.raises(est.EstimateError):
        est.derived_fields(fld)
