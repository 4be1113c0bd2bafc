import math

import numpy as np
import pytest

from loggrad import fieldio, geometry, samplers
from loggrad import source as src
from loggrad.analytic import GaussKernel, analytic_solution
from loggrad.domain import DomainError, DomainSpec
from loggrad.solver import (CFLViolation, PositivityLoss, BoundViolation, pde_residual,
                            solve_parabolic)

GAUSS_DOM = DomainSpec((0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
UNIT = DomainSpec((0.0, 0.0), 1.0, 1.0, 1.0, 0.5, 0.5)


def _gauss_data(n=2):
    g = GaussKernel(n)
    return (lambda X: g.value(X, GAUSS_DOM.t_start)), (lambda X, t: g.value(X, t))


def test_domain_validation_names_field():
    with pytest.raises(DomainError) as err:
        DomainSpec((0.0, 0.0), 1.0, 0.0, 1.0, 1.0, 0.5)
    assert err.value.field == "rho"
    with pytest.raises(DomainError) as err:
        DomainSpec((0.0, 0.0), 1.0, 0.0, 1.0, 0.5, 1.5)
    assert err.value.field == "delta"


def test_crank_nicolson_matches_gauss_kernel_at_second_order():
    errs = []
    for h in (0.1, 0.05, 0.025):
        ini, bnd = _gauss_data()
        fld = solve_parabolic(GAUSS_DOM, geometry.euclidean(2), src.zero(), ini, bnd, h=h)
        exact = analytic_solution("gauss", GAUSS_DOM, h=h).u
        errs.append(np.abs(fld.u - exact)[:, fld.inside].max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 1.7) & (orders < 2.3))


def test_constant_data_stays_constant():
    ini, bnd = samplers.make_sampler("constant", UNIT, value=2.5)
    # the explicit update is exact; Crank-Nicolson goes through a sparse LU solve
    for scheme, dt, tol in (("cn", 0.05, 1e-13), ("explicit", 0.0005, 0.0)):
        fld = solve_parabolic(UNIT, geometry.euclidean(2), src.zero(), ini, bnd, scheme=scheme,
                              h=0.05, dt=dt)
        assert np.abs(fld.u - 2.5).max() <= tol
    assert pde_residual(fld, src.zero()) == 0.0


def test_linear_source_matches_ode():
    c = 0.7
    dom = DomainSpec((0.0, 0.0), 1.0, 1.0, 1.0, 0.5, 0.5)
    ini = lambda X: np.full(np.shape(X)[:-1], c)
    bnd = lambda X, t: np.full(np.shape(X)[:-1], c * math.exp(t - dom.t_start))
    errs = []
    for dt in (0.1, 0.05):
        fld = solve_parabolic(dom, geometry.euclidean(2), src.power(1.0, 1.0), ini, bnd,
                              h=0.1, dt=dt)
        exact = c * np.exp(fld.t - dom.t_start)
        errs.append(np.abs(fld.u[:, fld.inside] - exact[:, None]).max())
    assert errs[1] < errs[0] / 3.5  # second order in dt
    assert errs[1] < 1e-3


def test_explicit_max_principle_and_positivity():
    ini, bnd = samplers.make_sampler("cosine", UNIT, base=1.0, amp=0.5, freq=3.0)
    h = 0.05
    fld = solve_parabolic(UNIT, geometry.euclidean(2), src.zero(),
                          lambda X: ini(X) + 0.3 * np.sin(5 * np.asarray(X)[..., 1]) ** 2,
                          bnd, scheme="explicit", h=h, dt=h * h / 4)
    lattice_boundary = fld.u[0].copy()
    par_max = max(fld.u[0].max(), fld.u[:, ~fld.inside].max())
    par_min = min(fld.u[0].min(), fld.u[:, ~fld.inside].min())
    assert fld.u.max() <= par_max
    assert fld.u.min() >= par_min - 1e-12
    assert lattice_boundary.min() > 0


def test_cfl_violation():
    ini, bnd = samplers.make_sampler("constant", UNIT)
    with pytest.raises(CFLViolation):
        solve_parabolic(UNIT, geometry.euclidean(2), src.zero(), ini, bnd, scheme="explicit",
                        h=0.05, dt=0.01)


def test_positivity_loss_is_reported():
    ini, bnd = samplers.make_sampler("constant", UNIT, value=1.0)
    with pytest.raises(PositivityLoss):
        solve_parabolic(UNIT, geometry.euclidean(2), src.power(-5.0, 0.0), ini,
                        lambda X, t: np.full(np.shape(X)[:-1], 1e-3), h=0.1, dt=0.05)


def test_declared_bound_must_dominate():
    ini, bnd = samplers.make_sampler("constant", UNIT, value=2.0)
    with pytest.raises(BoundViolation):
        solve_parabolic(UNIT, geometry.euclidean(2), src.zero(), ini, bnd, h=0.1, M=1.0)
    fld = solve_parabolic(UNIT, geometry.euclidean(2), src.zero(), ini, bnd, h=0.1, M=5.0)
    assert fld.M == 5.0


def test_one_dimensional_and_radial_runs():
    d1 = DomainSpec((0.0,), 1.0, 2.0, 1.0, 0.5, 0.5)
    g1 = GaussKernel(1)
    fld = solve_parabolic(d1, geometry.euclidean(1), src.zero(),
                          lambda X: g1.value(X, 1.0), lambda X, t: g1.value(X, t), h=0.025)
    exact = analytic_solution("gauss", d1, h=0.025, n=1).u
    assert np.abs(fld.u - exact)[:, fld.inside].max() < 1e-4

    d3 = DomainSpec((0.0, 0.0, 0.0), 1.0, 2.0, 1.0, 0.5, 0.5)
    g3 = GaussKernel(3)
    errs = []
    for h in (0.05, 0.025):
        fld = solve_parabolic(d3, geometry.euclidean(3), src.zero(),
                              lambda X: g3.value(X, 1.0), lambda X, t: g3.value(X, t), h=h)
        assert fld.radial
        exact = analytic_solution("gauss", d3, h=h, n=3, radial=True).u
        errs.append(np.abs(fld.u - exact)[:, fld.inside].max())
    assert errs[1] < errs[0] / 3


def test_poincare_harmonic_is_steady():
    lam = 1.0
    dom = DomainSpec((0.0, 0.0), 1.2, 1.0, 0.5, 0.6, 0.25)
    ini, bnd = samplers.make_sampler("poincare_harmonic", dom, **{"lambda": lam})
    fld = solve_parabolic(dom, geometry.poincare(lam), src.zero(), ini, bnd, h=0.05, dt=0.05)
    exact = fld.points[..., 0] + 2.0
    assert np.abs(fld.u - exact[None])[:, fld.inside].max() < 1e-10


def test_analytic_examples():
    g = analytic_solution("gauss", GAUSS_DOM, h=0.05)
    assert GaussKernel(2).value(np.array([1.0, 0.0]), 1.0) == pytest.approx(math.exp(-0.25) / (4 * math.pi))
    assert g.M == pytest.approx(1 / (4 * math.pi))
    e = analytic_solution("exp", DomainSpec((0.0, 0.0), 1.0, 1.0, 1.0, 0.5, 0.5), h=0.05, eps=0.01)
    vals = e.u[:, e.inside]
    assert np.all((vals > 10 - math.e ** 2 * 0.01) & (vals < 10 + math.e ** 2 * 0.01))
    from loggrad.analytic import PoincareHarmonic
    assert PoincareHarmonic(1.0).sup_inf(1.0) == (3.0, 1.0)
    with pytest.raises(ValueError):
        analytic_solution("gauss", DomainSpec((0.0, 0.0), 1.0, 0.5, 1.0, 0.5, 0.5))
    with pytest.raises(ValueError):
        analytic_solution("exp", UNIT, eps=1.5)
    with pytest.raises(ValueError):
        analytic_solution("exp", UNIT, M=5.0)


def test_gauss_sup_against_brute_force():
    for dom in (GAUSS_DOM, DomainSpec((1.5, 0.0), 1.0, 2.0, 1.5, 0.5, 0.5),
                DomainSpec((3.0, 0.0), 1.0, 3.0, 2.5, 0.5, 0.5)):
        g = GaussKernel(2)
        rmin = max(np.linalg.norm(dom.x0) - dom.R, 0)
        ts = np.linspace(dom.t_start, dom.t0, 20001)
        brute = g.value(np.array([[rmin, 0.0]]), ts).max()
        assert g.sup(dom) == pytest.approx(brute, rel=1e-8)
        assert g.sup(dom) >= brute


@pytest.mark.parametrize("kind,params,dom", [
    ("gauss", {}, GAUSS_DOM),
    ("exp", {"eps": 0.01}, UNIT),
])
def test_pde_residual_converges(kind, params, dom):
    res = [pde_residual(analytic_solution(kind, dom, h=h, **params), src.zero())
           for h in (0.05, 0.025, 0.0125)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 1.7)


def test_pde_residual_of_solver_output_shrinks():
    ini, bnd = samplers.make_sampler("exp", UNIT, eps=0.01)
    res = [pde_residual(solve_parabolic(UNIT, geometry.euclidean(2), src.zero(), ini, bnd, h=h),
                        src.zero()) for h in (0.1, 0.05, 0.025)]
    assert res[2] < res[1] < res[0]
    assert math.log2(res[1] / res[2]) > 1.7


def test_field_roundtrip_bit_exact(tmp_path):
    ini, bnd = samplers.make_sampler("cosine", UNIT)
    fd = solve_parabolic(UNIT, geometry.euclidean(2), src.power(1.0, 2.0), ini, bnd, h=0.1)
    an = analytic_solution("exp", UNIT, h=0.1, eps=0.01, M=19.0)
    for fld in (fd, an):
        path = tmp_path / f"{fld.label}.field"
        fieldio.save_field(fld, path)
        back = fieldio.load_field(path)
        assert np.array_equal(back.u, fld.u)
        assert np.array_equal(back.t, fld.t)
        assert all(np.array_equal(a, b) for a, b in zip(back.axes, fld.axes))
        assert back.M == fld.M and back.domain == fld.domain and back.metric == fld.metric
        assert back.provenance == fld.provenance
        assert (back.closed is None) == (fld.closed is None)


def test_field_file_errors(tmp_path):
    bad = tmp_path / "bad.field"
    bad.write_text("not json\n")
    with pytest.raises(fieldio.FieldFileError):
        fieldio.load_field(bad)
