"""Checking bounds against solution fields and calibrating the constant C."""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from . import estimate as est
from . import source as src

SEARCH_LO = 2.0 ** -20
SEARCH_HI = 2.0 ** 20
MAX_LISTED_VIOLATIONS = 200

LOG_GRADIENT_KINDS = ("theorem", "SZ_heat", "Semilinear_p", "Usquared", "Interior_general", "LAME")
ESTIMATE_IDS = LOG_GRADIENT_KINDS + ("MaZeng", "regional_w")
SUBREGIONS = ("all", "half", "B1", "B2", "B3", "I")


class CheckError(ValueError):
    pass


def _field_id(fld):
    return fld.label or fld.provenance.get("kind", fld.provenance.get("type", "field"))


@dataclass
class BoundReport:
    estimate_id: str
    field_id: str
    C_used: float
    min_slack: float
    max_ratio: float
    violations: list
    n_violations: int
    checked_nodes: int
    subregion: str
    witness: dict = None

    @property
    def passed(self):
        return self.n_violations == 0

    def to_dict(self):
        return {
            "schema": 1,
            "estimate_id": self.estimate_id,
            "field_id": self.field_id,
            "C_used": self.C_used,
            "min_slack": _num(self.min_slack),
            "max_ratio": _num(self.max_ratio),
            "violations": [dict(x=list(map(float, v[0])), t=float(v[1]), lhs=float(v[2]),
                                rhs=float(v[3])) for v in self.violations],
            "n_violations": self.n_violations,
            "checked_nodes": self.checked_nodes,
            "subregion": self.subregion,
            "passed": self.passed,
            "witness": self.witness,
        }


def _num(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None if x is None or math.isnan(x) else ("inf" if x > 0 else "-inf")
    return float(x)


class EstimateCheck:
    """One estimate bound to one field, with every C-independent piece precomputed."""

    def __init__(self, fld, estimate_id, params=None, source=None, subregion=None,
                 traces=None, analysis=None, mu_method="auto"):
        if estimate_id not in ESTIMATE_IDS:
            raise CheckError(f"unknown estimate {estimate_id!r}")
        self.fld = fld
        self.estimate_id = estimate_id
        self.source = source or src.zero()
        self.params = dict(params or {})
        if subregion is None:
            subregion = "all" if estimate_id in ("theorem", "regional_w") else "half"
        if subregion not in SUBREGIONS:
            raise CheckError(f"unknown subregion {subregion!r}")
        self.subregion = subregion
        dom = fld.domain
        m = fld.inside_min()
        self.analysis = analysis or src.analyze(self.source, dom, fld.metric, fld.M, m,
                                                mu_method=mu_method)
        self.consts = est.EstimateConstants.from_analysis(self.analysis, dom)
        self.traces = traces or est.boundary_traces(fld)

        nt = fld.t.size
        T = np.broadcast_to(fld.t.reshape((-1,) + (1,) * len(fld.axes)), fld.u.shape)
        D = np.broadcast_to(fld.dist, fld.u.shape)
        mask = np.broadcast_to(fld.inside, fld.u.shape).copy()
        if subregion == "half":
            mask &= (D < dom.R / 2) & (T >= dom.t0 - dom.T / 2)
        self._sel = np.flatnonzero(mask.ravel())
        d_sel = D.ravel()[self._sel]
        t_sel = T.ravel()[self._sel]
        codes = est.region_codes(np.minimum(d_sel, dom.R), t_sel, dom)
        if subregion in est.REGION_NAMES:
            keep = codes == est.REGION_NAMES.index(subregion)
            self._sel = self._sel[keep]
            codes = codes[keep]
            t_sel = t_sel[keep]
        self.codes = codes
        self.t_sel = t_sel
        u_sel = fld.u.ravel()[self._sel]
        self.logf = est.log_factor(u_sel, fld.M)

        if estimate_id == "regional_w":
            lhs = est.derived_fields(fld).w
        else:
            lhs = est.log_gradient(fld)
            if estimate_id == "MaZeng":
                lhs = lhs ** 2
        self.lhs = lhs.ravel()[self._sel]
        if not np.all(np.isfinite(self.lhs)):
            raise CheckError("field does not admit gradient stencils on the checked nodes")
        if estimate_id not in ("theorem", "regional_w"):
            self.params = self._corollary_params()
            if estimate_id == "MaZeng":
                self.logf = self.logf ** 2

    def _corollary_params(self):
        fld, dom = self.fld, self.fld.domain
        p = {"k": fld.metric.k, "R": dom.R, "T": dom.T, "M": fld.M, "m": fld.inside_min(),
             "gamma": self.analysis.gamma, "mu": self.analysis.mu,
             "eps": max(self.traces.tau, self.traces.sigma)}
        la = self.source.lam_alpha
        if la is not None:
            p["lambda"], p["alpha"] = la
            p["p"] = la[1]
        p.update(self.params)
        return p

    @property
    def checked_nodes(self):
        return int(self._sel.size)

    def rhs(self, C):
        if self.estimate_id == "theorem":
            coef = C * self.consts.common + est.Z_from_codes(self.codes, self.traces, self.consts, C)
            return coef * self.logf
        if self.estimate_id == "regional_w":
            return est.w_bound_codes(self.codes, self.traces, self.consts, C)
        return est.corollary_bound(self.estimate_id, self.params, C) * self.logf

    def max_ratio(self, C):
        r = self.rhs(C)
        ratio, idx = _kernels.masked_max_ratio(self.lhs, r, np.ones(self.lhs.size, dtype=bool))
        return ratio, idx

    def node(self, idx):
        flat = self._sel[idx]
        spatial = flat % int(np.prod(self.fld.spatial_shape))
        x = self.fld.points.reshape(-1, self.fld.points.shape[-1])[spatial]
        return x, float(self.t_sel[idx])

    def report(self, C):
        if not C > 0:
            raise CheckError("C must be positive")
        r = self.rhs(C)
        slack = r - self.lhs
        bad = np.flatnonzero(slack < 0)
        ratio, idx = self.max_ratio(C)
        listed = []
        for i in bad[:MAX_LISTED_VIOLATIONS]:
            x, t = self.node(i)
            listed.append((x, t, self.lhs[i], r[i]))
        witness = None
        if idx >= 0:
            x, t = self.node(idx)
            witness = {"x": [float(c) for c in x], "t": t, "ratio": ratio,
                       "region": est.REGION_NAMES[int(self.codes[idx])]}
        return BoundReport(
            estimate_id=self.estimate_id, field_id=_field_id(self.fld), C_used=float(C),
            min_slack=float(slack.min()) if slack.size else math.inf,
            max_ratio=ratio, violations=listed, n_violations=int(bad.size),
            checked_nodes=self.checked_nodes, subregion=self.subregion, witness=witness)


def check_estimate(fld, estimate_id, C, params=None, source=None, subregion=None, **kw):
    return EstimateCheck(fld, estimate_id, params, source, subregion, **kw).report(C)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class Calibration:
    C_star: float
    feasible: bool
    tolerance: float
    witness: dict
    per_check: list = field(default_factory=list)
    iterations: int = 0

    def to_dict(self):
        return {"C_star": _num(self.C_star), "feasible": self.feasible,
                "tolerance": self.tolerance, "witness": self.witness,
                "per_check": self.per_check, "iterations": self.iterations}


def _passes(checks, C):
    return all(c.max_ratio(C)[0] <= 1.0 for c in checks)


def calibrate_C(checks, tolerance=1e-4, lo=SEARCH_LO, hi=SEARCH_HI):
    """Smallest C (to relative ``tolerance``) for which every check passes.

    Bisection in log C on [lo, hi]; valid because each right-hand side is
    nondecreasing in C.  Returns ``feasible=False`` when even ``hi``
    fails, and ``lo`` when everything already passes there.
    """
    checks = list(checks)
    if not checks:
        raise CheckError("calibration needs at least one field")
    it = 0
    if not _passes(checks, hi):
        worst = max(checks, key=lambda c: c.max_ratio(hi)[0])
        rep = worst.report(hi)
        return Calibration(math.inf, False, tolerance,
                           {"field_id": rep.field_id, "estimate_id": rep.estimate_id,
                            **(rep.witness or {})})
    if _passes(checks, lo):
        hi_c = lo
    else:
        a, b = math.log(lo), math.log(hi)
        while b - a > math.log1p(tolerance):
            mid = 0.5 * (a + b)
            it += 1
            if _passes(checks, math.exp(mid)):
                b = mid
            else:
                a = mid
        hi_c = math.exp(b)
    ratios = [c.max_ratio(hi_c)[0] for c in checks]
    worst = checks[int(np.argmax(ratios))]
    rep = worst.report(hi_c)
    witness = {"field_id": rep.field_id, "estimate_id": rep.estimate_id, **(rep.witness or {})}
    per = [{"field_id": _field_id(c.fld), "estimate_id": c.estimate_id, "max_ratio": r}
           for c, r in zip(checks, ratios)]
    return Calibration(hi_c, True, tolerance, witness, per, it)


# ---------------------------------------------------------------------------
# differential inequality residual


@dataclass
class LemmaResidual:
    min_residual: float
    tol: float
    passed: bool
    h: float
    worst: dict
    checked_nodes: int
    max_w: float

    def to_dict(self):
        return dict(self.__dict__)


TOL_CONSTANT = 10.0


def lemma_residual_grid(fld, analysis, collar=2):
    """Residual (Lap w - w_t)/2 - [(1-v) w^2 + v<grad w, grad v>/(1-v) - gamma|grad v|/(1-v)^2 - mu w].

    Returns (residual array over the checked nodes, node mask, w).  The
    check excludes a ``collar``-node band at the spatial boundary and the
    first/last ``collar`` time levels.
    """
    if fld.closed is None and fld.h > 0.05:
        raise CheckError("grid fields need h <= 0.05 for the residual check")
    d = est.derived_fields(fld)
    v, gv, w = d.v, d.grad_v, d.w
    with np.errstate(invalid="ignore", divide="ignore"):
        gw = fld.grad(w)
        lap_w = fld.laplace_beltrami(w)
        wt = _kernels.apply_stencil(w, 0, _kernels.D1_4, 1.0 / fld.dt)
        lhs = 0.5 * (lap_w - wt)
        one_v = 1.0 - v
        rhs = (one_v * w * w + v * fld.inner(gw, gv) / one_v
               - analysis.gamma * d.grad_v_norm / one_v ** 2 - analysis.mu * w)
        res = lhs - rhs
    spatial = fld.inside & (fld.euclid_dist < _ball_edge(fld) - collar * fld.h)
    mask = np.zeros(fld.u.shape, dtype=bool)
    mask[collar:fld.t.size - collar] = spatial
    return res, mask, w


def _ball_edge(fld):
    from .geometry import euclidean_radius
    return fld.domain.R if fld.radial else euclidean_radius(fld.metric, fld.domain.R)


def lemma_pi_residual(fld, analysis, collar=2, tol_constant=TOL_CONSTANT):
    """Minimal residual of the differential inequality satisfied by w.

    The check passes when min >= -tol(h), tol(h) = tol_constant * h^2 * (1 + max|w|)^2.
    """
    res, mask, w = lemma_residual_grid(fld, analysis, collar)
    vals = res[mask]
    if vals.size == 0:
        raise CheckError("no nodes left after excluding the collar")
    if not np.all(np.isfinite(vals)):
        raise CheckError("non-finite residual; field not smooth enough")
    max_w = float(np.max(np.abs(w[mask])))
    tol = tol_constant * fld.h ** 2 * (1.0 + max_w) ** 2
    idx = int(np.argmin(np.where(mask, res, np.inf)))
    it, *sp = np.unravel_index(idx, res.shape)
    x = fld.points[tuple(sp)]
    worst = {"x": [float(c) for c in x], "t": float(fld.t[it])}
    mn = float(vals.min())
    return LemmaResidual(mn, tol, mn >= -tol, fld.h, worst, int(vals.size), max_w)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class Comparison:
    subregion: str
    rows: list
    winner: str
    lame_vs_sz: float = None

    def to_dict(self):
        return {"subregion": self.subregion, "rows": self.rows, "winner": self.winner,
                "lame_vs_sz": self.lame_vs_sz}


def compare_bounds(fld, entries, source=None, subregions=("half",)):
    """Sup of each right-hand side over each subregion, sorted ascending.

    ``entries``: iterable of (estimate_id, params, C).
    """
    out = []
    for sub in subregions:
        rows = []
        for estimate_id, params, C in entries:
            chk = EstimateCheck(fld, estimate_id, params, source, sub)
            r = chk.rhs(C)
            ratio, _ = chk.max_ratio(C)
            rows.append({"estimate_id": estimate_id, "C": float(C),
                         "sup_rhs": float(np.max(r)), "max_ratio": ratio,
                         "valid": ratio <= 1.0})
        rows.sort(key=lambda row: (row["sup_rhs"], row["estimate_id"]))
        sups = {row["estimate_id"]: row["sup_rhs"] for row in rows}
        lame = None
        if "LAME" in sups and "SZ_heat" in sups:
            lame = sups["SZ_heat"] / sups["LAME"]
        out.append(Comparison(sub, rows, rows[0]["estimate_id"], lame))
    return out
