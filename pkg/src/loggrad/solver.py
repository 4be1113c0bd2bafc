"""Solution fields on a lattice and the finite-difference solver for u_t = Lap u + S.

Lattice layout: Cartesian nodes x0 + h*i covering the ball plus a ghost
collar of ``PAD`` nodes.  Unknowns are nodes with |x - x0| < r_ball - h/2
(r_ball is the Euclidean radius of the geodesic ball); every other node
carries Dirichlet data sampled directly from the boundary function.  For
n >= 3 the radial mode solves u_t = u_rr + (n-1)/r u_r + S on r >= 0.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels, geometry
from . import source as src
from .domain import DomainSpec

PAD = 3
FIXED_POINT_ITERS = 25
NEWTON_ITERS = 25
FLOOR_FRACTION = 1e-12


class SolverError(RuntimeError):
    pass


class CFLViolation(SolverError):
    pass


class PositivityLoss(SolverError):
    pass


class BoundViolation(ValueError):
    pass


def time_levels(domain, dt):
    """Uniform levels over [t0 - T, t0]; dt is shrunk so that T/dt is an integer."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    steps = domain.T / dt
    nsteps = int(round(steps))
    if nsteps < 1 or abs(steps - nsteps) > 1e-9 * max(1.0, steps):
        nsteps = int(math.ceil(steps))
    dt = domain.T / nsteps
    return domain.t_start + dt * np.arange(nsteps + 1), dt


def lattice_axes(domain, metric, h, radial=False):
    if not h > 0:
        raise ValueError("h must be positive")
    if radial:
        if any(c != 0.0 for c in domain.x0):
            raise ValueError("radial mode is centred at the origin")
        N = int(math.ceil(domain.R / h))
        return (h * np.arange(N + PAD + 1),)
    re = geometry.euclidean_radius(metric, domain.R)
    if not metric.is_flat:
        if any(c != 0.0 for c in domain.x0):
            raise ValueError("conformal lattices are centred at the origin")
        if re + PAD * h >= 1.0:
            raise ValueError("ball plus ghost collar must stay inside the unit disk")
    N = int(math.ceil(re / h))
    idx = np.arange(-N - PAD, N + PAD + 1)
    return tuple(c + h * idx for c in domain.x0)


@dataclass
class SolutionField:
    """Positive grid function on Q_{R,T} with its declared bound M.

    ``u`` has shape (nt, *lattice).  ``closed`` optionally supplies
    closed-form derivatives (``grad``, ``ut``, ``lap`` taking (X, t)).
    """
    domain: DomainSpec
    metric: geometry.MetricSpec
    axes: tuple
    t: np.ndarray
    u: np.ndarray
    M: float
    provenance: dict
    h: float
    dt: float
    radial: bool = False
    closed: object = None
    label: str = ""

    def __post_init__(self):
        if self.u.shape != (self.t.size,) + tuple(a.size for a in self.axes):
            raise ValueError("u shape does not match the lattice")
        if not self.M > 0:
            raise ValueError("M must be positive")

    # -- geometry of the lattice -------------------------------------------------

    @property
    def n(self):
        return self.metric.n

    @property
    def spatial_shape(self):
        return self.u.shape[1:]

    @cached_property
    def points(self):
        """Node coordinates, shape (*lattice, ndim_lattice)."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @cached_property
    def dist(self):
        if self.radial:
            return self.axes[0].copy()
        return geometry.distance_field(self.metric, self.points, self.domain.x0)

    @cached_property
    def euclid_dist(self):
        if self.radial:
            return self.axes[0].copy()
        return np.linalg.norm(self.points - np.asarray(self.domain.x0), axis=-1)

    @cached_property
    def inside(self):
        """Nodes of the open ball B(x0, R)."""
        return self.dist < self.domain.R

    @cached_property
    def phi(self):
        if self.metric.is_flat or self.radial:
            return np.ones(self.spatial_shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            ph = geometry.conformal_factor(self.metric, self.points)
        return np.where(geometry.in_domain(self.metric, self.points), ph, np.nan)

    @cached_property
    def boundary_adjacent(self):
        """Inside nodes with at least one lattice neighbour outside the ball."""
        ins = self.inside
        adj = np.zeros_like(ins)
        for ax in range(ins.ndim):
            for s in (1, -1):
                nb = np.roll(ins, s, axis=ax)
                adj |= ins & ~nb
        if self.radial:
            adj[0] = False
        return adj

    def inside_min(self):
        return float(self.u[:, self.inside].min())

    def inside_max(self):
        return float(self.u[:, self.inside].max())

    def inside_samples(self):
        """(X, t, u) flattened over inside nodes and all time levels."""
        X = self.points[self.inside]
        nt = self.t.size
        Xs = np.broadcast_to(X, (nt,) + X.shape)
        ts = np.broadcast_to(self.t[:, None], (nt, X.shape[0]))
        return Xs, ts, self.u[:, self.inside]

    # -- derivatives ---------------------------------------------------------------

    def _radial_ext(self, a):
        # even reflection through r = 0
        return np.concatenate([a[..., 2:0:-1], a], axis=-1)

    def partial(self, a, axis, order=1):
        """4th-order centred derivative of a grid array along a lattice axis.

        ``a`` has shape (nt, *lattice) (or any leading dims); ``axis`` is a
        lattice axis index.  Radial arrays are reflected evenly at r = 0.
        """
        w = _kernels.D1_4 if order == 1 else _kernels.D2_4
        scale = 1.0 / self.h ** order
        if self.radial:
            ext = self._radial_ext(a)
            return _kernels.apply_stencil(ext, -1, w, scale)[..., 2:]
        ax = a.ndim - len(self.axes) + axis
        return _kernels.apply_stencil(a, ax, w, scale)

    def grad(self, a):
        """Euclidean partials, shape a.shape + (ndim,)."""
        return np.stack([self.partial(a, i) for i in range(len(self.axes))], axis=-1)

    def flat_laplacian(self, a):
        if self.radial:
            r = self.axes[0]
            urr = self.partial(a, 0, 2)
            ur = self.partial(a, 0, 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                lap = urr + (self.n - 1) * ur / r
            lap[..., 0] = self.n * urr[..., 0]
            return lap
        return sum(self.partial(a, i, 2) for i in range(len(self.axes)))

    def laplace_beltrami(self, a):
        return self.flat_laplacian(a) / self.phi

    def inner(self, ga, gb):
        """Metric inner product of two Euclidean-partial arrays."""
        return np.sum(ga * gb, axis=-1) / self.phi

    def grad_u(self):
        """Coordinate partials of u; closed form when registered."""
        if self.closed is not None:
            return self.closed.grad(self.points[None], self.t.reshape((-1,) + (1,) * len(self.axes)))
        return self.grad(self.u)

    def grad_norm_u(self):
        g = self.grad_u()
        return np.sqrt(np.sum(g * g, axis=-1) / self.phi)

    def check_bound(self):
        if self.inside_min() <= 0:
            raise BoundViolation("u must be positive on Q_{R,T}")
        if self.inside_max() > self.M * (1 + 1e-12):
            raise BoundViolation(f"u exceeds the declared bound M={self.M}")


# ---------------------------------------------------------------------------
# finite-difference operator


def _operator(axes, unknown, metric_phi, h, radial, n):
    """Sparse rows of the discrete Laplace-Beltrami operator for the unknowns.

    Returns (A, K, unknown_index, known_index): A acts on unknowns, K on
    the known (Dirichlet) nodes.
    """
    shape = unknown.shape
    flat_unknown = unknown.ravel()
    nodes = np.arange(flat_unknown.size).reshape(shape)
    uidx = np.flatnonzero(flat_unknown)
    kidx = np.flatnonzero(~flat_unknown)
    pos = np.full(flat_unknown.size, -1)
    pos[uidx] = np.arange(uidx.size)
    kpos = np.full(flat_unknown.size, -1)
    kpos[kidx] = np.arange(kidx.size)

    rows, cols, vals = [], [], []
    inv_h2 = 1.0 / (h * h)
    coords = np.array(np.unravel_index(uidx, shape)).T
    diff = (1.0 / metric_phi.ravel()[uidx])
    if radial:
        r = axes[0]
        for row, (i,) in enumerate(coords):
            if i == 0:
                entries = [(i, -2.0 * n * inv_h2), (i + 1, 2.0 * n * inv_h2)]
            else:
                c = (n - 1) / (r[i] * 2.0 * h)
                entries = [(i - 1, inv_h2 - c), (i, -2.0 * inv_h2), (i + 1, inv_h2 + c)]
            for j, v in entries:
                rows.append(row)
                cols.append(j)
                vals.append(v)
    else:
        nd = len(shape)
        for row, c in enumerate(coords):
            rows.append(row)
            cols.append(nodes[tuple(c)])
            vals.append(-2.0 * nd * inv_h2 * diff[row])
            for ax in range(nd):
                for s in (-1, 1):
                    cc = c.copy()
                    cc[ax] += s
                    rows.append(row)
                    cols.append(nodes[tuple(cc)])
                    vals.append(inv_h2 * diff[row])
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    vals = np.asarray(vals)
    isu = pos[cols] >= 0
    A = sp.csr_matrix((vals[isu], (rows[isu], pos[cols[isu]])), shape=(uidx.size, uidx.size))
    K = sp.csr_matrix((vals[~isu], (rows[~isu], kpos[cols[~isu]])), shape=(uidx.size, kidx.size))
    return A, K, uidx, kidx


def _sample_grid(fn, pts, *args):
    out = np.asarray(fn(pts, *args), dtype=float)
    return np.broadcast_to(out, pts.shape[:-1]).copy()


def solve_parabolic(domain, metric, source, initial, boundary, scheme="cn", h=0.05, dt=None,
                    M=None, radial=None, label=""):
    """Integrate u_t = Lap_g u + S on Q_{R,T} with Dirichlet data.

    ``initial(X)`` and ``boundary(X, t)`` are vectorised samplers (X has
    coordinates on the trailing axis; in radial mode X holds r).  ``scheme``
    is "explicit" or "cn".  ``M`` overrides the observed maximum.
    """
    scheme = {"explicit": "explicit", "cn": "cn", "cranknicolson": "cn",
              "crank-nicolson": "cn"}.get(str(scheme).lower().replace("_", ""))
    if scheme is None:
        raise ValueError("scheme must be 'explicit' or 'cn'")
    if radial is None:
        radial = metric.is_flat and metric.n >= 3
    if metric.n >= 3 and not radial:
        raise ValueError("n >= 3 is only supported in radial mode")
    if radial and not metric.is_flat:
        raise ValueError("radial mode is Euclidean only")
    dt = dt if dt is not None else h
    t, dt = time_levels(domain, dt)
    axes = lattice_axes(domain, metric, h, radial)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if radial:
        edist = axes[0]
        r_ball = domain.R
        phi = np.ones(edist.shape)
    else:
        edist = np.linalg.norm(pts - np.asarray(domain.x0), axis=-1)
        r_ball = geometry.euclidean_radius(metric, domain.R)
        phi = (np.ones(edist.shape) if metric.is_flat
               else geometry.conformal_factor(metric, pts))
    unknown = edist < r_ball - h / 2
    nd = 1 if radial else metric.n
    if not unknown.any():
        raise ValueError("lattice too coarse: no interior unknowns")

    u = np.empty((t.size,) + unknown.shape)
    u0 = _sample_grid(boundary, pts, t[0])
    u0[unknown] = _sample_grid(initial, pts)[unknown]
    if np.any(~(u0[unknown] > 0)):
        raise PositivityLoss("initial datum must be positive")
    u[0] = u0
    ref = M if M is not None else float(np.max(u0[unknown]))
    X_unk = pts[unknown]

    def S_at(vals, tt):
        return src.eval_S(source, X_unk, np.full(vals.shape, tt), vals)

    def dS_at(vals, tt):
        return src.eval_dS_du(source, X_unk, np.full(vals.shape, tt), vals)

    has_source = not (source.kind == "zero" or (source.lam_alpha and source.lam_alpha[0] == 0.0))

    if scheme == "explicit":
        limit = h * h / (2.0 * nd)
        if dt * float(np.max(1.0 / phi[unknown])) > limit * (1 + 1e-12):
            raise CFLViolation(f"explicit scheme needs dt <= {limit:.3e} (got {dt:.3e})")
        if radial:
            A, K, uidx, kidx = _operator(axes, unknown, phi, h, radial, metric.n)
        coef = dt / phi
    else:
        A, K, uidx, kidx = _operator(axes, unknown, phi, h, radial, metric.n)
        eye = sp.identity(A.shape[0], format="csc")
        lhs = (eye - 0.5 * dt * A).tocsc()
        lu = spla.splu(lhs)

    for j in range(t.size - 1):
        t_now, t_next = t[j], t[j + 1]
        cur = u[j]
        nxt = _sample_grid(boundary, pts, t_next)
        w = cur[unknown]
        if scheme == "explicit":
            if radial:
                kn = cur.ravel()[kidx]
                new = w + dt * (A @ w + K @ kn)
            else:
                full = _kernels.explicit_step(cur, unknown, coef, h)
                new = full[unknown]
            if has_source:
                new = new + dt * S_at(w, t_now)
        else:
            g_now = K @ cur.ravel()[kidx]
            g_next = K @ nxt.ravel()[kidx]
            rhs = w + 0.5 * dt * (A @ w + g_now + g_next)
            if not has_source:
                new = lu.solve(rhs)
            else:
                rhs = rhs + 0.5 * dt * S_at(w, t_now)
                new = _cn_nonlinear(lu, lhs, rhs, w, dt, lambda v: S_at(v, t_next),
                                    lambda v: dS_at(v, t_next))
        if not np.all(np.isfinite(new)):
            raise SolverError(f"non-finite values at t={t_next:.6g}")
        floor = FLOOR_FRACTION * max(ref, float(np.max(new)))
        if np.any(new <= floor):
            bad = np.argmin(new)
            raise PositivityLoss(f"positivity lost at t={t_next:.6g}, node {X_unk[bad].tolist()}, "
                                 f"u={new[bad]:.3e}")
        nxt[unknown] = new
        u[j + 1] = nxt

    fld = SolutionField(domain=domain, metric=metric, axes=axes, t=t, u=u, M=1.0,
                        provenance={"type": "fd", "scheme": scheme, "h": h, "dt": dt,
                                    "source": source.to_dict()},
                        h=h, dt=dt, radial=radial, label=label or f"fd-{scheme}")
    observed = fld.inside_max()
    if M is None:
        fld.M = observed
    else:
        if observed > M * (1 + 1e-12):
            raise BoundViolation(f"solution exceeds declared M={M} (max {observed})")
        fld.M = float(M)
    return fld


def _cn_nonlinear(lu, lhs, rhs, guess, dt, S, dS):
    """Solve (I - dt/2 A) w = rhs + dt/2 S(w): lagged source, Newton as fallback."""
    w = guess
    for _ in range(FIXED_POINT_ITERS):
        new = lu.solve(rhs + 0.5 * dt * S(w))
        if not np.all(np.isfinite(new)) or np.any(new <= 0.0):
            break
        done = np.max(np.abs(new - w)) <= 1e-13 * max(1.0, float(np.max(np.abs(new))))
        w = new
        if done:
            return w
    w = guess if not np.all(np.isfinite(w)) else w
    for _ in range(NEWTON_ITERS):
        pos = np.maximum(w, 1e-300)
        F = lhs @ w - rhs - 0.5 * dt * S(pos)
        J = (lhs - 0.5 * dt * sp.diags(dS(pos))).tocsc()
        step = spla.spsolve(J, F)
        w = w - step
        if not np.all(np.isfinite(w)):
            break
        if np.max(np.abs(step)) <= 1e-13 * max(1.0, float(np.max(np.abs(w)))):
            return w
    raise SolverError("Crank-Nicolson nonlinear solve diverged")


def pde_residual(fld, source, margin=None):
    """max |u_t - Lap_g u - S| over inside nodes and interior time levels.

    u_t is the centred difference in time; the Laplacian uses the same
    4th-order spatial stencils as the downstream checks.  Nodes within
    geodesic distance ``margin`` of the sphere are skipped; the default is
    0 for closed-form fields and rho for solver output, whose cut-cell
    boundary layer is only first order.
    """
    if margin is None:
        margin = 0.0 if fld.closed is not None else fld.domain.rho
    if fld.t.size < 3:
        raise ValueError("need at least three time levels")
    u = fld.u
    ut = (u[2:] - u[:-2]) / (2.0 * fld.dt)
    lap = fld.laplace_beltrami(u[1:-1])
    Xs = np.broadcast_to(fld.points, lap.shape + (fld.points.shape[-1],))
    ts = np.broadcast_to(fld.t[1:-1].reshape((-1,) + (1,) * len(fld.axes)), lap.shape)
    S = src.eval_S(source, Xs, ts, np.maximum(u[1:-1], 1e-300))
    keep = fld.inside & (fld.dist < fld.domain.R - margin)
    res = np.abs(ut - lap - S)[:, keep]
    if res.size == 0 or not np.all(np.isfinite(res)):
        raise ValueError("grid too coarse for the residual stencil")
    return float(res.max())
