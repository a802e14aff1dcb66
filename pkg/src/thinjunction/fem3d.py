"""Piecewise-linear finite elements on the tetrahedral meshes.

Vectorized assembly, a conjugate-gradient solver (algebraic-multigrid
preconditioned when pyamg is importable, Jacobi otherwise) with constant
deflation for pure flux-condition problems, quadrature-based norms, and
cross-section utilities (averages, slab fluxes, point evaluation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg
from scipy.spatial import cKDTree

from .mesh3d import TetMesh

try:
    import pyamg

    _HAVE_PYAMG = True
except ImportError:  # pragma: no cover
    _HAVE_PYAMG = False

_S5 = math.sqrt(5.0)
_TET_RULES = {
    1: (np.full((1, 4), 0.25), np.array([1.0])),
    2: (np.array([
        [(5 + 3 * _S5) / 20 if a == b else (5 - _S5) / 20
         for b in range(4)] for a in range(4)]),
        np.full(4, 0.25)),
}


def _tet_rule_5():
    rows, wts = [], []
    for a, w in ((0.0927352503108912, 0.0734930431163619),
                 (0.3108859192633005, 0.1126879257180158)):
        for k in range(4):
            row = [a] * 4
            row[k] = 1.0 - 3.0 * a
            rows.append(row)
            wts.append(w)
    a, w = 0.0455037041256497, 0.0425460207770814
    for i in range(3):
        for j in range(i + 1, 4):
            row = [0.5 - a] * 4
            row[i] = row[j] = a
            rows.append(row)
            wts.append(w)
    return np.array(rows), np.array(wts)


_TET_RULES[5] = _tet_rule_5()
_TET_RULES[4] = _TET_RULES[5]

_TRI_RULES = {
    1: (np.full((1, 3), 1.0 / 3.0), np.array([1.0])),
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6],
                  [1 / 6, 1 / 6, 2 / 3]]), np.full(3, 1.0 / 3.0)),
}


def _tri_rule_4():
    rows, wts = [], []
    for a, w in ((0.445948490915965, 0.223381589678011),
                 (0.091576213509771, 0.109951743655322)):
        for k in range(3):
            row = [a] * 3
            row[k] = 1.0 - 2.0 * a
            rows.append(row)
            wts.append(w)
    return np.array(rows), np.array(wts)


_TRI_RULES[4] = _tri_rule_4()


class FemContext:
    """Cached geometry and stiffness matrix of one mesh."""

    def __init__(self, mesh: TetMesh):
        self.mesh = mesh
        x = mesh.nodes[mesh.tets]
        edges = x[:, 1:] - x[:, :1]
        self.volumes = np.linalg.det(edges) / 6.0
        if np.any(self.volumes <= 0):
            raise ValueError("mesh has non-positive tetrahedra")
        minv = np.linalg.inv(edges)
        grads = np.empty((mesh.num_tets, 4, 3))
        grads[:, 1:, :] = np.swapaxes(minv, 1, 2)
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        self.grads = grads
        self.matrix = self._stiffness()
        self._locator = None

    def _stiffness(self):
        m = self.mesh
        local = np.einsum("tad,tbd,t->tab", self.grads, self.grads,
                          self.volumes)
        rows = np.repeat(m.tets, 4, axis=1).ravel()
        cols = np.tile(m.tets, (1, 4)).ravel()
        a = sparse.coo_matrix(
            (local.ravel(), (rows.astype(np.int64), cols.astype(np.int64))),
            shape=(m.num_nodes, m.num_nodes))
        return a.tocsr()

    def quad_points(self, degree=2):
        bary, w = _TET_RULES[degree]
        pts = np.einsum("qa,tad->tqd", bary, self.mesh.nodes[self.mesh.tets])
        wts = np.outer(self.volumes, w)
        return pts, wts, bary

    def volume_load(self, fn, degree=2):
        pts, wts, bary = self.quad_points(degree)
        vals = fn(pts.reshape(-1, 3)).reshape(wts.shape)
        contrib = np.einsum("tq,qa->ta", wts * vals, bary)
        b = np.zeros(self.mesh.num_nodes)
        np.add.at(b, self.mesh.tets.astype(np.int64), contrib)
        return b

    def surface_quad(self, tag, degree=2):
        tris = self.mesh.boundary[tag]
        p = self.mesh.nodes[tris]
        bary, w = _TRI_RULES[degree]
        pts = np.einsum("qa,fad->fqd", bary, p)
        areas = 0.5 * np.linalg.norm(
            np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
        return tris, pts, np.outer(areas, w), bary

    def surface_load(self, tag, fn, degree=2):
        tris, pts, wts, bary = self.surface_quad(tag, degree)
        b = np.zeros(self.mesh.num_nodes)
        if tris.size == 0:
            return b
        vals = fn(pts.reshape(-1, 3)).reshape(wts.shape)
        contrib = np.einsum("fq,qa->fa", wts * vals, bary)
        np.add.at(b, tris.astype(np.int64), contrib)
        return b

    def field_gradients(self, u):
        return np.einsum("tad,ta->td", self.grads,
                         u[self.mesh.tets.astype(np.int64)])

    def locator(self):
        if self._locator is None:
            self._locator = PointLocator(self)
        return self._locator


def _preconditioner(a, nullspace):
    if _HAVE_PYAMG:
        near = np.ones((a.shape[0], 1)) if nullspace else None
        ml = pyamg.smoothed_aggregation_solver(a.tocsr(), B=near,
                                               max_coarse=200)
        return ml.aspreconditioner(cycle="V")
    d = a.diagonal()
    d[d == 0.0] = 1.0
    inv = 1.0 / d
    return LinearOperator(a.shape, matvec=lambda v: inv * v)


def _solve_spd(a, b, rtol=1e-10, deflate=False):
    n = a.shape[0]
    prec = _preconditioner(a, deflate)

    if deflate:
        def project(v):
            return v - v.mean()

        op = LinearOperator((n, n), matvec=lambda v: project(a @ project(v)))
        mop = LinearOperator((n, n), matvec=lambda v: project(prec @ project(v)))
        rhs = project(b)
    else:
        op, mop, rhs = a, prec, b

    iters = [0]

    def count(_):
        iters[0] += 1

    u, code = cg(op, rhs, rtol=rtol, atol=0.0, maxiter=20000, M=mop,
                 callback=count)
    if code != 0:
        raise RuntimeError(f"conjugate gradients stalled (code {code})")
    if deflate:
        u = u - u.mean()
    resid = float(np.linalg.norm(a @ u - rhs) / max(np.linalg.norm(rhs),
                                                    1e-300))
    return u, {"iterations": iters[0], "relative_residual": resid}


def solve_poisson(ctx: FemContext, volume=None, neumann=None, dirichlet=None,
                  load=None, rtol=1e-10):
    """Galerkin solve of -div grad u = volume with the given conditions.

    ``neumann`` maps boundary tags to the outward normal derivative of
    the solution; ``dirichlet`` maps tags to boundary values (callable
    on points or scalar).  Without any Dirichlet tag the compatible
    system is solved in the mean-zero class.  ``load`` adds a
    preassembled right-hand-side vector.
    """

    mesh = ctx.mesh
    b = np.zeros(mesh.num_nodes)
    if volume is not None:
        b += ctx.volume_load(volume, degree=2)
    if load is not None:
        b = b + load
    for tag, fn in (neumann or {}).items():
        b += ctx.surface_load(tag, fn, degree=2)

    if not dirichlet:
        u, info = _solve_spd(ctx.matrix, b, rtol=rtol, deflate=True)
        info["load_defect"] = float(b.sum())
        return u, info

    fixed = np.zeros(mesh.num_nodes, dtype=bool)
    values = np.zeros(mesh.num_nodes)
    for tag, fn in dirichlet.items():
        ids = np.unique(mesh.boundary[tag])
        fixed[ids] = True
        if callable(fn):
            values[ids] = fn(mesh.nodes[ids])
        else:
            values[ids] = float(fn)
    if not fixed.any():
        raise ValueError("dirichlet tags matched no boundary nodes")
    free = ~fixed
    a = ctx.matrix
    b_f = b[free] - a[free][:, fixed] @ values[fixed]
    u_f, info = _solve_spd(a[free][:, free].tocsr(), b_f, rtol=rtol)
    u = values.copy()
    u[free] = u_f
    return u, info


def galerkin_residual(ctx: FemContext, u, b, trials=20, seed=7):
    rng = np.random.default_rng(seed)
    r = ctx.matrix @ u - b
    worst = 0.0
    for _ in range(trials):
        v = rng.standard_normal(ctx.mesh.num_nodes)
        worst = max(worst, abs(float(r @ v)) / float(np.linalg.norm(v)))
    return worst


def norms(ctx: FemContext, u, reference=None, mask=None, degree=2):
    """(L2, H1-seminorm, H1) of u minus an optional analytic reference.

    ``reference(points) -> (values, gradients)`` is evaluated at the
    quadrature points; ``mask`` selects tetrahedra (centroid filters).
    """

    pts, wts, bary = ctx.quad_points(degree)
    tets = ctx.mesh.tets.astype(np.int64)
    vals = np.einsum("ta,qa->tq", u[tets], bary)
    grads = ctx.field_gradients(u)
    if reference is not None:
        rv, rg = reference(pts.reshape(-1, 3))
        vals = vals - rv.reshape(wts.shape)
        grads = grads[:, None, :] - rg.reshape(wts.shape + (3,))
    else:
        grads = np.broadcast_to(grads[:, None, :], wts.shape + (3,))
    if mask is not None:
        wts = wts * mask[:, None]
    l2sq = float(np.sum(wts * vals ** 2))
    h1sq = float(np.sum(wts * np.sum(grads ** 2, axis=-1)))
    return math.sqrt(l2sq), math.sqrt(h1sq), math.sqrt(l2sq + h1sq)


def region_mask(ctx: FemContext, predicate):
    cent = ctx.mesh.nodes[ctx.mesh.tets].mean(axis=1)
    return predicate(cent).astype(float)


def station_average(mesh: TetMesh, u, station):
    """Cross-section mean of a vertex field over one tube station."""

    pts = mesh.nodes[station.nodes]
    tri = station.nodes[mesh.disk_tris]
    p = pts[mesh.disk_tris]
    v1 = p[:, 1] - p[:, 0]
    v2 = p[:, 2] - p[:, 0]
    areas = 0.5 * np.linalg.norm(np.cross(v1, v2), axis=1)
    means = u[tri.astype(np.int64)].mean(axis=1)
    total = areas.sum()
    return float((areas * means).sum() / total)


def station_profile(mesh: TetMesh, u, edge):
    """Axial positions and cross-section means along one tube."""

    xs, means = [], []
    for st in mesh.stations[edge]:
        xs.append(st.x)
        means.append(station_average(mesh, u, st))
    return np.array(xs), np.array(means)


def slab_flux(ctx: FemContext, u, axis, lo, hi):
    """Average axial flux of u across the slab lo < x_axis < hi."""

    cent = ctx.mesh.nodes[ctx.mesh.tets].mean(axis=1)
    inside = (cent[:, axis] > lo) & (cent[:, axis] < hi)
    if not inside.any():
        raise ValueError("slab contains no elements")
    g = ctx.field_gradients(u)
    return float((ctx.volumes[inside] * g[inside, axis]).sum() / (hi - lo))


class PointLocator:
    """Barycentric point location via node adjacency candidates."""

    def __init__(self, ctx: FemContext):
        self.ctx = ctx
        mesh = ctx.mesh
        tets = mesh.tets.astype(np.int64)
        order = np.argsort(tets.ravel(), kind="stable")
        self._adj_tets = order // 4
        counts = np.bincount(tets.ravel(), minlength=mesh.num_nodes)
        self._adj_ptr = np.concatenate([[0], np.cumsum(counts)])
        self._tree = cKDTree(mesh.nodes)
        x = mesh.nodes[tets]
        self._origin = x[:, 0, :]
        self._minv = np.linalg.inv(x[:, 1:] - x[:, :1])

    def _candidates(self, node_ids):
        out = []
        for n in np.unique(node_ids):
            out.append(self._adj_tets[self._adj_ptr[n]:self._adj_ptr[n + 1]])
        return np.unique(np.concatenate(out)) if out else np.empty(0, int)

    def locate(self, points, tol=1e-9):
        """(tet index, barycentric coords) per point; -1 when outside."""

        points = np.asarray(points, dtype=float)
        npts = points.shape[0]
        found = np.full(npts, -1, dtype=np.int64)
        bary = np.zeros((npts, 4))
        best_gap = np.full(npts, -np.inf)
        best_tet = np.full(npts, -1, dtype=np.int64)
        best_bary = np.zeros((npts, 4))
        for k in (1, 8, 32):
            todo = np.flatnonzero(found < 0)
            if todo.size == 0:
                break
            _, near = self._tree.query(points[todo], k=k)
            near = np.asarray(near).reshape(todo.size, -1)
            for row, p_idx in enumerate(todo):
                cand = self._candidates(near[row])
                if cand.size == 0:
                    continue
                local = np.einsum(
                    "tdk,td->tk", self._minv[cand],
                    points[p_idx] - self._origin[cand])
                lam = np.concatenate(
                    [1.0 - local.sum(axis=1, keepdims=True), local], axis=1)
                gaps = lam.min(axis=1)
                j = int(np.argmax(gaps))
                if gaps[j] > best_gap[p_idx]:
                    best_gap[p_idx] = gaps[j]
                    best_tet[p_idx] = cand[j]
                    best_bary[p_idx] = lam[j]
                if gaps[j] >= -tol:
                    found[p_idx] = cand[j]
                    bary[p_idx] = np.clip(lam[j], 0.0, None)
        missing = found < 0
        if missing.any():
            ok = best_gap >= -1e-6
            found[missing & ok] = best_tet[missing & ok]
            bary[missing & ok] = np.clip(best_bary[missing & ok], 0.0, None)
        return found, bary

    def evaluate(self, u, points, gradient=False):
        tet, lam = self.locate(points)
        if np.any(tet < 0):
            raise ValueError("points outside the mesh")
        tets = self.ctx.mesh.tets.astype(np.int64)
        vals = np.einsum("pa,pa->p", u[tets[tet]], lam)
        if not gradient:
            return vals
        grads = self.ctx.field_gradients(u)[tet]
        return vals, grads
