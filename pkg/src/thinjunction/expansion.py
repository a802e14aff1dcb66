"""Recurrence orchestration and assembly of the matched expansion.

An :class:`Expansion` builds, once per problem, every ingredient up to
the requested order: axis profiles on the graph, cross-section
correctors, end layers, junction correctors with their transmission
jumps and flux constants.  None of these depend on the slenderness
parameter, so a single instance serves a whole parameter sweep.  The
instance then evaluates the glued partial sum, its gradient, and the
individual interior residual terms at arbitrary points of the thin
domain for any slenderness value.
"""

from __future__ import annotations

import numpy as np

from .config import TRANSVERSE_AXES, ProblemSpec
from .corrector import build_corrector, corrector_rhs
from .cutoffs import SmoothStep
from .graph import TransmissionData, solve_limit, solve_omega_k
from .junction import (
    TruncatedJunction,
    build_inner_rhs,
    check_solvability,
    compute_delta,
    compute_dstar,
    solve_decaying,
    solve_special,
)
from .layers import build_pi


class RecurrenceError(RuntimeError):
    """Internal inconsistency while building the expansion terms."""


class Expansion:
    """All expansion terms of one problem up to ``spec.order``.

    The junction model is built lazily (orders >= 1 need it) and can be
    shared by passing ``junction``.  ``epsilon`` enters only at
    evaluation time, never during construction.
    """

    def __init__(self, spec: ProblemSpec, junction: TruncatedJunction = None,
                 junction_R=None, junction_refine=None, deg=64):
        self.spec = spec
        self.order = spec.order
        self.cut_axial = SmoothStep(2.0 * spec.ell, 3.0 * spec.ell)
        self.cut_end = SmoothStep(1.0 - 2.0 * spec.delta_cut,
                                  1.0 - spec.delta_cut)
        self.deg = deg
        self.graph = {}
        self.correctors = {}
        self.layers = {}
        self.inner = {}
        self.trans = {}
        self.nfields = {}
        self.solvability = {}
        self._junction = junction
        self._junction_R = junction_R
        self._junction_refine = junction_refine
        self._specials = None
        self._build()

    # -- construction ---------------------------------------------------

    @property
    def junction(self):
        if self._junction is None:
            self._junction = TruncatedJunction(
                self.spec, R=self._junction_R, refine=self._junction_refine)
        return self._junction

    def specials(self):
        if self._specials is None:
            tj = self.junction
            self._specials = (solve_special(tj, 1), solve_special(tj, 2))
        return self._specials

    def _germ_depth(self, k):
        return max(4, self.order - k) + 2 * ((self.order - k) // 2)

    def _build(self):
        spec = self.spec
        self.graph[0] = solve_limit(spec, deg=self.deg)
        for k in range(1, self.order + 1):
            if k >= 2:
                prev = self.correctors.get(k - 2)
                self.correctors[k] = tuple(
                    build_corrector(spec, i, k, self.graph[k - 2].edges[i],
                                    prev=None if prev is None else prev[i],
                                    jmax=self._germ_depth(k))
                    for i in range(3))
            data = build_inner_rhs(spec, k, self._omega_taylor(),
                                   self._corrector_germs())
            self.inner[k] = data
            defect = check_solvability(spec, data)
            self.solvability[k] = defect
            if abs(defect) > 1e-8 * self._data_scale(k):
                raise RecurrenceError(
                    f"order-{k} junction data violate the flux balance by "
                    f"{defect:.3e}; the recurrence state is inconsistent")
            dstar = compute_dstar(spec, k)
            jumps = compute_delta(self.junction, data, self.specials())
            trans = TransmissionData(delta2=float(jumps[0]),
                                     delta3=float(jumps[1]), dstar=dstar)
            self.trans[k] = trans
            rhs = [corrector_rhs(spec, i, k,
                                 self.correctors.get(k, (None,) * 3)[i])
                   for i in range(3)]
            self.graph[k] = solve_omega_k(spec, rhs, trans, deg=self.deg)
            nhat = solve_decaying(self.junction, data)
            self.nfields[k] = nhat.with_growth(
                data.growth, constant=self.graph[k].edges[0].vertex_value)
            if k >= 2:
                self.layers[k] = tuple(
                    build_pi(spec, i, self.correctors[k][i],
                             omega=self.graph[k].edges[i])
                    for i in range(3))

    def _data_scale(self, k):
        scale = 1.0
        for i in range(3):
            g = self.inner[k].growth[i]
            scale = max(scale, float(np.max(np.abs(g.coeffs))))
        return scale

    def _omega_taylor(self):
        return [
            {m: gf.edges[i].germ().coef for m, gf in self.graph.items()}
            for i in range(3)]

    def _corrector_germs(self):
        return [
            {m: corr[i].germ for m, corr in self.correctors.items()}
            for i in range(3)]

    # -- point classification --------------------------------------------

    def _split(self, pts, epsilon):
        """Tube membership per point: edge index or -1 for the bulge."""
        lim = epsilon * self.spec.ell
        edge = np.argmax(pts, axis=1)
        peak = pts[np.arange(len(pts)), edge]
        edge = np.where(peak > lim, edge, -1)
        return edge

    # -- partial sum -----------------------------------------------------

    def evaluate(self, points, epsilon, m=None, gradient=False):
        """Glued partial sum of order m (and gradient) at physical points."""
        pts = np.asarray(points, dtype=float)
        eps = float(epsilon)
        m = self.order if m is None else int(m)
        if m > self.order:
            raise ValueError("partial sum order exceeds the built order")
        alpha = self.spec.alpha
        n = len(pts)
        vals = np.zeros(n)
        grads = np.zeros((n, 3)) if gradient else None

        edge = self._split(pts, eps)
        weight = np.ones(n)
        wslope = np.zeros(n)

        for i in range(3):
            sel = np.flatnonzero(edge == i)
            if sel.size == 0:
                continue
            a, b = TRANSVERSE_AXES[i]
            x = pts[sel, i]
            ta, tb = pts[sel, a] / eps, pts[sel, b] / eps
            zeta = x / eps ** alpha
            chi = self.cut_axial(zeta)
            dchi = self.cut_axial.deriv(zeta)
            weight[sel] = 1.0 - chi
            wslope[sel] = -dchi * eps ** (-alpha)
            chid = self.cut_end(x)
            dchid = self.cut_end.deriv(x)

            for k in range(0, m + 1):
                ek = eps ** k
                w = self.graph[k].edges[i]
                core = w.value(x)
                corr = self.correctors.get(k)
                corr = corr[i] if corr is not None else None
                if corr is not None:
                    core = core + corr.values(x, ta, tb)
                vals[sel] += ek * chi * core
                if gradient:
                    d_ax = w.d1(x)
                    if corr is not None:
                        d_ax = d_ax + corr.values(x, ta, tb, xderiv=1)
                        ga, gb = corr.transverse_gradient(x, ta, tb)
                        grads[sel, a] += ek * chi * ga / eps
                        grads[sel, b] += ek * chi * gb / eps
                    grads[sel, i] += ek * (eps ** (-alpha) * dchi * core
                                           + chi * d_ax)
                layer = self.layers.get(k)
                if layer is not None and not layer[i].is_zero:
                    s = (1.0 - x) / eps
                    lv = layer[i].values(s, ta, tb)
                    vals[sel] += ek * chid * lv
                    if gradient:
                        ds, ga, gb = layer[i].gradient(s, ta, tb)
                        grads[sel, i] += ek * (dchid * lv - chid * ds / eps)
                        grads[sel, a] += ek * chid * ga / eps
                        grads[sel, b] += ek * chid * gb / eps

        live = np.flatnonzero(weight > 0.0)
        if live.size:
            xi = pts[live] / eps
            base = self.graph[0].edges[0].vertex_value
            vals[live] += weight[live] * base
            if gradient:
                tube_live = edge[live] >= 0
                rows = live[tube_live]
                grads[rows, edge[rows]] += wslope[rows] * base
            for k in range(1, m + 1):
                ek = eps ** k
                if gradient:
                    nv, ng = self.nfields[k].evaluate(xi, gradient=True)
                    grads[live] += ek * weight[live, None] * ng / eps
                    rows = live[tube_live]
                    grads[rows, edge[rows]] += (ek * wslope[rows]
                                                * nv[tube_live])
                else:
                    nv = self.nfields[k].evaluate(xi)
                vals[live] += ek * weight[live] * nv
        return (vals, grads) if gradient else vals

    # -- interior residual terms ------------------------------------------

    def residual_terms(self, points, epsilon, m=None, which=None):
        """Sampled interior residual contributions, keyed 1..7.

        1: uncancelled axial curvature of the two top tube orders.
        2: junction-matching commutator (axial cutoff band).
        3: end-layer commutator (end cutoff band).
        4: transverse Taylor remainder of the source in the tubes.
        5: full Taylor remainder of the source in the bulge zone.
        6, 7: vertex Taylor remainders of the tube terms hit by cutoff
        derivatives (first and second order).
        """
        pts = np.asarray(points, dtype=float)
        eps = float(epsilon)
        m = self.order if m is None else int(m)
        which = tuple(range(1, 8)) if which is None else tuple(which)
        alpha = self.spec.alpha
        out = {j: np.zeros(len(pts)) for j in which}
        edge = self._split(pts, eps)

        for i in range(3):
            sel = np.flatnonzero(edge == i)
            if sel.size == 0:
                continue
            a, b = TRANSVERSE_AXES[i]
            x = pts[sel, i]
            ta, tb = pts[sel, a] / eps, pts[sel, b] / eps
            zeta = x / eps ** alpha
            chi = self.cut_axial(zeta)
            dchi = self.cut_axial.deriv(zeta)
            d2chi = self.cut_axial.deriv2(zeta)

            if 1 in which:
                acc = np.zeros(sel.size)
                for k in range(max(m - 1, 0), m + 1):
                    term = self.graph[k].edges[i].d2(x)
                    corr = self.correctors.get(k)
                    if corr is not None:
                        term = term + corr[i].values(x, ta, tb, xderiv=2)
                    acc += eps ** k * term
                out[1][sel] += chi * acc

            if 2 in which:
                self._matching_commutator(out[2], sel, i, x, ta, tb, eps,
                                          m, dchi, d2chi)

            if 3 in which:
                chid = self.cut_end(x)
                dchid = self.cut_end.deriv(x)
                d2chid = self.cut_end.deriv2(x)
                band = (dchid != 0.0) | (d2chid != 0.0)
                if band.any():
                    s = (1.0 - x[band]) / eps
                    acc = np.zeros(band.sum())
                    for k in range(2, m + 1):
                        lay = self.layers[k][i]
                        if lay.is_zero:
                            continue
                        ds, _, _ = lay.gradient(s, ta[band], tb[band])
                        lv = lay.values(s, ta[band], tb[band])
                        acc += eps ** k * (-2.0 / eps * dchid[band] * ds
                                           + d2chid[band] * lv)
                    out[3][sel[band]] += acc

            if 4 in which:
                fref = self.spec.f(pts[sel, 0], pts[sel, 1], pts[sel, 2])
                taylor = np.zeros(sel.size)
                for q in range(0, m - 1):
                    sl = self.spec.f.transverse_taylor(i, q)
                    taylor += eps ** q * sl(x, ta, tb)
                out[4][sel] += chi * (fref - taylor)

            if 6 in which or 7 in which:
                band = (dchi != 0.0) | (d2chi != 0.0)
                if band.any():
                    r6, r7 = self._vertex_remainders(
                        i, x[band], ta[band], tb[band], eps, m)
                    if 6 in which:
                        out[6][sel[band]] += (2.0 * eps ** (-alpha)
                                              * dchi[band] * r6)
                    if 7 in which:
                        out[7][sel[band]] += (eps ** (-2.0 * alpha)
                                              * d2chi[band] * r7)

        if 5 in which:
            weight = np.ones(len(pts))
            tube = edge >= 0
            if tube.any():
                zeta = pts[tube, :][np.arange(tube.sum()), edge[tube]] \
                    / eps ** alpha
                weight[tube] = 1.0 - self.cut_axial(zeta)
            live = weight > 0
            if live.any():
                p = pts[live]
                fv = self.spec.f(p[:, 0], p[:, 1], p[:, 2])
                trunc = self.spec.f.poly.total_degree_truncate(m - 2)
                out[5][live] += weight[live] * (fv - trunc(p[:, 0], p[:, 1],
                                                           p[:, 2]))
        return out

    def _matching_commutator(self, target, sel, i, x, ta, tb, eps, m,
                             dchi, d2chi):
        band = (dchi != 0.0) | (d2chi != 0.0)
        if not band.any():
            return
        alpha = self.spec.alpha
        rows = sel[band]
        xi_ax = x[band] / eps
        pts_xi = np.zeros((band.sum(), 3))
        pts_xi[:, i] = xi_ax
        a, b = TRANSVERSE_AXES[i]
        pts_xi[:, a] = ta[band]
        pts_xi[:, b] = tb[band]
        step = self.junction.step
        chi_j = step(xi_ax)
        dchi_j = step.deriv(xi_ax)
        loc = self.junction.ctx.locator()
        for k in range(1, m + 1):
            nf = self.nfields[k]
            dec, dgrad = loc.evaluate(nf.decay, pts_xi, gradient=True)
            delta = self.trans[k].jumps[i]
            g = self.inner[k].growth[i]
            psi = g.value(xi_ax, ta[band], tb[band])
            dpsi = g.axial_slope(xi_ax, ta[band], tb[band])
            val = dec - delta + (chi_j - 1.0) * psi
            dval = dgrad[:, i] + dchi_j * psi + (chi_j - 1.0) * dpsi
            target[rows] += eps ** k * (
                -2.0 * eps ** (-1.0 - alpha) * dchi[band] * dval
                - eps ** (-2.0 * alpha) * d2chi[band] * val)

    def _vertex_remainders(self, i, x, ta, tb, eps, m):
        """Taylor remainders of the tube terms about the vertex."""
        valid = self.spec.h[i].plateau0
        if x.size and float(x.max()) > valid + 1e-12:
            raise RecurrenceError(
                "cutoff band leaves the constant-radius stretch; vertex "
                "Taylor data are not valid there")
        r6 = np.zeros(x.size)
        r7 = np.zeros(x.size)
        for k in range(0, m + 1):
            depth = m - k
            w = self.graph[k].edges[i]
            core = w.value(x)
            dcore = w.d1(x)
            tay = np.zeros(x.size)
            dtay = np.zeros(x.size)
            wg = w.germ().coef
            for j in range(min(depth, len(wg) - 1) + 1):
                tay += wg[j] * x ** j
                if j >= 1:
                    dtay += j * wg[j] * x ** (j - 1)
            corr = self.correctors.get(k)
            if corr is not None:
                c = corr[i]
                core = core + c.values(x, ta, tb)
                dcore = dcore + c.values(x, ta, tb, xderiv=1)
                for j in range(min(depth, len(c.germ) - 1) + 1):
                    gv = c.germ[j].evaluate(ta, tb)
                    tay += gv * x ** j
                    if j >= 1:
                        dtay += j * gv * x ** (j - 1)
            r6 += eps ** k * (dcore - dtay)
            r7 += eps ** k * (core - tay)
        return r6, r7

    # -- boundary residual -------------------------------------------------

    def wall_residual(self, edge, x, theta, epsilon, m=None):
        """Lateral defect (inward flux minus load) on one tube wall.

        Points are given by axial position and angle; returns the defect
        of the partial sum against the prescribed lateral load.
        """
        eps = float(epsilon)
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        h = self.spec.h[edge]
        hx = h(x)
        dh = h.deriv(x)
        a, b = TRANSVERSE_AXES[edge]
        pts = np.zeros((x.size, 3))
        pts[:, edge] = x
        pts[:, a] = eps * hx * np.cos(theta)
        pts[:, b] = eps * hx * np.sin(theta)
        _, grads = self.evaluate(pts, eps, m=m, gradient=True)
        norm = np.sqrt(1.0 + (eps * dh) ** 2)
        nu = np.zeros((x.size, 3))
        nu[:, edge] = -eps * dh / norm
        nu[:, a] = np.cos(theta) / norm
        nu[:, b] = np.sin(theta) / norm
        flux = -(grads * nu).sum(axis=1)
        load = eps * self.spec.phi[edge](x, hx * np.cos(theta),
                                         hx * np.sin(theta))
        return flux - load
