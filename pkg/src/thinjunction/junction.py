"""Solvers on the stretched junction domain.

The junction (box bulge plus three half-infinite outlet tubes) is
truncated at outlet length ``R`` and discretized with linear elements.
Decaying fields are solved with natural end conditions and a
constant-deflated iteration.  The module provides

* the two special harmonic fields with prescribed linear growth, used to
  read off transmission jumps through a bilinear pairing,
* the decaying corrector of one expansion order from its interior and
  wall data,
* the exact flux budget constant entering the vertex balance, and
* a mesh-independent solvability check of the corrector data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TRANSVERSE_AXES, ProblemSpec
from .corrector import DiskPoly
from .cutoffs import SmoothStep
from .fem3d import FemContext, _solve_spd, station_average
from .mesh3d import build_junction_mesh
from .poly import (
    Poly3,
    box_monomial_integral,
    circle_monomial_integral,
    disk_monomial_integral,
)

_GAUSS_N = 16


def _gauss(lo, hi, n=_GAUSS_N):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


@dataclass
class OutletGrowth:
    """Polynomial outlet behaviour sum_j t^j (c_j + d_j(transverse)).

    ``t`` is the outlet's axial coordinate, ``coeffs[j]`` the scalar part
    and ``disks[j]`` an optional cross-section polynomial.
    """

    edge: int
    coeffs: np.ndarray
    disks: tuple = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.disks is None:
            self.disks = (None,) * len(self.coeffs)
        if len(self.disks) != len(self.coeffs):
            raise ValueError("one disk slot per power")

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def value(self, ax, ta, tb):
        ax = np.asarray(ax, dtype=float)
        out = np.zeros_like(ax)
        for j in range(len(self.coeffs) - 1, -1, -1):
            term = np.full_like(ax, self.coeffs[j])
            if self.disks[j] is not None:
                term = term + self.disks[j].evaluate(ta, tb)
            out = out * ax + term
        return out

    def axial_slope(self, ax, ta, tb):
        ax = np.asarray(ax, dtype=float)
        out = np.zeros_like(ax)
        for j in range(len(self.coeffs) - 1, 0, -1):
            term = np.full_like(ax, j * self.coeffs[j])
            if self.disks[j] is not None:
                term = term + j * self.disks[j].evaluate(ta, tb)
            out = out * ax + term
        return out

    def transverse_gradient(self, ax, ta, tb):
        ax = np.asarray(ax, dtype=float)
        ga = np.zeros_like(ax)
        gb = np.zeros_like(ax)
        for j, d in enumerate(self.disks):
            if d is None:
                continue
            da, db = d.gradient(ta, tb)
            ga += ax ** j * da
            gb += ax ** j * db
        return ga, gb

    def cross_integrals(self, radius):
        """Disk integral of each power's cross-section profile."""
        area = math.pi * radius * radius
        out = []
        for c, d in zip(self.coeffs, self.disks):
            v = c * area
            if d is not None:
                v += d.mean_integral(radius)
            out.append(v)
        return np.array(out)


@dataclass
class InnerData:
    """Interior and wall data of one corrector order on the junction."""

    k: int
    growth: tuple
    fpart: Poly3 = None
    walls: tuple = (None, None, None)

    def has_walls(self):
        return any(w is not None for w in self.walls)


def build_inner_rhs(spec: ProblemSpec, k, omega_taylor, corrector_germs):
    """Corrector data of order k from the lower-order expansion state.

    ``omega_taylor[i][m]`` holds the Taylor coefficients at the vertex of
    the order-m axis profile on edge i (coefficient j multiplies x^j);
    ``corrector_germs[i][m]`` holds the vertex Taylor coefficients of the
    order-m cross-section corrector as DiskPoly entries per axial power.
    Only orders m < k (profiles) and m <= k (correctors) are read.
    """

    if k < 1:
        raise ValueError("corrector orders start at k = 1")
    growth = []
    for i in range(3):
        coeffs = np.zeros(k + 1)
        disks = [None] * (k + 1)
        for j in range(1, k + 1):
            tay = omega_taylor[i][k - j]
            if tay is not None and len(tay) > j:
                coeffs[j] = tay[j]
        for j in range(0, k - 1):
            germ = corrector_germs[i].get(k - j) if corrector_germs else None
            if germ is not None and j < len(germ) and germ[j] is not None:
                disks[j] = germ[j]
        growth.append(OutletGrowth(i, coeffs, tuple(disks)))

    fpart = None
    if k >= 2:
        part = spec.f.poly.total_degree_part(k - 2)
        if part.terms():
            fpart = part

    walls = []
    for i in range(3):
        ld = spec.phi[i]
        if k < 2 or ld.is_zero():
            walls.append(None)
            continue
        base = ld.x_deriv(k - 2).poly
        terms = [((k - 2, pa, pb), c / math.factorial(k - 2))
                 for (px, pa, pb), c in base.terms() if px == 0]
        walls.append(Poly3.from_terms(terms) if terms else None)
    return InnerData(k=k, growth=tuple(growth), fpart=fpart,
                     walls=tuple(walls))


def check_solvability(spec: ProblemSpec, data: InnerData):
    """Net flux defect of the corrector data over the unbounded junction.

    Computed with exact cross-section integrals and band quadrature, so
    the result is independent of any mesh.  A well-posed decaying
    corrector requires a zero defect.
    """

    step = SmoothStep(spec.ell + 1.0, spec.ell + 2.0)
    lo, hi = step.support
    xg, wg = _gauss(lo, hi)
    dchi = step.deriv(xg)
    total = 0.0
    for i in range(3):
        g = data.growth[i]
        if g is None:
            continue
        cross = g.cross_integrals(spec.h0(i))
        for j in range(1, len(cross)):
            if cross[j] == 0.0:
                continue
            total += j * float(np.sum(wg * xg ** (j - 1) * dchi)) * cross[j]

    if data.fpart is not None:
        total += _box_integral(data.fpart, spec.aneurysm.ell)
        for i in range(3):
            prof = _disk_profile(data.fpart, i, spec.h0(i))
            total += _outlet_integral(prof, spec.ell, step)

    for i in range(3):
        wall = data.walls[i]
        if wall is None:
            continue
        prof = _circle_profile(wall, spec.h0(i))
        total -= _outlet_integral(prof, spec.ell, step)
    return total


def _box_integral(p: Poly3, ell):
    return sum(c * box_monomial_integral(pw, ell) for pw, c in p.terms())


def _disk_profile(p: Poly3, edge, radius):
    """1-D polynomial in the outlet axis after disk integration."""
    coeffs = {}
    for (p0, p1, p2), c in p.terms():
        pw = (p0, p1, p2)
        pax = pw[edge]
        a, b = TRANSVERSE_AXES[edge]
        val = c * disk_monomial_integral(pw[a], pw[b], radius)
        if val != 0.0:
            coeffs[pax] = coeffs.get(pax, 0.0) + val
    return coeffs


def _circle_profile(p: Poly3, radius):
    coeffs = {}
    for (px, pa, pb), c in p.terms():
        val = c * circle_monomial_integral(pa, pb, radius)
        if val != 0.0:
            coeffs[px] = coeffs.get(px, 0.0) + val
    return coeffs


def _outlet_integral(profile, ell, step):
    """int over (ell, inf) of (1 - chi) times a power profile."""
    lo, hi = step.support
    total = 0.0
    xg1, wg1 = _gauss(ell, lo)
    xg2, wg2 = _gauss(lo, hi)
    fall = 1.0 - step(xg2)
    for pw, c in profile.items():
        total += c * float(np.sum(wg1 * xg1 ** pw))
        total += c * float(np.sum(wg2 * fall * xg2 ** pw))
    return total


class TruncatedJunction:
    """Finite-element model of the junction truncated at outlet length R."""

    def __init__(self, spec: ProblemSpec, R=None, refine=None):
        self.spec = spec
        self.mesh = build_junction_mesh(spec, R=R, refine=refine)
        self.ctx = FemContext(self.mesh)
        self.R = float(self.mesh.meta["R"])
        self.ell = spec.ell
        self.radii = tuple(spec.h0(i) for i in range(3))
        self.step = SmoothStep(spec.ell + 1.0, spec.ell + 2.0)

    def chunked_tets(self, block=120_000):
        for start in range(0, self.mesh.num_tets, block):
            yield slice(start, min(start + block, self.mesh.num_tets))


def _source_values(junction: TruncatedJunction, data: InnerData, pts):
    """Interior data evaluated at points of the truncated junction."""
    step = junction.step
    lo, hi = step.support
    out = np.zeros(len(pts))
    chi_sum = np.zeros(len(pts))
    for i in range(3):
        ax = pts[:, i]
        chi_sum += step(ax)
        g = data.growth[i]
        if g is None or (np.all(g.coeffs == 0.0)
                         and all(d is None for d in g.disks)):
            continue
        band = (ax > lo) & (ax < hi)
        if not band.any():
            continue
        a, b = TRANSVERSE_AXES[i]
        axb, ta, tb = ax[band], pts[band, a], pts[band, b]
        out[band] += (g.value(axb, ta, tb) * step.deriv2(axb)
                      + 2.0 * g.axial_slope(axb, ta, tb) * step.deriv(axb))
    if data.fpart is not None:
        out += (1.0 - chi_sum) * data.fpart(pts[:, 0], pts[:, 1], pts[:, 2])
    return out


def assemble_load(junction: TruncatedJunction, data: InnerData, degree=5):
    """Weak-form load vector of one corrector order."""
    ctx = junction.ctx
    mesh = junction.mesh
    from .fem3d import _TET_RULES

    bary, w = _TET_RULES[degree]
    b = np.zeros(mesh.num_nodes)
    coords = mesh.nodes[mesh.tets]
    for sl in junction.chunked_tets():
        pts = np.einsum("qa,tad->tqd", bary, coords[sl])
        wts = np.outer(ctx.volumes[sl], w)
        vals = _source_values(junction, data,
                              pts.reshape(-1, 3)).reshape(wts.shape)
        contrib = np.einsum("tq,qa->ta", wts * vals, bary)
        np.add.at(b, mesh.tets[sl].astype(np.int64), contrib)

    for i in range(3):
        wall = data.walls[i]
        if wall is None:
            continue
        tris, spts, swts, sbary = ctx.surface_quad(f"lateral_{i}", degree=4)
        flat = spts.reshape(-1, 3)
        fall = 1.0 - junction.step(flat[:, i])
        a, bb = TRANSVERSE_AXES[i]
        tr = wall(flat[:, i], flat[:, a], flat[:, bb])
        vals = (fall * tr).reshape(swts.shape)
        contrib = np.einsum("fq,qa->fa", swts * vals, sbary)
        np.subtract.at(b, tris.astype(np.int64), contrib)
    return b


class JunctionField:
    """A solved junction field: decaying nodal part plus analytic growth."""

    def __init__(self, junction: TruncatedJunction, decay, growth=None,
                 constant=0.0, info=None, load_defect=0.0):
        self.junction = junction
        self.decay = decay
        self.growth = growth if growth is not None else (None, None, None)
        self.constant = float(constant)
        self.info = info or {}
        self.load_defect = float(load_defect)
        self._total = None

    def with_growth(self, growth, constant=0.0):
        return JunctionField(self.junction, self.decay, growth=growth,
                             constant=constant, info=self.info,
                             load_defect=self.load_defect)

    def _growth_at(self, pts):
        step = self.junction.step
        out = np.zeros(len(pts))
        for i in range(3):
            g = self.growth[i]
            if g is None:
                continue
            ax = pts[:, i]
            live = ax > step.lo
            if not live.any():
                continue
            a, b = TRANSVERSE_AXES[i]
            out[live] += step(ax[live]) * g.value(ax[live], pts[live, a],
                                                  pts[live, b])
        return out

    def nodal_total(self):
        if self._total is None:
            self._total = (self.decay + self.constant
                           + self._growth_at(self.junction.mesh.nodes))
        return self._total

    def station_means(self, edge):
        mesh = self.junction.mesh
        total = self.nodal_total()
        xs, means = [], []
        for st in mesh.stations[edge]:
            xs.append(st.x)
            means.append(station_average(mesh, total, st))
        return np.array(xs), np.array(means)

    def plateau(self, edge, window=1.5):
        xs, means = self.station_means(edge)
        keep = xs >= self.junction.R - window
        return float(means[keep].mean())

    def far_slope(self, edge, start=None):
        xs, means = self.station_means(edge)
        if start is None:
            start = self.junction.ell + 2.5
        keep = xs >= start
        fit = np.polyfit(xs[keep], means[keep], 1)
        return float(fit[0])

    def end_average(self, edge):
        mesh = self.junction.mesh
        return station_average(mesh, self.nodal_total(),
                               mesh.stations[edge][-1])

    def evaluate(self, points, gradient=False):
        points = np.asarray(points, dtype=float)
        loc = self.junction.ctx.locator()
        if gradient:
            vals, grads = loc.evaluate(self.decay, points, gradient=True)
            grads = grads.copy()
        else:
            vals = loc.evaluate(self.decay, points)
        vals = vals + self.constant
        step = self.junction.step
        for i in range(3):
            g = self.growth[i]
            if g is None:
                continue
            ax = points[:, i]
            live = ax > step.lo
            if not live.any():
                continue
            a, b = TRANSVERSE_AXES[i]
            axl, ta, tb = ax[live], points[live, a], points[live, b]
            chi = step(axl)
            gval = g.value(axl, ta, tb)
            vals[live] += chi * gval
            if gradient:
                grads[live, i] += (step.deriv(axl) * gval
                                   + chi * g.axial_slope(axl, ta, tb))
                ga, gb = g.transverse_gradient(axl, ta, tb)
                grads[live, a] += chi * ga
                grads[live, b] += chi * gb
        return (vals, grads) if gradient else vals


def solve_decaying(junction: TruncatedJunction, data: InnerData, rtol=1e-10):
    """Decaying corrector field, zeroed on the first outlet's end disk."""
    b = assemble_load(junction, data)
    u, info = _solve_spd(junction.ctx.matrix, b, rtol=rtol, deflate=True)
    defect = float(b.sum())
    shift = station_average(junction.mesh, u, junction.mesh.stations[0][-1])
    return JunctionField(junction, u - shift, info=info, load_defect=defect)


def solve_special(junction: TruncatedJunction, edge, rtol=1e-10):
    """Harmonic field draining outlet ``edge`` into outlet 0.

    Grows like -t/(pi r_0^2) along outlet 0 and +t/(pi r_edge^2) along
    the given outlet, normalized to vanish at the first outlet's end.
    Attaches far-field slope and flux-balance diagnostics.
    """

    if edge not in (1, 2):
        raise ValueError("special fields pair outlet 0 with outlet 1 or 2")
    r0, re = junction.radii[0], junction.radii[edge]
    growth = [None, None, None]
    growth[0] = OutletGrowth(0, [0.0, -1.0 / (math.pi * r0 * r0)])
    growth[edge] = OutletGrowth(edge, [0.0, 1.0 / (math.pi * re * re)])
    data = InnerData(k=0, growth=tuple(growth))
    b = assemble_load(junction, data)
    u, info = _solve_spd(junction.ctx.matrix, b, rtol=rtol, deflate=True)
    tilde = JunctionField(junction, u, info=info, load_defect=float(b.sum()))
    shift = tilde.plateau(0)
    fld = JunctionField(junction, u - shift, growth=tuple(growth),
                        info=info, load_defect=float(b.sum()))
    fld.info = dict(info)
    fld.info["slopes"] = [fld.far_slope(i) for i in range(3)]
    fld.info["plateaus"] = [
        JunctionField(junction, u - shift).plateau(i) for i in range(3)]
    return fld


def compute_delta(junction: TruncatedJunction, data: InnerData, specials):
    """Transmission jumps of one corrector order via the bilinear pairing.

    ``specials`` are the two fields from :func:`solve_special` (edges 1
    and 2).  Returns the jumps on outlets 1 and 2 relative to outlet 0.
    """

    from .fem3d import _TET_RULES

    ctx = junction.ctx
    mesh = junction.mesh
    bary, w = _TET_RULES[5]
    coords = mesh.nodes[mesh.tets]
    totals = [s.nodal_total() for s in specials]
    acc = np.zeros(len(specials))
    for sl in junction.chunked_tets():
        pts = np.einsum("qa,tad->tqd", bary, coords[sl])
        wts = np.outer(ctx.volumes[sl], w)
        src = _source_values(junction, data,
                             pts.reshape(-1, 3)).reshape(wts.shape)
        for s_idx, tot in enumerate(totals):
            nv = np.einsum("ta,qa->tq", tot[mesh.tets[sl].astype(np.int64)],
                           bary)
            acc[s_idx] += float(np.sum(wts * src * nv))

    for i in range(3):
        wall = data.walls[i]
        if wall is None:
            continue
        tris, spts, swts, sbary = ctx.surface_quad(f"lateral_{i}", degree=4)
        flat = spts.reshape(-1, 3)
        fall = 1.0 - junction.step(flat[:, i])
        a, bb = TRANSVERSE_AXES[i]
        tr = (fall * wall(flat[:, i], flat[:, a], flat[:, bb])).reshape(
            swts.shape)
        for s_idx, tot in enumerate(totals):
            nv = np.einsum("fa,qa->fq", tot[tris.astype(np.int64)], sbary)
            acc[s_idx] -= float(np.sum(swts * tr * nv))
    return acc


def compute_dstar(spec: ProblemSpec, k):
    """Exact flux budget constant of order k for the vertex balance."""
    if k < 0:
        raise ValueError("order must be >= 0")
    if k == 0:
        return 0.0
    total = 0.0
    for i in range(3):
        r = spec.h0(i)
        for j in range(1, k + 1):
            sl = spec.f.transverse_taylor(i, k - j).deriv(0, j - 1)
            val = sum(c * disk_monomial_integral(pa, pb, r)
                      for (px, pa, pb), c in sl.terms() if px == 0)
            total += spec.ell ** j / math.factorial(j) * val
        if not spec.phi[i].is_zero():
            dphi = spec.phi[i].x_deriv(k - 1).poly
            val = sum(c * circle_monomial_integral(pa, pb, r)
                      for (px, pa, pb), c in dphi.terms() if px == 0)
            total -= spec.ell ** k / math.factorial(k) * val
    fpart = spec.f.poly.total_degree_part(k - 1)
    if fpart.terms():
        total -= _box_integral(fpart, spec.aneurysm.ell)
    return total
