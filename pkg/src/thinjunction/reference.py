"""Reference finite-element solution on the physical thin domain."""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import TRANSVERSE_AXES, ProblemSpec
from .fem3d import FemContext, norms, region_mask, solve_poisson, \
    station_average
from .mesh3d import build_thin_mesh


def with_epsilon(spec: ProblemSpec, epsilon) -> ProblemSpec:
    """The same problem at a different slenderness."""
    return dataclasses.replace(spec, epsilon=float(epsilon))


class ReferenceSolution:
    """Direct Galerkin solve of the thin-domain problem."""

    def __init__(self, spec, mesh, ctx, u, info):
        self.spec = spec
        self.mesh = mesh
        self.ctx = ctx
        self.u = u
        self.info = info

    @property
    def epsilon(self):
        return self.spec.epsilon

    def observation_interval(self):
        """Axial interval on which tube stations are compared."""
        lo = 3.0 * self.spec.ell * self.epsilon ** self.spec.alpha
        return lo, 1.0

    def station_values(self, edge, interval=None):
        """Axial positions and cross-section means along one tube."""
        lo, hi = interval if interval is not None else (0.0, 1.0)
        xs, means = [], []
        for st in self.mesh.stations[edge]:
            if lo <= st.x <= hi:
                xs.append(st.x)
                means.append(station_average(self.mesh, self.u, st))
        return np.array(xs), np.array(means)

    def tube_mask(self, edge, interval=None):
        """Tetrahedra of one tube, optionally restricted axially."""
        lim = self.epsilon * self.spec.ell

        def pred(c):
            keep = c[:, edge] > lim
            if interval is not None:
                keep &= (c[:, edge] > interval[0]) & (c[:, edge]
                                                      < interval[1])
            return keep

        return region_mask(self.ctx, pred)

    def bulge_mask(self, margin=2.0):
        """Tetrahedra of the junction zone |x_i| < margin * eps * ell."""
        lim = margin * self.epsilon * self.spec.ell
        return region_mask(self.ctx, lambda c: np.max(c, axis=1) < lim)

    def norms_against(self, fn=None, mask=None, degree=2):
        """(L2, H1 semi, H1) of the FEM field minus an analytic field.

        ``fn(points) -> (values, gradients)``; None measures the FEM
        field itself.
        """
        return norms(self.ctx, self.u, reference=fn, mask=mask,
                     degree=degree)

    def domain_measure(self):
        return float(self.ctx.volumes.sum())


def solve_reference(spec: ProblemSpec, axial=None, refine=1.0,
                    rtol=1e-10) -> ReferenceSolution:
    """Solve the thin-domain problem with end constraints and wall load."""
    eps = spec.epsilon
    if axial is None:
        axial = max(0.01, 0.1 * eps)
    mesh = build_thin_mesh(spec, axial=axial, refine=refine)
    ctx = FemContext(mesh)

    def volume(pts):
        return spec.f(pts[:, 0], pts[:, 1], pts[:, 2])

    neumann = {}
    for i in range(3):
        phi = spec.phi[i]
        if phi.is_zero():
            continue
        a, b = TRANSVERSE_AXES[i]

        def flux(pts, phi=phi, i=i, a=a, b=b):
            return -eps * phi(pts[:, i], pts[:, a] / eps, pts[:, b] / eps)

        neumann[f"lateral_{i}"] = flux

    dirichlet = {f"end_{i}": 0.0 for i in range(3)}
    u, info = solve_poisson(ctx, volume=volume, neumann=neumann,
                            dirichlet=dirichlet, rtol=rtol)
    return ReferenceSolution(spec, mesh, ctx, u, info)
