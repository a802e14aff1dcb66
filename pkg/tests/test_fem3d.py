"""Finite element layer: quadrature, solves, evaluation, fluxes."""

import numpy as np
import pytest

from thinjunction import build_tube_mesh
from thinjunction.fem3d import (
    FemContext,
    galerkin_residual,
    norms,
    region_mask,
    slab_flux,
    solve_poisson,
    station_average,
    station_profile,
)


@pytest.fixture(scope="module")
def tube():
    return build_tube_mesh(radius=0.5, length=1.0, axial=0.125)


@pytest.fixture(scope="module")
def ctx(tube):
    return FemContext(tube)


def linear_field(pts):
    return 1.0 + 2.0 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 2]


LINEAR_GRAD = np.array([2.0, -1.0, 0.5])


class TestQuadrature:
    def test_weights_sum_to_volume(self, ctx):
        for degree in (1, 2):
            _, wts, _ = ctx.quad_points(degree)
            assert wts.sum() == pytest.approx(ctx.mesh.volume(), rel=1e-12)

    def test_volume_load_of_one_integrates_to_volume(self, ctx):
        b = ctx.volume_load(lambda pts: np.ones(pts.shape[0]))
        assert b.sum() == pytest.approx(ctx.mesh.volume(), rel=1e-12)

    def test_volume_load_linear_exact(self, ctx, tube):
        # cross-sections are centred, so the axial moment is A * L^2 / 2
        b = ctx.volume_load(lambda pts: pts[:, 0])
        area = tube.boundary_area("end_a")
        assert b.sum() == pytest.approx(area * 0.5, rel=1e-12)

    def test_surface_load_constant_gives_area(self, ctx, tube):
        b = ctx.surface_load("end_b", lambda pts: np.ones(pts.shape[0]))
        assert b.sum() == pytest.approx(tube.boundary_area("end_b"),
                                        rel=1e-12)

    def test_surface_load_odd_moment_vanishes(self, ctx):
        b = ctx.surface_load("end_a", lambda pts: pts[:, 1])
        assert abs(b.sum()) < 1e-13


class TestSolves:
    def test_linear_patch_exact(self, ctx, tube):
        dirichlet = {tag: linear_field for tag in tube.boundary}
        u, info = solve_poisson(ctx, dirichlet=dirichlet)
        exact = linear_field(tube.nodes)
        assert np.abs(u - exact).max() < 1e-8

    def test_axial_quadratic_convergence(self):
        # u = x^2 depends on the axial coordinate only, so the polygonal
        # cross-section is not a geometry error and the rate is clean
        errs = []
        for axial in (0.2, 0.1):
            mesh = build_tube_mesh(radius=0.4, length=1.0, axial=axial)
            c = FemContext(mesh)
            u, _ = solve_poisson(
                c,
                volume=lambda pts: -2.0 * np.ones(pts.shape[0]),
                dirichlet={"end_a": 0.0,
                           "end_b": lambda pts: pts[:, 0] ** 2},
            )

            def ref(pts):
                g = np.zeros_like(pts)
                g[:, 0] = 2.0 * pts[:, 0]
                return pts[:, 0] ** 2, g

            l2, _, _ = norms(c, u, reference=ref)
            errs.append(l2)
        rate = np.log2(errs[0] / errs[1])
        assert 1.6 < rate < 2.4

    def test_pure_neumann_axial_profile(self, ctx, tube):
        # -u'' = x - 1/2 with zero end flux has the cubic solution below
        u, info = solve_poisson(
            ctx, volume=lambda pts: pts[:, 0] - 0.5)
        assert abs(info["load_defect"]) < 1e-10

        def ref(pts):
            x = pts[:, 0]
            vals = -x ** 3 / 6.0 + x ** 2 / 4.0 - 1.0 / 24.0
            g = np.zeros_like(pts)
            g[:, 0] = -x ** 2 / 2.0 + x / 2.0
            return vals, g

        l2, _, h1 = norms(ctx, u, reference=ref)
        l2_scale, _, h1_scale = norms(ctx, u)
        assert l2 / l2_scale < 0.02
        assert h1 / h1_scale < 0.15  # first-order gradient accuracy

    def test_pure_neumann_solution_mean_zero(self, ctx):
        u, _ = solve_poisson(ctx, volume=lambda pts: pts[:, 0] - 0.5)
        # the compatible solve pins the nodal mean of the vector
        assert abs(u.mean()) < 1e-12
        weights = ctx.volume_load(lambda pts: np.ones(pts.shape[0]))
        assert abs(weights @ u) < 1e-4 * ctx.mesh.volume()

    def test_galerkin_residual_small(self, ctx):
        b = ctx.volume_load(lambda pts: pts[:, 0] - 0.5)
        u, _ = solve_poisson(ctx, load=b)
        res = galerkin_residual(ctx, u, b)
        assert res < 1e-8 * max(1.0, float(np.linalg.norm(b)))

    def test_incompatible_neumann_reported(self, ctx):
        u, info = solve_poisson(
            ctx, volume=lambda pts: np.ones(pts.shape[0]))
        assert abs(info["load_defect"]) > 0.1

    def test_missing_dirichlet_tag_rejected(self, ctx):
        with pytest.raises(KeyError):
            solve_poisson(ctx, dirichlet={"no_such_tag": 0.0})


class TestEvaluation:
    def test_locator_reproduces_linear_field(self, ctx, tube):
        u = linear_field(tube.nodes)
        rng = np.random.default_rng(3)
        x = rng.uniform(0.05, 0.95, size=40)
        r = rng.uniform(0.0, 0.35, size=40)
        th = rng.uniform(0.0, 2.0 * np.pi, size=40)
        pts = np.column_stack([x, r * np.cos(th), r * np.sin(th)])
        vals = ctx.locator().evaluate(u, pts)
        assert np.abs(vals - linear_field(pts)).max() < 1e-12

    def test_locator_gradient_of_linear_field(self, ctx, tube):
        u = linear_field(tube.nodes)
        pts = np.array([[0.3, 0.1, -0.05], [0.7, -0.2, 0.1]])
        vals, grads = ctx.locator().evaluate(u, pts, gradient=True)
        assert np.abs(vals - linear_field(pts)).max() < 1e-12
        assert np.abs(grads - LINEAR_GRAD).max() < 1e-12

    def test_locator_flags_outside_points(self, ctx):
        outside = np.array([[2.5, 0.0, 0.0]])
        tet, _ = ctx.locator().locate(outside)
        assert tet[0] == -1
        u = np.zeros(ctx.mesh.num_nodes)
        with pytest.raises(ValueError, match="outside"):
            ctx.locator().evaluate(u, outside)

    def test_station_average_linear_exact(self, ctx, tube):
        u = linear_field(tube.nodes)
        for st in tube.stations[0]:
            got = station_average(tube, u, st)
            assert got == pytest.approx(1.0 + 2.0 * st.x, abs=1e-12)

    def test_station_profile_matches_averages(self, tube):
        u = tube.nodes[:, 0] ** 2
        xs, means = station_profile(tube, u, 0)
        assert xs.shape == means.shape
        assert np.all(np.diff(xs) > 0)
        got = station_average(tube, u, tube.stations[0][3])
        assert means[3] == pytest.approx(got, abs=1e-15)

    def test_slab_flux_linear_exact(self, ctx, tube):
        u = 3.0 * tube.nodes[:, 0]
        area = tube.boundary_area("end_a")
        got = slab_flux(ctx, u, axis=0, lo=0.25, hi=0.75)
        assert got == pytest.approx(3.0 * area, rel=1e-12)

    def test_slab_flux_empty_slab_rejected(self, ctx):
        u = np.zeros(ctx.mesh.num_nodes)
        with pytest.raises(ValueError, match="slab"):
            slab_flux(ctx, u, axis=0, lo=5.0, hi=6.0)

    def test_region_mask_splits_volume(self, ctx, tube):
        mask = region_mask(ctx, lambda c: c[:, 0] < 0.5)
        ones = np.ones(tube.num_nodes)
        l2_half, _, _ = norms(ctx, ones, mask=mask)
        l2_full, _, _ = norms(ctx, ones)
        assert l2_half ** 2 == pytest.approx(0.5 * l2_full ** 2, rel=1e-12)


def test_norms_of_known_field(ctx, tube):
    # u = x has squared L2 norm A/3 and squared seminorm A on this tube
    u = tube.nodes[:, 0]
    area = tube.boundary_area("end_a")
    l2, semi, h1 = norms(ctx, u)
    assert l2 ** 2 == pytest.approx(area / 3.0, rel=1e-12)
    assert semi ** 2 == pytest.approx(area, rel=1e-12)
    assert h1 ** 2 == pytest.approx(l2 ** 2 + semi ** 2, rel=1e-12)
