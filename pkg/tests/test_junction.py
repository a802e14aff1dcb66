"""Junction correctors: flux budgets, special fields, transmission jumps."""

import math

import numpy as np
import pytest

from thinjunction import (
    build_inner_rhs,
    check_solvability,
    compute_delta,
    compute_dstar,
    solve_decaying,
    solve_limit,
    solve_special,
)
from thinjunction.junction import InnerData, OutletGrowth, assemble_load
from thinjunction.poly import Poly3
from thinjunction.corrector import DiskPoly


def order_one_data(spec):
    gf = solve_limit(spec)
    taylor = [{0: gf.edges[i].germ().coef} for i in range(3)]
    germs = [{}, {}, {}]
    return build_inner_rhs(spec, 1, taylor, germs), taylor, germs


class TestFluxBudget:
    def test_dstar_order_zero_vanishes(self, flat_spec):
        assert compute_dstar(flat_spec, 0) == 0.0

    def test_dstar_order_one_flat_source(self, flat_spec):
        # per outlet ell * (disk area), minus the box volume of the bulge
        want = 3.0 * 0.3 * math.pi * 0.0625 - 0.6 ** 3
        assert compute_dstar(flat_spec, 1) == pytest.approx(want,
                                                            abs=1e-14)

    def test_dstar_negative_order_rejected(self, flat_spec):
        with pytest.raises(ValueError):
            compute_dstar(flat_spec, -1)

    def test_solvability_defect_machine_zero(self, exp_fx, exp_rich):
        for exp in (exp_fx, exp_rich):
            for k, defect in exp.solvability.items():
                assert abs(defect) < 1e-12, (exp.spec.f, k)

    def test_kirchhoff_perturbation_shifts_defect(self, flat_spec):
        data, taylor, germs = order_one_data(flat_spec)
        base = check_solvability(flat_spec, data)
        assert abs(base) < 1e-12

        bumped = [dict(t) for t in taylor]
        coef = np.array(bumped[1][0], dtype=float)
        coef[1] += 0.1
        bumped[1][0] = coef
        data2 = build_inner_rhs(flat_spec, 1, bumped, germs)
        shift = check_solvability(flat_spec, data2) - base
        want = 0.1 * math.pi * flat_spec.h0(1) ** 2
        assert abs(shift) == pytest.approx(want, rel=1e-9)


class TestOutletGrowth:
    def test_value_and_slope(self):
        disk = DiskPoly.from_poly2(np.array([[0.0, 0.0], [0.5, 0.0]]))
        g = OutletGrowth(0, [1.0, 2.0, 0.5], disks=(None, disk, None))
        ax, ta, tb = 2.0, 0.3, -0.1
        want = 1.0 + (2.0 + 0.5 * ta) * ax + 0.5 * ax ** 2
        assert g.value(ax, ta, tb) == pytest.approx(want, rel=1e-14)
        want_slope = (2.0 + 0.5 * ta) + 1.0 * ax
        assert g.axial_slope(ax, ta, tb) == pytest.approx(want_slope,
                                                          rel=1e-14)

    def test_cross_integrals(self):
        disk = DiskPoly.from_poly2(np.array([[0.0], [0.0], [1.0]]))
        g = OutletGrowth(1, [0.0, 3.0], disks=(None, disk))
        r = 0.4
        vals = g.cross_integrals(r)
        assert vals[0] == pytest.approx(0.0, abs=1e-15)
        want = 3.0 * math.pi * r ** 2 + math.pi * r ** 4 / 4.0
        assert vals[1] == pytest.approx(want, rel=1e-14)

    def test_disk_slot_count_enforced(self):
        with pytest.raises(ValueError, match="disk slot"):
            OutletGrowth(0, [0.0, 1.0], disks=(None,))


class TestSpecialFields:
    def test_far_slopes(self, specials_flat6, flat_spec):
        for edge, fld in zip((1, 2), specials_flat6):
            scale = 1.0 / (math.pi * flat_spec.h0(edge) ** 2)
            slopes = fld.info["slopes"]
            assert slopes[0] == pytest.approx(-scale, rel=0.01)
            assert slopes[edge] == pytest.approx(scale, rel=0.01)
            other = 3 - edge
            assert abs(slopes[other]) < 0.01 * scale

    def test_flux_balance(self, specials_flat6, flat_spec):
        for fld in specials_flat6:
            total = sum(
                math.pi * flat_spec.h0(i) ** 2 * fld.info["slopes"][i]
                for i in range(3))
            assert abs(total) < 1e-6

    def test_normalised_at_first_outlet(self, specials_flat6):
        # the decaying part is shifted to level off at zero on outlet 0
        for fld in specials_flat6:
            assert abs(fld.info["plateaus"][0]) < 1e-10

    def test_invalid_edge_rejected(self, junction_flat6):
        with pytest.raises(ValueError, match="outlet"):
            solve_special(junction_flat6, 0)


class TestTransmission:
    def test_jumps_match_plateau_readout(self, exp_fx, junction_flat6,
                                         specials_flat6):
        data = exp_fx.inner[1]
        jumps = compute_delta(junction_flat6, data, specials_flat6)
        nhat = solve_decaying(junction_flat6, data)
        plateaus = [nhat.plateau(i) for i in range(3)]
        for s_idx, edge in enumerate((1, 2)):
            direct = plateaus[edge] - plateaus[0]
            assert jumps[s_idx] == pytest.approx(direct, rel=1e-2)

    def test_decaying_field_levels_off(self, exp_fx, junction_flat6):
        nhat = solve_decaying(junction_flat6, exp_fx.inner[1])
        growth_scale = max(
            float(np.max(np.abs(g.coeffs))) for g in exp_fx.inner[1].growth)
        for i in range(3):
            assert abs(nhat.far_slope(i)) < 5e-3 * max(growth_scale, 1.0)

    def test_wall_term_sign_consistent(self, flat_spec, junction_flat6,
                                       specials_flat6):
        # a constant wall trace on outlet 0 balanced by linear growth:
        # kappa * pi h^2 equals the weighted wall integral, which makes
        # the data solvable and pins the sign of the surface pairing
        c = 0.05
        h0 = flat_spec.h0(0)
        kappa = 3.0 * c / h0
        wall = Poly3.from_terms([((0, 0, 0), c)])
        growth = (OutletGrowth(0, [0.0, kappa]),
                  OutletGrowth(1, [0.0, 0.0]),
                  OutletGrowth(2, [0.0, 0.0]))
        data = InnerData(k=2, growth=growth, walls=(wall, None, None))
        assert abs(check_solvability(flat_spec, data)) < 1e-12

        # the polygonal lateral surface carries an O(1/segments^2)
        # perimeter defect, so compatibility holds only to that level
        b = assemble_load(junction_flat6, data)
        assert abs(b.sum()) < 1e-3 * np.abs(b).sum()

        jumps = compute_delta(junction_flat6, data, specials_flat6)
        nhat = solve_decaying(junction_flat6, data)
        plateaus = [nhat.plateau(i) for i in range(3)]
        for s_idx, edge in enumerate((1, 2)):
            direct = plateaus[edge] - plateaus[0]
            assert jumps[s_idx] == pytest.approx(direct, rel=5e-2)
        # both jumps pull the same way and are genuinely nonzero
        assert jumps[0] == pytest.approx(jumps[1], rel=1e-6)
        assert abs(jumps[0]) > 1e-4


class TestInnerRhs:
    def test_orders_start_at_one(self, flat_spec):
        with pytest.raises(ValueError, match="start"):
            build_inner_rhs(flat_spec, 0, [{}, {}, {}], [{}, {}, {}])

    def test_flat_source_first_order_growth(self, flat_spec):
        data, _, _ = order_one_data(flat_spec)
        assert data.k == 1
        assert data.fpart is None
        assert not data.has_walls()
        gf = solve_limit(flat_spec)
        for i in range(3):
            slope = gf.edges[i].germ().coef[1]
            assert data.growth[i].coeffs[1] == pytest.approx(slope,
                                                             rel=1e-12)
            assert data.growth[i].coeffs[0] == 0.0

    def test_second_order_structure(self, rich_spec, exp_rich):
        data = exp_rich.inner[2]
        assert data.k == 2
        # the rich source has no constant term, so no interior part
        assert data.fpart is None
        assert data.walls[1] is not None  # the loaded edge
        assert data.walls[0] is None and data.walls[2] is None
        got = data.walls[1](0.0, 0.2, -0.1)
        want = rich_spec.phi[1].poly(0.0, 0.2, -0.1)
        assert got == pytest.approx(want, abs=1e-14)

    def test_constant_source_enters_interior_part(self, flat_spec):
        gf = solve_limit(flat_spec)
        taylor = [{0: gf.edges[i].germ().coef, 1: np.zeros(4)}
                  for i in range(3)]
        data = build_inner_rhs(flat_spec, 2, taylor, [{}, {}, {}])
        assert data.fpart is not None
        assert data.fpart(0.3, -0.1, 0.2) == pytest.approx(1.0, abs=1e-14)
        for i in range(3):
            # quadratic growth from the curvature of the limit profile
            want = gf.edges[i].germ().coef[2]
            assert data.growth[i].coeffs[2] == pytest.approx(want,
                                                             rel=1e-12)
