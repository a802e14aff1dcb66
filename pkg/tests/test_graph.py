"""One-dimensional vertex problems on the three-edge graph."""

import math

import numpy as np
import pytest

from thinjunction import (
    LateralLoad,
    RadiusProfile,
    SourceField,
    TransmissionData,
    solve_limit,
    solve_omega_k,
)
from thinjunction.graph import assemble_rhs0, weak_residual
from thinjunction.poly import Poly3

from conftest import make_spec


@pytest.fixture(scope="module")
def unit_radius_spec():
    # Unit radii are fine here: no 3-D mesh is attached to the vertex.
    f = SourceField(Poly3.from_terms([((1, 0, 0), 1.0)]))
    return make_spec(f, h=(RadiusProfile.constant(1.0),) * 3)


def test_limit_closed_form(unit_radius_spec):
    """f = x1, h = 1: cubic on the loaded edge, linear on the others."""
    gf = solve_limit(unit_radius_spec)
    x = np.linspace(0.0, 1.0, 401)
    w1 = -x ** 3 / 6.0 + x / 9.0 + 1.0 / 18.0
    w23 = (1.0 - x) / 18.0
    assert np.max(np.abs(gf.value(0, x) - w1)) < 1e-10
    assert np.max(np.abs(gf.value(1, x) - w23)) < 1e-10
    assert np.max(np.abs(gf.value(2, x) - w23)) < 1e-10


def test_limit_vertex_continuity_and_flux(unit_radius_spec):
    gf = solve_limit(unit_radius_spec)
    v = gf.vertex_values
    assert v[0] == pytest.approx(v[1], abs=1e-12)
    assert v[0] == pytest.approx(v[2], abs=1e-12)
    assert gf.flux_total(unit_radius_spec) == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(gf.end_values(), 0.0, atol=1e-12)


def test_limit_weak_residual_random_source(rng):
    f = SourceField(Poly3.from_terms(
        [((2, 0, 0), 0.7), ((0, 0, 0), -0.4), ((1, 0, 0), 1.3)]))
    h = (RadiusProfile.constant(0.25),
         RadiusProfile.smooth_bump(0.25, 0.4),
         RadiusProfile.constant(0.2))
    spec = make_spec(f, h=h)
    gf = solve_limit(spec)
    res = weak_residual(spec, gf, assemble_rhs0(spec))
    assert res < 1e-9


def test_limit_with_lateral_load():
    f = SourceField.constant(1.0)
    phi = (LateralLoad(Poly3.constant(0.1)), LateralLoad.zero(),
           LateralLoad.zero())
    spec = make_spec(f, phi=phi)
    gf = solve_limit(spec)
    res = weak_residual(spec, gf, assemble_rhs0(spec))
    assert res < 1e-9
    # The load drains energy: the solution differs from the no-load one.
    base = solve_limit(make_spec(f))
    x = np.linspace(0, 1, 11)
    assert np.max(np.abs(gf.value(0, x) - base.value(0, x))) > 1e-3


def test_omega_k_jump_and_flux_conditions(fx_spec):
    trans = TransmissionData(delta2=0.03, delta3=-0.02, dstar=0.05)
    rhs = assemble_rhs0(fx_spec)
    gf = solve_omega_k(fx_spec, rhs, trans)
    v = gf.vertex_values
    assert v[1] - v[0] == pytest.approx(0.03, abs=1e-11)
    assert v[2] - v[0] == pytest.approx(-0.02, abs=1e-11)
    # Total vertex flux matches the prescribed defect.
    total = sum(math.pi * fx_spec.h0(i) ** 2 * gf.vertex_slopes[i]
                for i in range(3))
    assert total == pytest.approx(0.05, abs=1e-10)
    assert weak_residual(fx_spec, gf, rhs, trans) < 1e-9


def test_omega_k_zero_data_is_zero(fx_spec):
    zero_rhs = [type(r)(fn=lambda x: np.zeros_like(np.asarray(x, float)),
                        breakpoints=r.breakpoints, germ0=r.germ0 * 0.0,
                        germ0_valid=r.germ0_valid)
                for r in assemble_rhs0(fx_spec)]
    gf = solve_omega_k(fx_spec, zero_rhs, TransmissionData())
    x = np.linspace(0, 1, 11)
    for i in range(3):
        assert np.max(np.abs(gf.value(i, x))) < 1e-12


def test_germ_matches_values_near_vertex(fx_spec):
    gf = solve_limit(fx_spec)
    for i in range(3):
        g = gf.germ(i, extra_degree=4)
        x = np.linspace(0.0, 0.05, 21)
        assert np.max(np.abs(g(x) - gf.value(i, x))) < 1e-9


def test_derivs_at_zero_consistent(fx_spec):
    gf = solve_limit(fx_spec)
    for i in range(3):
        ds = gf.derivs_at_zero(i, 3)
        assert ds[0] == pytest.approx(gf.vertex_values[i], abs=1e-12)
        assert ds[1] == pytest.approx(gf.vertex_slopes[i], abs=1e-12)
        d = 1e-4
        fd2 = (gf.value(i, np.array([2 * d]))[0]
               - 2 * gf.value(i, np.array([d]))[0]
               + gf.vertex_values[i]) / d ** 2
        assert ds[2] == pytest.approx(fd2, abs=1e-3)
