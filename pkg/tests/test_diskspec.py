"""Disk Neumann eigenpairs used for end layers and junction tails."""

import numpy as np
import pytest
from scipy import special

from thinjunction import DiskSpectrum
from thinjunction.diskspec import DiskQuadrature, radial_derivative_roots


def _bisect_first_root_n1():
    # Independent oracle: J1'(x) = J0(x) - J1(x)/x via the j0/j1 routines,
    # bisected to machine precision.
    def d(x):
        return special.j0(x) - special.j1(x) / x

    a, b = 1.0, 3.0
    assert d(a) > 0 > d(b)
    for _ in range(80):
        m = 0.5 * (a + b)
        if d(m) > 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def test_first_root_matches_bisection():
    lam = radial_derivative_roots(1, 1)[0]
    assert lam == pytest.approx(_bisect_first_root_n1(), abs=1e-12)
    assert lam == pytest.approx(1.8411837813, abs=1e-8)


def test_roots_interlace_and_increase():
    r1 = radial_derivative_roots(1, 5)
    r2 = radial_derivative_roots(2, 5)
    assert np.all(np.diff(r1) > 0)
    # Roots of successive orders interlace.
    assert np.all(r1[:4] < r2[:4])
    assert np.all(r2[:4] < r1[1:])


def test_gram_matrix_orthonormal():
    spec = DiskSpectrum(1.0, count=24)
    quad = DiskQuadrature(1.0)
    g = spec.gram_matrix(quad)
    off = g - np.diag(np.diag(g))
    assert np.max(np.abs(off)) <= 1e-10
    assert np.max(np.abs(np.diag(g) - 1.0)) <= 1e-10


def test_modes_satisfy_helmholtz():
    spec = DiskSpectrum(0.8, count=10)
    pts = [(0.31, 0.12), (-0.2, 0.45), (0.1, -0.5)]
    d = 1e-4
    for mode in spec.modes[:6]:
        lam = mode.lam
        for (x, y) in pts:
            r = np.hypot(x, y)
            th = np.arctan2(y, x)

            def v(xx, yy):
                return mode.values(np.hypot(xx, yy), np.arctan2(yy, xx))

            lap = (v(x + d, y) + v(x - d, y) + v(x, y + d) + v(x, y - d)
                   - 4 * v(x, y)) / d ** 2
            val = mode.values(np.array([r]), np.array([th]))[0]
            assert lap == pytest.approx(-lam ** 2 * val,
                                        abs=2e-3 * max(1.0, lam ** 2))


def test_rim_slope_vanishes():
    spec = DiskSpectrum(0.8, count=10)
    th = np.linspace(0, 2 * np.pi, 13)
    for mode in spec.modes[:8]:
        dr, _ = mode.gradient_polar(np.full_like(th, 0.8), th)
        assert np.max(np.abs(dr)) < 1e-11


def test_projection_recovers_coefficients():
    spec = DiskSpectrum(1.0, count=12)
    quad = DiskQuadrature(1.0)
    coeffs = np.zeros(len(spec.modes))
    coeffs[0] = 0.7
    coeffs[3] = -1.2
    vals = spec.values_matrix(quad.r, quad.theta) @ coeffs
    got = spec.project(vals, quad)
    assert np.allclose(got, coeffs, atol=1e-10)


def test_for_harmonics_selection():
    spec = DiskSpectrum.for_harmonics(0.5, [0, 2], depth=4)
    assert {m.n for m in spec.modes} <= {0, 2}
    assert np.all(np.diff(spec.rates) >= -1e-12)
    assert spec.slowest_rate == pytest.approx(np.min(spec.rates[1:]))
    # Rates scale inversely with the radius.
    wide = DiskSpectrum.for_harmonics(1.0, [0, 2], depth=4)
    assert spec.slowest_rate == pytest.approx(2.0 * wide.slowest_rate,
                                              rel=1e-12)
