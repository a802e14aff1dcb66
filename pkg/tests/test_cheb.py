"""Piecewise Chebyshev interpolation on breakpoint grids."""

import numpy as np
import pytest

from thinjunction.cheb import PiecewiseCheb, gauss_piecewise, merge_breakpoints


def test_interpolates_smooth_function():
    f = PiecewiseCheb.interpolate(np.sin, [0.0, 0.4, 1.0])
    x = np.linspace(0.0, 1.0, 257)
    assert np.max(np.abs(f(x) - np.sin(x))) < 1e-13


def test_derivative_matches():
    f = PiecewiseCheb.interpolate(np.sin, [0.0, 0.4, 1.0])
    x = np.linspace(0.0, 1.0, 101)
    assert np.max(np.abs(f.deriv()(x) - np.cos(x))) < 1e-9
    assert np.max(np.abs(f.deriv(2)(x) + np.sin(x))) < 1e-5


def test_antiderivative_and_integral():
    f = PiecewiseCheb.interpolate(lambda x: 3.0 * x ** 2, [0.0, 0.5, 1.0])
    F = f.antiderivative(start=0.0)
    x = np.linspace(0.0, 1.0, 11)
    assert np.allclose(F(x), x ** 3, atol=1e-12)
    assert f.integral() == pytest.approx(1.0, abs=1e-12)


def test_piecewise_kink_is_resolved():
    # |x - 0.5| is analytic on each side of the breakpoint.
    fn = lambda x: np.abs(x - 0.5)
    f = PiecewiseCheb.interpolate(fn, [0.0, 0.5, 1.0])
    x = np.linspace(0.0, 1.0, 401)
    assert np.max(np.abs(f(x) - fn(x))) < 1e-12


def test_gauss_piecewise_exact_for_polynomials():
    got = gauss_piecewise(lambda x: x ** 7 - 2 * x, [0.0, 0.3, 1.0])
    assert got == pytest.approx(1.0 / 8.0 - 1.0, abs=1e-14)


def test_merge_breakpoints_dedupes():
    merged = merge_breakpoints([0.0, 0.5, 1.0], [0.0, 0.5 + 1e-14, 0.7])
    assert np.allclose(merged, [0.0, 0.5, 0.7, 1.0])
    assert np.all(np.diff(merged) > 0)
