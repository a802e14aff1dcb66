"""End layers: trace cancellation, harmonicity, certified decay."""

import numpy as np
import pytest

from thinjunction import build_corrector, build_pi
from thinjunction.diskspec import DiskSpectrum
from thinjunction.layers import BoundaryLayerTerm
from thinjunction.graph import solve_limit


@pytest.fixture(scope="module")
def pi2(rich_spec):
    gf = solve_limit(rich_spec)
    corr = build_corrector(rich_spec, 1, 2, omega=gf.edges[1])
    return build_pi(rich_spec, 1, corr, omega=gf.edges[1]), corr


def test_zero_orders_have_zero_layers(rich_spec):
    term = build_pi(rich_spec, 0, None)
    assert term.is_zero
    assert term.decay_rate == np.inf
    assert term.values(np.array([0.3]), np.array([0.1]),
                       np.array([0.0]))[0] == 0.0


def test_trace_cancellation(pi2, rich_spec, rng):
    term, corr = pi2
    h1 = rich_spec.h[1].value1
    r = h1 * np.sqrt(rng.uniform(0, 1, 50))
    t = rng.uniform(0, 2 * np.pi, 50)
    xa, xb = r * np.cos(t), r * np.sin(t)
    trace = corr.values(np.ones(50), xa, xb)
    # At the end disk the layer cancels the corrector trace up to the
    # modal truncation tail (the trace has a nonzero rim slope, so the
    # Neumann-mode series converges algebraically, not spectrally).
    layer0 = term.values(np.zeros(50), xa, xb)
    res40 = np.max(np.abs(layer0 + trace))
    assert res40 < 1e-4
    rich = build_pi(rich_spec, 1, corr, count=120)
    res120 = np.max(np.abs(rich.values(np.zeros(50), xa, xb) + trace))
    assert res120 < 0.5 * res40


def test_layer_is_harmonic(pi2, rng):
    term, _ = pi2
    # (d^2/ds^2 + lap_transverse) of the layer vanishes: check via FD.
    xa = np.array([0.05, -0.08, 0.02])
    xb = np.array([0.01, 0.03, -0.06])
    s = np.full(3, 0.4)
    d = 1e-4

    def v(ss, a, b):
        return term.values(ss, a, b)

    lap = (v(s + d, xa, xb) + v(s - d, xa, xb)
           + v(s, xa + d, xb) + v(s, xa - d, xb)
           + v(s, xa, xb + d) + v(s, xa, xb - d)
           - 6 * v(s, xa, xb)) / d ** 2
    assert np.max(np.abs(lap)) < 1e-4


def test_gradient_matches_fd(pi2):
    term, _ = pi2
    s = np.array([0.25])
    xa, xb = np.array([0.07]), np.array([-0.04])
    ds, ga, gb = term.gradient(s, xa, xb)
    d = 1e-6
    fds = (term.values(s + d, xa, xb) - term.values(s - d, xa, xb)) / (2 * d)
    fga = (term.values(s, xa + d, xb) - term.values(s, xa - d, xb)) / (2 * d)
    fgb = (term.values(s, xa, xb + d) - term.values(s, xa, xb - d)) / (2 * d)
    assert ds[0] == pytest.approx(fds[0], abs=1e-7)
    assert ga[0] == pytest.approx(fga[0], abs=1e-7)
    assert gb[0] == pytest.approx(fgb[0], abs=1e-7)


def test_decay_certificate(pi2):
    term, _ = pi2
    for s in (0.5, 1.0, 2.0):
        bound, observed = term.decay_certificate(s)
        assert observed <= bound + 1e-12
    b1, _ = term.decay_certificate(1.0)
    b2, _ = term.decay_certificate(2.0)
    # One extra unit of distance costs at least one decay-rate factor.
    assert b2 <= b1 * np.exp(-term.decay_rate) + 1e-15


def test_single_mode_decay_is_exact():
    spectrum = DiskSpectrum.for_harmonics(1.0, [1], depth=1)
    coeffs = np.zeros(len(spectrum.modes))
    coeffs[1] = 0.8  # first nonflat mode
    term = BoundaryLayerTerm(edge=0, order=2, spectrum=spectrum,
                             coeffs=coeffs)
    lam = term.decay_rate
    star = 5.0 / lam
    xa, xb = np.array([0.3]), np.array([0.2])
    v0 = term.values(np.zeros(1), xa, xb)[0]
    vs = term.values(np.full(1, star), xa, xb)[0]
    assert abs(vs / v0) == pytest.approx(np.exp(-lam * star), abs=1e-12)


def test_nonvanishing_axial_end_rejected(rich_spec):
    gf = solve_limit(rich_spec)
    corr = build_corrector(rich_spec, 1, 2, omega=gf.edges[1])
    shifted = gf.edges[1].with_affine(0.0, 0.05)  # now omega(1) != 0
    with pytest.raises(ValueError, match="vanish at the end"):
        build_pi(rich_spec, 1, corr, omega=shifted)
