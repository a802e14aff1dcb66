"""Exponential end layers that restore the sealed-end condition.

The regular expansion does not vanish on the end disk of a branch: its
cross-section corrector leaves a zero-mean trace there.  Each layer term
cancels that trace with a harmonic function of the stretched axial
distance, expanded over Neumann disk modes, every component decaying
like exp(-lam * distance).  The slowest rate is the first nonzero mode
frequency of the end disk, which makes the decay certifiable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ProblemSpec
from .corrector import EdgeCorrector
from .diskspec import DiskQuadrature, DiskSpectrum


@dataclass
class BoundaryLayerTerm:
    """One end layer: coefficients against the end-disk Neumann modes.

    Evaluates sum_p a_p Theta_p(transverse) exp(-lam_p s) where s >= 0 is
    the stretched distance from the sealed end.  The flat-mode
    coefficient is identically zero (the trace has zero mean), so the
    whole term decays at least like exp(-lam_1 s).
    """

    edge: int
    order: int
    spectrum: DiskSpectrum
    coeffs: np.ndarray
    tail_norm: float = 0.0

    @classmethod
    def zero(cls, edge, order, radius, count=1):
        sp = DiskSpectrum(radius, count=1)
        return cls(edge=edge, order=order, spectrum=sp,
                   coeffs=np.zeros(1), tail_norm=0.0)

    @property
    def is_zero(self):
        return not np.any(self.coeffs)

    @property
    def decay_rate(self):
        """Certified decay rate: smallest frequency with nonzero weight."""
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return math.inf
        return float(self.spectrum.rates[nz[0]])

    def values(self, s, xa, xb):
        """Layer values at stretched distance s and transverse points."""
        s = np.asarray(s, dtype=float)
        xa = np.asarray(xa, dtype=float)
        xb = np.asarray(xb, dtype=float)
        if self.is_zero:
            return np.zeros(np.broadcast(s, xa).shape)
        r = np.hypot(xa, xb)
        t = np.arctan2(xb, xa)
        V = self.spectrum.values_matrix(np.ravel(r), np.ravel(t))
        E = np.exp(-np.outer(np.ravel(np.broadcast_to(s, r.shape)),
                             self.spectrum.rates))
        out = (V * E) @ self.coeffs
        return out.reshape(r.shape) if r.shape else float(out[0])

    def gradient(self, s, xa, xb):
        """(d/ds, d/dxa, d/dxb) of the layer at the given points."""
        s = np.asarray(s, dtype=float).ravel()
        xa = np.asarray(xa, dtype=float).ravel()
        xb = np.asarray(xb, dtype=float).ravel()
        if self.is_zero:
            z = np.zeros(xa.shape)
            return z, z.copy(), z.copy()
        r = np.hypot(xa, xb)
        t = np.arctan2(xb, xa)
        rates = self.spectrum.rates
        E = np.exp(-np.outer(s, rates)) * self.coeffs
        ds = np.zeros(xa.shape)
        ga = np.zeros(xa.shape)
        gb = np.zeros(xa.shape)
        ct, st = np.cos(t), np.sin(t)
        for j, mode in enumerate(self.spectrum.modes):
            if self.coeffs[j] == 0.0:
                continue
            w = E[:, j]
            ds -= rates[j] * w * mode.values(r, t)
            dr, dt_over_r = mode.gradient_polar(r, t)
            ga += w * (ct * dr - st * dt_over_r)
            gb += w * (st * dr + ct * dt_over_r)
        return ds, ga, gb

    def amplitude(self):
        """Certified sup-norm constant: sum |a_p| sup|Theta_p|."""
        total = 0.0
        for a, mode in zip(self.coeffs, self.spectrum.modes):
            if a == 0.0:
                continue
            rr = np.linspace(0.0, mode.radius, 257)
            total += abs(a) * np.max(np.abs(mode.values(rr, 0.0 * rr)))
        return total

    def decay_certificate(self, s):
        """(certified bound, observed sup over disk samples) at distance s."""
        bound = self.amplitude() * math.exp(-self.decay_rate * float(s))
        if self.is_zero:
            return 0.0, 0.0
        h = self.spectrum.radius
        rr = np.linspace(0.0, h, 48)
        tt = np.linspace(0.0, 2.0 * math.pi, 96, endpoint=False)
        R, T = np.meshgrid(rr, tt)
        xa = (R * np.cos(T)).ravel()
        xb = (R * np.sin(T)).ravel()
        vals = self.values(np.full(xa.shape, float(s)), xa, xb)
        return bound, float(np.max(np.abs(vals)))


def build_pi(spec: ProblemSpec, edge, corr: EdgeCorrector | None,
             omega=None, count=40, nr=64, ntheta=128, mean_tol=1e-10):
    """Layer term of order k at the sealed end of one branch.

    Projects the negated end trace of the corrector onto the end-disk
    modes.  Orders 0 and 1 have no corrector and produce the zero term.
    The flat-mode coefficient must come out zero (the trace has zero
    mean); a violation signals an upstream mean-constraint bug.
    """
    h1 = spec.h[edge].value1
    if corr is None:
        return BoundaryLayerTerm.zero(edge, 0, h1)
    if omega is not None:
        end = float(omega.value(1.0))
        if abs(end) > 1e-9:
            raise ValueError(f"axial solution does not vanish at the end "
                             f"(value {end:.3e}); trace data would be wrong")
    trace = corr.end_trace().trimmed(1e-15)
    if trace.max_abs() == 0.0:
        return BoundaryLayerTerm.zero(edge, corr.order, h1)
    present = np.where((np.abs(trace.cos) > 0).any(axis=1)
                       | (np.abs(trace.sin) > 0).any(axis=1))[0]
    spectrum = DiskSpectrum.for_harmonics(h1, present, depth=count)
    # enough radial points to resolve the most oscillatory retained mode
    nr = max(nr, int(0.6 * spectrum.max_root) + 32)
    ntheta = max(ntheta, 4 * (int(present.max()) + 1))
    quad = DiskQuadrature(h1, nr=nr, ntheta=ntheta)
    phi_vals = -trace.evaluate(quad.r * np.cos(quad.theta),
                               quad.r * np.sin(quad.theta))
    coeffs = spectrum.project(phi_vals, quad)
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    if abs(coeffs[0]) > mean_tol * scale:
        raise ValueError(
            f"flat-mode weight {coeffs[0]:.3e} exceeds {mean_tol:.1e}; "
            "the corrector trace is not mean-free")
    coeffs[0] = 0.0
    tail = float(np.sqrt(np.sum(coeffs[-5:] ** 2)))
    return BoundaryLayerTerm(edge=edge, order=corr.order, spectrum=spectrum,
                             coeffs=coeffs, tail_norm=tail)
