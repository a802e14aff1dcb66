"""Piecewise Chebyshev series on [0, 1] used by the edge ODE solves."""
from __future__ import annotations

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev


def merge_breakpoints(*lists, tol=1e-12):
    pts = np.concatenate([np.asarray(l, dtype=float) for l in lists])
    pts = np.sort(pts)
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    return np.asarray(keep)


class PiecewiseCheb:
    """Chebyshev interpolants per interval with continuous antiderivatives."""

    def __init__(self, breakpoints, series):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.series = list(series)

    @classmethod
    def interpolate(cls, fn, breakpoints, deg=64):
        bp = np.asarray(breakpoints, dtype=float)
        series = [Chebyshev.interpolate(fn, deg, domain=[bp[j], bp[j + 1]])
                  for j in range(len(bp) - 1)]
        return cls(bp, series)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                      0, len(self.series) - 1)
        out = np.empty_like(x)
        for j, s in enumerate(self.series):
            m = idx == j
            if np.any(m):
                out[m] = s(x[m])
        return out[0] if scalar else out

    def deriv(self, m=1):
        return PiecewiseCheb(self.breakpoints, [s.deriv(m) for s in self.series])

    def antiderivative(self, start=0.0):
        """Continuous antiderivative equal to ``start`` at the left endpoint."""
        acc = float(start)
        out = []
        for s in self.series:
            a = s.integ(lbnd=s.domain[0])
            a = a + acc
            out.append(a)
            acc = a(s.domain[1])
        return PiecewiseCheb(self.breakpoints, out)

    def integral(self):
        total = 0.0
        for s in self.series:
            total += s.integ(lbnd=s.domain[0])(s.domain[1])
        return total


def gauss_piecewise(fn, breakpoints, n=48):
    """Composite Gauss-Legendre integral of ``fn`` over the breakpoint span."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    bp = np.asarray(breakpoints, dtype=float)
    total = 0.0
    for a, b in zip(bp[:-1], bp[1:]):
        x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        total += 0.5 * (b - a) * np.dot(weights, fn(x))
    return total
