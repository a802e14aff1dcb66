"""Neumann eigenpairs of the Laplacian on a disk cross-section.

Near each sealed outer end the solution relaxes to the end condition
through an exponentially decaying tail.  Separation of variables in a
half-infinite circular cylinder produces disk eigenfunctions
``J_n(lam r) cos(n t)`` and ``J_n(lam r) sin(n t)`` whose radial
derivative vanishes on the rim, each paired with an axial decay rate
equal to its frequency ``lam``.  This module enumerates those pairs for
a disk of given radius, with closed-form norms and a tensor quadrature
used to project end traces onto the basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy import special
from scipy.optimize import brentq


def _polish_root(n, x0):
    """Tighten a positive root of J_n' with a bracketed local solve."""

    def fun(x):
        return special.jvp(n, x)

    for w in (1e-10, 1e-8, 1e-6, 1e-4):
        a = x0 * (1.0 - w)
        b = x0 * (1.0 + w)
        if fun(a) * fun(b) < 0.0:
            return brentq(fun, a, b, xtol=1e-15, rtol=8.9e-16)
    return x0


def radial_derivative_roots(n, count):
    """First ``count`` positive roots of J_n', refined to machine precision."""
    raw = special.jnp_zeros(n, count)
    return np.array([_polish_root(n, x) for x in raw])


def _jn_over_r(n, lam, r):
    """J_n(lam r)/r with the correct r -> 0 limit."""
    r = np.asarray(r, dtype=float)
    small = r < 1e-300
    safe = np.where(small, 1.0, r)
    out = special.jv(n, lam * r) / safe
    if np.any(small):
        limit = 0.5 * lam if n == 1 else 0.0
        out = np.where(small, limit, out)
    return out


@dataclass(frozen=True)
class DiskMode:
    """One Neumann eigenfunction of the disk of radius ``radius``.

    ``kind`` is "const" for the flat mode, else "cos" or "sin"; ``root``
    is the associated positive root of J_n' (0 for the flat mode).
    """

    n: int
    kind: str
    root: float
    radius: float

    @property
    def lam(self):
        """Transverse frequency; also the axial decay rate of the tail."""
        return self.root / self.radius

    @cached_property
    def norm2(self):
        """Squared L2 norm over the disk, in closed form."""
        h = self.radius
        if self.kind == "const":
            return math.pi * h * h
        jn = special.jv(self.n, self.root)
        radial = 0.5 * h * h * (1.0 - (self.n / self.root) ** 2) * jn * jn
        angular = 2.0 * math.pi if self.n == 0 else math.pi
        return radial * angular

    def values(self, r, theta):
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.kind == "const":
            return np.ones(np.broadcast(r, theta).shape)
        radial = special.jv(self.n, self.lam * r)
        if self.kind == "cos":
            return radial * np.cos(self.n * theta)
        return radial * np.sin(self.n * theta)

    def gradient_polar(self, r, theta):
        """(d/dr, (1/r) d/dtheta) of the mode, finite on the axis."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.kind == "const":
            z = np.zeros(np.broadcast(r, theta).shape)
            return z, z.copy()
        lam = self.lam
        dr = lam * special.jvp(self.n, lam * r)
        over_r = self.n * _jn_over_r(self.n, lam, r)
        if self.kind == "cos":
            return dr * np.cos(self.n * theta), -over_r * np.sin(self.n * theta)
        return dr * np.sin(self.n * theta), over_r * np.cos(self.n * theta)

    def rim_slope(self):
        """|J_n'| at the rim; a direct check of the lateral condition."""
        if self.kind == "const":
            return 0.0
        return abs(float(special.jvp(self.n, self.root)))


class DiskQuadrature:
    """Tensor rule on the disk: Gauss-Legendre radially, uniform angles."""

    def __init__(self, radius, nr=64, ntheta=128):
        self.radius = float(radius)
        gx, gw = legendre.leggauss(nr)
        s = 0.5 * (gx + 1.0)
        ws = 0.5 * gw
        r = self.radius * s
        wr = self.radius ** 2 * ws * s  # weight r dr mapped from [0,1]
        th = 2.0 * math.pi * np.arange(ntheta) / ntheta
        wt = 2.0 * math.pi / ntheta
        self.r = np.repeat(r, ntheta)
        self.theta = np.tile(th, nr)
        self.w = np.repeat(wr * wt, ntheta)

    def integrate(self, values):
        return float(self.w @ np.asarray(values, dtype=float))


class DiskSpectrum:
    """The first ``count`` Neumann modes of a disk, ordered by frequency."""

    def __init__(self, radius, count=40):
        self.radius = float(radius)
        self.count = int(count)
        self.modes = self._build(self.radius, self.count)

    @staticmethod
    def _build(radius, count):
        modes = [DiskMode(0, "const", 0.0, radius)]
        candidates = []
        # J_n' roots grow with n at least linearly, so n < count suffices
        # to capture the `count` smallest frequencies.
        per_n = max(4, count)
        for n in range(count + 1):
            for root in radial_derivative_roots(n, per_n):
                candidates.append((root, n))
        candidates.sort()
        for root, n in candidates:
            if len(modes) >= count:
                break
            modes.append(DiskMode(n, "cos", root, radius))
            if n >= 1 and len(modes) < count:
                modes.append(DiskMode(n, "sin", root, radius))
        return modes[:count]

    @classmethod
    def for_harmonics(cls, radius, harmonics, depth):
        """Spectrum restricted to the given angular orders, ``depth`` radial
        modes each.  Suited to projecting data with known harmonic content:
        the radial series then converges to depth instead of being diluted
        across unused angular orders."""
        self = cls.__new__(cls)
        self.radius = float(radius)
        entries = []
        for n in sorted(set(int(n) for n in harmonics)):
            for root in radial_derivative_roots(n, depth):
                entries.append((root, n))
        entries.sort()
        modes = [DiskMode(0, "const", 0.0, self.radius)]
        for root, n in entries:
            modes.append(DiskMode(n, "cos", root, self.radius))
            if n >= 1:
                modes.append(DiskMode(n, "sin", root, self.radius))
        self.modes = modes
        self.count = len(modes)
        return self

    @property
    def max_root(self):
        return max(m.root for m in self.modes)

    @property
    def rates(self):
        """Decay rates of all modes (0 first, then increasing)."""
        return np.array([m.lam for m in self.modes])

    @property
    def slowest_rate(self):
        """Smallest positive decay rate (sets the tail thickness)."""
        return float(self.modes[1].lam)

    def values_matrix(self, r, theta):
        """Mode values at points, shape (npoints, count)."""
        return np.column_stack([m.values(r, theta) for m in self.modes])

    def project(self, values, quad: DiskQuadrature):
        """L2 coefficients of sampled data against each mode."""
        vals = np.asarray(values, dtype=float)
        out = np.empty(self.count)
        for j, m in enumerate(self.modes):
            out[j] = quad.integrate(vals * m.values(quad.r, quad.theta)) / m.norm2
        return out

    def gram_matrix(self, quad: DiskQuadrature):
        """Normalized Gram matrix under ``quad`` (identity if exact)."""
        V = self.values_matrix(quad.r, quad.theta)
        scale = np.array([m.norm2 for m in self.modes])
        G = (V * quad.w[:, None]).T @ V
        return G / np.sqrt(np.outer(scale, scale))
