"""Problem data for the thin three-branch junction domain.

The domain consists of three thin cylinders of slowly varying radius
``eps*h_i(x_i)`` along the positive coordinate half-axes, joined near the
origin through a small bulge (box of half-width ``eps*ell``).  All problem
data live here: radius profiles, the polynomial volume source ``f``, the
polynomial lateral Neumann loads ``phi_i``, and the bulge geometry.

Transverse-variable convention used throughout the package: for edge ``i``
the two cross-section coordinates are the remaining physical axes in
ascending order, i.e. edge 1 -> (x2, x3), edge 2 -> (x1, x3),
edge 3 -> (x1, x2).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .poly import (
    Poly3,
    box_monomial_integral,
    circle_monomial_integral,
    disk_monomial_integral,
    trig_power_modes,
)

# 0-based transverse axes per 0-based edge index
TRANSVERSE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def eta(k, hprime):
    """Coefficient of the lateral-load term of order k in the slope expansion.

    Vanishes for odd k; for even k = 2s it equals
    (-1)^s (2s)! |h'|^{2s} / ((1-2s) (s!)^2 4^s).  k = 0 gives 1.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    hprime = np.asarray(hprime, dtype=float)
    if k % 2 == 1:
        return np.zeros_like(hprime)
    s = k // 2
    c = (-1.0) ** s * math.factorial(2 * s) / (
        (1 - 2 * s) * math.factorial(s) ** 2 * 4.0 ** s
    )
    return c * np.abs(hprime) ** k


class RadiusProfile:
    """Piecewise-polynomial radius h(x) on [0, 1], C^1, constant near the ends."""

    def __init__(self, breakpoints, pieces):
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.pieces = [Polynomial(np.atleast_1d(np.asarray(p, dtype=float)))
                       for p in pieces]
        self._validate()
        self._d1 = [p.deriv() for p in self.pieces]
        self._d2 = [p.deriv(2) for p in self.pieces]

    @classmethod
    def constant(cls, h0):
        return cls([0.0, 1.0], [[float(h0)]])

    @classmethod
    def smooth_bump(cls, h0, h1, a=0.35, b=0.65):
        """Profile equal to h0 on [0,a], h1 on [b,1], C^2 quintic blend between."""
        t = Polynomial([-a / (b - a), 1.0 / (b - a)])
        s = Polynomial([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])
        from .poly import compose_poly1

        blend = Polynomial([h0]) + (h1 - h0) * compose_poly1(s, t)
        return cls([0.0, a, b, 1.0], [[h0], blend.coef, [h1]])

    def _validate(self):
        bp = self.breakpoints
        if bp[0] != 0.0 or bp[-1] != 1.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase from 0 to 1")
        if len(self.pieces) != len(bp) - 1:
            raise ValueError("need one piece per interval")
        for j in range(len(self.pieces) - 1):
            x = bp[j + 1]
            if abs(self.pieces[j](x) - self.pieces[j + 1](x)) > 1e-10:
                raise ValueError(f"profile discontinuous at x={x}")
            if abs(self.pieces[j].deriv()(x) - self.pieces[j + 1].deriv()(x)) > 1e-10:
                raise ValueError(f"profile slope jumps at x={x}")
        for p, side in ((self.pieces[0], "start"), (self.pieces[-1], "end")):
            if p.degree() > 0 and np.any(np.abs(p.coef[1:]) > 1e-14):
                raise ValueError(f"profile must be constant near the {side}")
        xs = np.linspace(0.0, 1.0, 257)
        if np.min(self._eval_list(self.pieces, xs)) <= 0.0:
            raise ValueError("radius must stay positive")

    def _eval_list(self, polys, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                      0, len(polys) - 1)
        out = np.empty_like(x, dtype=float)
        for j, p in enumerate(polys):
            m = idx == j
            if np.any(m):
                out[m] = p(x[m])
        return out

    def __call__(self, x):
        return self._eval_list(self.pieces, x)

    def deriv(self, x):
        return self._eval_list(self._d1, x)

    def deriv2(self, x):
        return self._eval_list(self._d2, x)

    @property
    def value0(self):
        return float(self.pieces[0].coef[0])

    @property
    def value1(self):
        return float(self.pieces[-1](1.0))

    @property
    def plateau0(self):
        """End of the constant stretch at x = 0."""
        return float(self.breakpoints[1]) if len(self.pieces) > 1 else 1.0

    @property
    def plateau1(self):
        """Start of the constant stretch at x = 1."""
        return float(self.breakpoints[-2]) if len(self.pieces) > 1 else 0.0

    def is_constant(self):
        return len(self.pieces) == 1

    def to_json(self):
        if self.is_constant():
            return self.value0
        return {"breakpoints": self.breakpoints.tolist(),
                "pieces": [p.coef.tolist() for p in self.pieces]}


class SourceField:
    """Polynomial volume source f(x1, x2, x3)."""

    def __init__(self, poly: Poly3):
        self.poly = poly

    @classmethod
    def from_terms(cls, terms):
        return cls(Poly3.from_terms(terms))

    @classmethod
    def constant(cls, value):
        return cls(Poly3.constant(value))

    def __call__(self, x1, x2, x3):
        return self.poly(x1, x2, x3)

    def axis_profile(self, edge):
        """f restricted to the edge axis, as a 1-D polynomial of x_i."""
        a, b = TRANSVERSE_AXES[edge]
        cube = np.moveaxis(self.poly.coef, (edge, a, b), (0, 1, 2))
        return Polynomial(cube[:, 0, 0].copy())

    def transverse_taylor(self, edge, k):
        """Taylor slice of transverse degree k about the edge axis.

        Returns a Poly3 in (x_i, ta, tb) whose value at (x, xi_a, xi_b) is
        the degree-k transverse Taylor coefficient field f_k.
        """
        a, b = TRANSVERSE_AXES[edge]
        cube = np.moveaxis(self.poly.coef, (edge, a, b), (0, 1, 2))
        out = np.zeros_like(cube)
        ni, na, nb = cube.shape
        for pa in range(na):
            for pb in range(nb):
                if pa + pb == k:
                    out[:, pa, pb] = cube[:, pa, pb]
        return Poly3(out)

    def transverse_taylor_disk_integral(self, edge, k, x, h):
        """int of the degree-k transverse slice over the disk of radius h(x)."""
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        sl = self.transverse_taylor(edge, k)
        out = np.zeros(np.broadcast(x, h).shape)
        for (pi, pa, pb), c in sl.terms():
            out += c * x ** pi * disk_monomial_integral(pa, pb, 1.0) * h ** (pa + pb + 2)
        return out

    @property
    def total_degree(self):
        return self.poly.total_degree

    def to_json(self):
        return {"terms": [{"powers": [int(p) for p in pw], "coef": float(c)}
                          for pw, c in self.poly.terms()]}


class LateralLoad:
    """Polynomial lateral Neumann load phi_i(x_i, xi_a, xi_b) for one edge.

    The transverse arguments are the scaled cross-section coordinates; the
    load is only ever evaluated on circles |xi| = h_i(x_i).
    """

    def __init__(self, poly: Poly3):
        self.poly = poly

    @classmethod
    def zero(cls):
        return cls(Poly3.zero())

    @classmethod
    def from_terms(cls, terms):
        return cls(Poly3.from_terms(terms))

    def __call__(self, x, ta, tb):
        return self.poly(x, ta, tb)

    def is_zero(self):
        return not self.poly.terms()

    def x_deriv(self, q=1):
        return LateralLoad(self.poly.deriv(0, q))

    def circle_integral(self, x, h):
        """oint phi(x, .) dl over the circle of radius h (vectorized in x)."""
        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        out = np.zeros(np.broadcast(x, h).shape)
        for (pi, pa, pb), c in self.poly.terms():
            out += c * x ** pi * circle_monomial_integral(pa, pb, 1.0) * h ** (pa + pb + 1)
        return out

    def circle_modes(self, x, h, nmax):
        """Harmonic expansion of theta -> phi(x, h cos, h sin).

        Returns (a, b): a[0] + sum a[n] cos(n theta) + b[n] sin(n theta),
        arrays of shape (nmax+1,).  Scalar x only.
        """
        a = np.zeros(nmax + 1)
        b = np.zeros(nmax + 1)
        for (pi, pa, pb), c in self.poly.terms():
            ca, cb = trig_power_modes(pa, pb)
            w = c * float(x) ** pi * float(h) ** (pa + pb)
            n = min(nmax, pa + pb)
            a[: n + 1] += w * ca[: n + 1]
            b[: n + 1] += w * cb[: n + 1]
        return a, b

    @property
    def max_harmonic(self):
        return max((pa + pb for (_, pa, pb), _ in self.poly.terms()), default=0)

    def to_json(self):
        if self.is_zero():
            return None
        return {"terms": [{"powers": [int(p) for p in pw], "coef": float(c)}
                          for pw, c in self.poly.terms()]}


@dataclass
class AneurysmShape:
    """Bulge geometry: the open box (-ell, ell)^3 in stretched coordinates."""

    ell: float
    kind: str = "box"

    def volume(self):
        return 8.0 * self.ell ** 3

    def monomial_integral(self, powers):
        return box_monomial_integral(powers, self.ell)

    def poly_integral(self, p: Poly3):
        return sum(c * box_monomial_integral(pw, self.ell) for pw, c in p.terms())

    def to_json(self):
        return {"type": self.kind}


@dataclass
class ProblemSpec:
    """Complete problem description (geometry + data + expansion controls)."""

    epsilon: float
    ell: float
    alpha: float
    delta_cut: float
    order: int
    h: tuple
    f: SourceField
    phi: tuple
    aneurysm: AneurysmShape = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.ell < 1.0 / 3.0:
            raise ValueError("ell must lie in (0, 1/3)")
        if not 2.0 / 3.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (2/3, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.delta_cut < 0.5:
            raise ValueError("delta_cut must lie in (0, 1/2)")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if len(self.h) != 3 or len(self.phi) != 3:
            raise ValueError("need three radius profiles and three lateral loads")
        if self.aneurysm is None:
            self.aneurysm = AneurysmShape(self.ell)

    def check_attachable(self):
        """Geometric fit of the tubes on the bulge faces (needed for meshes)."""
        for prof in self.h:
            if prof.value0 >= self.ell:
                raise ValueError("attachment disks must fit in the bulge face: "
                                 "h_i(0) < ell")

    def h0(self, edge):
        return self.h[edge].value0

    def to_json(self):
        return {
            "schema": 1,
            "epsilon": self.epsilon,
            "ell": self.ell,
            "alpha": self.alpha,
            "delta_cut": self.delta_cut,
            "order": self.order,
            "h": [p.to_json() for p in self.h],
            "f": self.f.to_json(),
            "phi": [p.to_json() for p in self.phi],
            "aneurysm": self.aneurysm.to_json(),
        }


def _radius_from_json(entry):
    if isinstance(entry, (int, float)):
        return RadiusProfile.constant(float(entry))
    return RadiusProfile(entry["breakpoints"], entry["pieces"])


def _load_from_json(entry):
    if entry in (None, 0, 0.0):
        return LateralLoad.zero()
    return LateralLoad.from_terms(
        [(t["powers"], t["coef"]) for t in entry["terms"]])


def load_spec(source):
    """Build a ProblemSpec from a JSON file path, JSON text, or a dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        try:
            with open(source, "r") as fh:
                text = fh.read()
        except (OSError, TypeError):
            text = source
        doc = json.loads(text)
    if doc.get("schema") != 1:
        raise ValueError("unsupported problem-file schema")
    f = SourceField.from_terms(
        [(t["powers"], t["coef"]) for t in doc["f"]["terms"]])
    aneurysm = doc.get("aneurysm", {"type": "box"})
    if aneurysm.get("type", "box") != "box":
        raise ValueError("only the box bulge shape is supported")
    return ProblemSpec(
        epsilon=float(doc["epsilon"]),
        ell=float(doc["ell"]),
        alpha=float(doc["alpha"]),
        delta_cut=float(doc.get("delta_cut", 0.1)),
        order=int(doc.get("order", 2)),
        h=tuple(_radius_from_json(e) for e in doc["h"]),
        f=f,
        phi=tuple(_load_from_json(e) for e in doc["phi"]),
        aneurysm=AneurysmShape(float(doc["ell"])),
    )


def taylor_source_axis(f: SourceField, edge, k):
    """Degree-k transverse Taylor slice of the source about the axis of ``edge``."""
    return f.transverse_taylor(edge, k)
