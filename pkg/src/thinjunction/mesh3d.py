"""Tetrahedral meshes for the junction body and the thin physical domain.

Both domains are a cube with up to three circular openings continued by
straight or radius-profiled tubes.  Each cube face is meshed as a
structured polar disk blended outward into the square rim, so the three
tube openings share their triangulation with the cube surface and the
whole mesh is conforming by construction.  The cube interior is filled
with scaled copies of its surface (onion shells), tubes are extruded
station by station, and every prism is cut into three tetrahedra with
the min-vertex rule so neighbouring prisms agree on quad diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import TRANSVERSE_AXES, ProblemSpec

_KEY_SCALE = 1e10

# Relabelings that bring the minimal global vertex of a prism
# (b0,b1,b2,t0,t1,t2) to slot 0 while preserving the vertical pairing.
_PRISM_PERMS = np.array([
    [0, 1, 2, 3, 4, 5],
    [1, 2, 0, 4, 5, 3],
    [2, 0, 1, 5, 3, 4],
    [3, 4, 5, 0, 1, 2],
    [4, 5, 3, 1, 2, 0],
    [5, 3, 4, 2, 0, 1],
], dtype=np.int64)

_TET_PATTERN_A = np.array([[0, 1, 2, 5], [0, 1, 5, 4], [0, 4, 5, 3]])
_TET_PATTERN_B = np.array([[0, 1, 2, 4], [0, 4, 2, 5], [0, 4, 5, 3]])


@dataclass
class Station:
    """One tube cross-section: axial position and its disk node ids."""

    x: float
    nodes: np.ndarray


@dataclass
class TetMesh:
    """Conforming tetrahedral mesh with tagged boundary triangles.

    ``stations[edge]`` lists tube cross-sections in axial order; their
    node arrays follow the layout of ``disk_tris`` so cross-section
    integrals reuse one template triangulation.
    """

    nodes: np.ndarray
    tets: np.ndarray
    boundary: dict
    stations: dict
    disk_tris: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_tets(self):
        return self.tets.shape[0]

    def tet_volumes(self):
        x = self.nodes[self.tets]
        m = x[:, 1:] - x[:, :1]
        return np.linalg.det(m) / 6.0

    def volume(self):
        return float(self.tet_volumes().sum())

    def boundary_area(self, tag):
        tri = self.boundary[tag]
        p = self.nodes[tri]
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return float(0.5 * np.linalg.norm(n, axis=1).sum())


class _NodePool:
    """Deduplicating node store keyed by rounded coordinates."""

    def __init__(self):
        self._chunks = []
        self._lookup = {}
        self._count = 0

    def add(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        keys = np.round(pts * _KEY_SCALE).astype(np.int64)
        ids = np.empty(pts.shape[0], dtype=np.int64)
        fresh = []
        for row, key in enumerate(map(tuple, keys)):
            idx = self._lookup.get(key)
            if idx is None:
                idx = self._count
                self._lookup[key] = idx
                self._count += 1
                fresh.append(pts[row])
            ids[row] = idx
        if fresh:
            self._chunks.append(np.array(fresh))
        return ids

    def coords(self):
        if not self._chunks:
            return np.zeros((0, 3))
        return np.concatenate(self._chunks, axis=0)


def split_prisms(bottom, top):
    """Cut prisms into tets, consistently across shared quad faces.

    Every quad face receives the diagonal through its smallest global
    vertex id, which neighbouring prisms pick identically.
    """

    prisms = np.concatenate([bottom, top], axis=1).astype(np.int64)
    order = _PRISM_PERMS[np.argmin(prisms, axis=1)]
    v = np.take_along_axis(prisms, order, axis=1)
    use_a = np.minimum(v[:, 1], v[:, 5]) < np.minimum(v[:, 2], v[:, 4])
    tets = np.where(use_a[:, None, None],
                    v[:, _TET_PATTERN_A], v[:, _TET_PATTERN_B])
    return tets.reshape(-1, 4)


def _orient_tets(nodes, tets):
    x = nodes[tets]
    vol = np.linalg.det(x[:, 1:] - x[:, :1])
    flip = vol < 0
    if np.any(flip):
        tets = tets.copy()
        tets[flip, 0], tets[flip, 1] = tets[flip, 1], tets[flip, 0]
    return tets


def disk_layout(rings, segments):
    """Unit-disk template: node offsets and triangles, center first."""

    theta = 2.0 * math.pi * np.arange(segments) / segments
    ring_uv = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    uv = [np.zeros((1, 2))]
    for j in range(1, rings + 1):
        uv.append(ring_uv * (j / rings))
    uv = np.concatenate(uv, axis=0)
    tris = _ring_triangles(rings, segments)
    return uv, tris


def _ring_triangles(rings, segments):
    tris = []
    nxt = np.roll(np.arange(segments), -1)
    first = 1 + np.arange(segments)
    for m in range(segments):
        tris.append([0, first[m], first[nxt[m]]])
    for j in range(1, rings):
        a = 1 + (j - 1) * segments + np.arange(segments)
        b = 1 + (j - 1) * segments + nxt
        c = 1 + j * segments + nxt
        d = 1 + j * segments + np.arange(segments)
        for m in range(segments):
            tris.append([a[m], b[m], c[m]])
            tris.append([a[m], c[m], d[m]])
    return np.array(tris, dtype=np.int64)


def _square_rim(theta, half):
    c, s = np.cos(theta), np.sin(theta)
    denom = np.maximum(np.abs(c), np.abs(s))
    return np.stack([c / denom, s / denom], axis=1) * half


def face_layout(half, radius, rings, blend, segments):
    """Cube-face template: polar disk continued into the square rim.

    Returns in-plane points (disk nodes first) and the triangulation of
    the whole face; the first ``1 + rings*segments`` nodes are the tube
    opening in ``disk_layout`` order.
    """

    theta = 2.0 * math.pi * np.arange(segments) / segments
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1) * radius
    rim = _square_rim(theta, half)
    uv_disk, _ = disk_layout(rings, segments)
    pts = [uv_disk * radius]
    for t in range(1, blend + 1):
        s = t / blend
        pts.append((1.0 - s) * circle + s * rim)
    pts = np.concatenate(pts, axis=0)
    tris = _ring_triangles(rings + blend, segments)
    return pts, tris


def _face_to_space(uv, axis, sign, half):
    a, b = TRANSVERSE_AXES[axis]
    out = np.empty((uv.shape[0], 3))
    out[:, axis] = sign * half
    out[:, a] = uv[:, 0]
    out[:, b] = uv[:, 1]
    return out


def _tube_section(uv_disk, axis, x, radius):
    a, b = TRANSVERSE_AXES[axis]
    out = np.empty((uv_disk.shape[0], 3))
    out[:, axis] = x
    out[:, a] = uv_disk[:, 0] * radius
    out[:, b] = uv_disk[:, 1] * radius
    return out


def graded_stations(start, end, fine, fine_until, growth=1.3, cap=None):
    """Axial stations: uniform ``fine`` spacing, then geometric growth."""

    cap = cap if cap is not None else 5.0 * fine
    xs = [start]
    step = fine
    while xs[-1] < end - 0.5 * step:
        if xs[-1] >= fine_until:
            step = min(step * growth, cap)
        xs.append(min(xs[-1] + step, end))
    xs[-1] = end
    return np.array(xs)


def snap_stations(xs, forced, tol_frac=0.45):
    """Move the nearest station onto each forced plane within the span."""

    xs = np.array(xs, dtype=float)
    for xf in forced:
        if xf <= xs[0] or xf >= xs[-1]:
            continue
        k = int(np.argmin(np.abs(xs - xf)))
        if k == 0 or k == xs.size - 1:
            continue
        gap = min(xs[k + 1] - xs[k], xs[k] - xs[k - 1])
        if abs(xs[k] - xf) <= tol_frac * gap:
            xs[k] = xf
        else:
            xs = np.sort(np.append(xs, xf))
    return xs


class _DomainBuilder:
    """Cube with tagged tube openings, filled and extruded."""

    def __init__(self, half, radii, rings, blend, segments, shells):
        self.half = half
        self.radii = radii
        self.rings = rings
        self.blend = blend
        self.segments = segments
        self.shells = shells
        self.pool = _NodePool()
        self.tets = []
        self.stations = {}
        self.uv_disk, self.disk_tris = disk_layout(rings, segments)
        self.n_disk = self.uv_disk.shape[0]
        self._face_ids = {}
        self._build_box()

    def _build_box(self):
        surf_tris = []
        for axis in range(3):
            for sign in (1, -1):
                radius = self.radii[axis] if sign > 0 else 0.5 * self.half
                uv, tris = face_layout(self.half, radius, self.rings,
                                       self.blend, self.segments)
                ids = self.pool.add(_face_to_space(uv, axis, sign, self.half))
                surf_tris.append(ids[tris])
                if sign > 0:
                    self._face_ids[axis] = ids
        surf_tris = np.concatenate(surf_tris, axis=0)
        surf_ids = np.unique(surf_tris)
        local = np.full(int(surf_ids.max()) + 1, -1, dtype=np.int64)
        local[surf_ids] = np.arange(surf_ids.size)
        tris_local = local[surf_tris]
        coords = self.pool.coords()[surf_ids]

        shell_ids = [surf_ids]
        for t in range(1, self.shells):
            tau = 1.0 - t / self.shells
            shell_ids.append(self.pool.add(coords * tau))
        center = self.pool.add(np.zeros((1, 3)))[0]

        for t in range(self.shells - 1):
            bot = shell_ids[t][tris_local]
            top = shell_ids[t + 1][tris_local]
            self.tets.append(split_prisms(bot, top))
        inner = shell_ids[-1][tris_local]
        cone = np.concatenate(
            [inner, np.full((inner.shape[0], 1), center, dtype=np.int64)],
            axis=1)
        self.tets.append(cone)

    def extrude_tube(self, axis, xs, radius_fn):
        ids = self._face_ids[axis][:self.n_disk]
        self.stations[axis] = [Station(float(xs[0]), ids)]
        prev = ids
        for x in xs[1:]:
            pts = _tube_section(self.uv_disk, axis, float(x),
                                float(radius_fn(float(x))))
            cur = self.pool.add(pts)
            self.tets.append(split_prisms(prev[self.disk_tris],
                                          cur[self.disk_tris]))
            self.stations[axis].append(Station(float(x), cur))
            prev = cur

    def finish(self, end_planes, meta):
        nodes = self.pool.coords()
        tets = _orient_tets(nodes, np.concatenate(self.tets, axis=0))
        boundary = _classify_boundary(nodes, tets, self.half, end_planes)
        return TetMesh(nodes=nodes, tets=tets.astype(np.int32),
                       boundary=boundary, stations=self.stations,
                       disk_tris=self.disk_tris, meta=meta)


def _boundary_faces(tets):
    faces = np.concatenate([
        tets[:, [1, 2, 3]], tets[:, [0, 3, 2]],
        tets[:, [0, 1, 3]], tets[:, [0, 2, 1]]], axis=0)
    key = np.sort(faces, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True,
                               return_counts=True)
    return faces[counts[inv] == 1]

def _classify_boundary(nodes, tets, half, end_planes):
    faces = _boundary_faces(tets)
    cent = nodes[faces].mean(axis=1)
    tags = {}
    assigned = np.zeros(faces.shape[0], dtype=bool)
    tol = 1e-9 * max(1.0, half)
    for axis, x_end in end_planes.items():
        on_end = np.abs(cent[:, axis] - x_end) < tol
        tags[f"end_{axis}"] = faces[on_end]
        assigned |= on_end
        lateral = (~assigned) & (cent[:, axis] > half + tol)
        tags[f"lateral_{axis}"] = faces[lateral]
        assigned |= lateral
    tags["wall"] = faces[~assigned]
    return tags


def _layout_params(refine):
    segments = 8 * max(3, round(6.0 * refine))
    rings = max(3, round(4.0 * refine))
    blend = max(2, round(3.0 * refine))
    shells = rings + blend
    return segments, rings, blend, shells


def build_junction_mesh(spec: ProblemSpec, R=None, refine=None):
    """Mesh the truncated junction body in the fast variables.

    The truncation radius doubles as the accuracy dial: extending the
    tubes is only useful together with a denser mesh, so the default
    refinement grows with ``R`` and both error sources shrink at once.
    """

    spec.check_attachable()
    ell = spec.ell
    R = ell + 6.0 if R is None else float(R)
    if R <= ell + 3.0:
        raise ValueError("truncation too short: need R > ell + 3")
    if refine is None:
        refine = max(1.0, ((R - ell) / 6.0) ** 1.5)
    segments, rings, blend, shells = _layout_params(refine)
    radii = [spec.h0(i) for i in range(3)]
    builder = _DomainBuilder(ell, radii, rings, blend, segments, shells)
    for axis in range(3):
        fine = radii[axis] / 5.0 / refine
        xs = graded_stations(ell, R, fine, ell + 2.5,
                             cap=radii[axis] / refine)
        xs = snap_stations(xs, [ell + 1.0, ell + 2.0, ell + 2.5])
        builder.extrude_tube(axis, xs, lambda _x, r=radii[axis]: r)
    meta = {"R": R, "refine": refine, "segments": segments,
            "rings": rings, "blend": blend, "shells": shells}
    return builder.finish({0: R, 1: R, 2: R}, meta)


def build_thin_mesh(spec: ProblemSpec, axial=0.02, refine=1.0):
    """Mesh the physical domain: scaled cube bulge plus three tubes."""

    spec.check_attachable()
    eps, ell = spec.epsilon, spec.ell
    half = eps * ell
    segments, rings, blend, shells = _layout_params(refine)
    radii = [eps * spec.h0(i) for i in range(3)]
    builder = _DomainBuilder(half, radii, rings, blend, segments, shells)
    alpha_lo = 2.0 * ell * eps ** spec.alpha
    alpha_hi = 3.0 * ell * eps ** spec.alpha
    for axis in range(3):
        fine = radii[axis] / 5.0 / refine
        xs = graded_stations(half, 1.0, fine, half + 10.0 * fine,
                             cap=axial / refine)
        forced = [alpha_lo, alpha_hi, 1.0 - 2.0 * spec.delta_cut,
                  1.0 - spec.delta_cut]
        forced += [float(b) for b in spec.h[axis].breakpoints[1:-1]]
        xs = snap_stations(xs, sorted(forced))
        builder.extrude_tube(
            axis, xs, lambda x, a=axis: eps * spec.h[a](x))
    meta = {"epsilon": eps, "axial": axial, "refine": refine,
            "segments": segments, "rings": rings, "blend": blend}
    return builder.finish({0: 1.0, 1: 1.0, 2: 1.0}, meta)


def build_tube_mesh(radius, length, axial, refine=1.0, radius_fn=None):
    """Straight test tube along the first axis, both end disks tagged."""

    segments, rings, _, _ = _layout_params(refine)
    uv, disk_tris = disk_layout(rings, segments)
    pool = _NodePool()
    xs = np.arange(0.0, length + 0.5 * axial, axial)
    xs[-1] = length
    rfn = radius_fn if radius_fn is not None else (lambda _x: radius)
    stations = []
    tets = []
    prev = None
    for x in xs:
        ids = pool.add(_tube_section(uv, 0, float(x), float(rfn(float(x)))))
        stations.append(Station(float(x), ids))
        if prev is not None:
            tets.append(split_prisms(prev[disk_tris], ids[disk_tris]))
        prev = ids
    nodes = pool.coords()
    tets = _orient_tets(nodes, np.concatenate(tets, axis=0))
    faces = _boundary_faces(tets)
    cent = nodes[faces].mean(axis=1)
    tol = 1e-9 * max(1.0, length)
    at_0 = np.abs(cent[:, 0]) < tol
    at_l = np.abs(cent[:, 0] - length) < tol
    boundary = {"end_a": faces[at_0], "end_b": faces[at_l],
                "lateral_0": faces[~(at_0 | at_l)]}
    return TetMesh(nodes=nodes, tets=tets.astype(np.int32),
                   boundary=boundary, stations={0: stations},
                   disk_tris=disk_tris,
                   meta={"radius": radius, "length": length, "axial": axial})


def export_vtk(mesh: TetMesh, path, fields=None):
    """Write the mesh and optional vertex fields as legacy-VTK ASCII."""

    with open(path, "w", encoding="ascii") as out:
        out.write("# vtk DataFile Version 3.0\nthinjunction field\n")
        out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        out.write(f"POINTS {mesh.num_nodes} double\n")
        np.savetxt(out, mesh.nodes, fmt="%.12g")
        out.write(f"CELLS {mesh.num_tets} {5 * mesh.num_tets}\n")
        cells = np.concatenate(
            [np.full((mesh.num_tets, 1), 4, dtype=np.int64),
             mesh.tets.astype(np.int64)], axis=1)
        np.savetxt(out, cells, fmt="%d")
        out.write(f"CELL_TYPES {mesh.num_tets}\n")
        np.savetxt(out, np.full(mesh.num_tets, 10, dtype=np.int64), fmt="%d")
        if fields:
            out.write(f"POINT_DATA {mesh.num_nodes}\n")
            for name, values in fields.items():
                out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(out, np.asarray(values, dtype=float), fmt="%.12g")
