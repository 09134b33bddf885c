"""Triangle-mesh ingestion and surface sampling.

Parses a Wavefront OBJ subset, derives the sensor-driven FLS count from
the mesh area, and samples the surface into a blue-noise point cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PlanError, PointCloud, SensorSpec


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (nv, 3)
    faces: np.ndarray  # (nf, 3) vertex indices
    face_normals: np.ndarray  # (nf, 3) unit normals
    dropped_degenerate: int = 0

    @property
    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())


@dataclass(frozen=True)
class DensityBounds:
    """Min/max FLS surface density and the resulting count window."""

    d_min: float  # FLSs per mm^2
    d_max: float
    n_min: int
    n_max: int


def parse_obj(text) -> TriangleMesh:
    """Parse a Wavefront OBJ subset: `v` and `f` records only.

    Polygon faces with more than 3 vertices are fan-triangulated.
    Degenerate (zero-area) triangles are dropped; the count of dropped
    faces is recorded on the mesh.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    vertices = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: vertex needs 3 coordinates: {raw!r}")
            try:
                vertices.append([float(p) for p in parts[1:4]])
            except ValueError:
                raise MeshError(f"line {lineno}: bad vertex coordinate: {raw!r}") from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshError(f"line {lineno}: face needs at least 3 vertices: {raw!r}")
            idx = []
            for p in parts[1:]:
                # accept v, v/t, v//n, v/t/n references
                tok = p.split("/")[0]
                try:
                    i = int(tok)
                except ValueError:
                    raise MeshError(f"line {lineno}: bad face index {p!r}") from None
                # OBJ indices are 1-based; negatives count from the end
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):
                faces.append((lineno, idx[0], idx[k], idx[k + 1]))
        # all other record types (vn, vt, mtllib, o, g, s, ...) are ignored

    if not vertices:
        raise MeshError("mesh has no vertices")
    if not faces:
        raise MeshError("mesh has no faces")
    verts = np.array(vertices, dtype=float)
    nv = len(verts)
    tri = []
    for lineno, a, b, c in faces:
        for i in (a, b, c):
            if not (0 <= i < nv):
                raise MeshError(f"line {lineno}: vertex index {i + 1} out of range (1..{nv})")
        tri.append((a, b, c))
    tri = np.array(tri, dtype=int)

    normals = np.cross(verts[tri[:, 1]] - verts[tri[:, 0]], verts[tri[:, 2]] - verts[tri[:, 0]])
    areas = 0.5 * np.linalg.norm(normals, axis=1)
    keep = areas > 0.0
    dropped = int((~keep).sum())
    tri = tri[keep]
    normals = normals[keep]
    if len(tri) == 0:
        raise MeshError("mesh has no non-degenerate faces")
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    return TriangleMesh(verts, tri, normals, dropped_degenerate=dropped)


def density_bounds(spec: SensorSpec, total_area: float) -> DensityBounds:
    """FLS density window implied by the sensor range and body radius.

    The lower density packs FLSs at the maximum usable tracking distance,
    the upper at the minimum; the body radius caps how densely they can
    pack regardless of range.
    """
    if total_area <= 0:
        raise PlanError(f"total_area must be positive, got {total_area}")
    if spec.radius_r > spec.t_max:
        raise PlanError(
            f"body radius {spec.radius_r} exceeds t_max {spec.t_max}; "
            "density formula requires radius_r <= t_max"
        )
    d_min = 1.0 / (math.pi * max(spec.t_max / 2.0, spec.radius_r) ** 2)
    d_max = 1.0 / (math.pi * max(spec.t_min / 2.0, spec.radius_r) ** 2)
    n_min = math.ceil(d_min * total_area)
    n_max = math.floor(d_max * total_area)
    n_min = min(n_min, n_max)
    return DensityBounds(d_min=d_min, d_max=d_max, n_min=n_min, n_max=max(n_min, n_max))


class _Grid3:
    """Uniform hash grid for rejection-radius queries during sampling."""

    def __init__(self, cell: float):
        self.cell = cell
        self.cells: dict = {}

    def _key(self, p):
        return (int(p[0] // self.cell), int(p[1] // self.cell), int(p[2] // self.cell))

    def near(self, p, r: float) -> bool:
        kx, ky, kz = self._key(p)
        reach = int(math.ceil(r / self.cell))
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for dz in range(-reach, reach + 1):
                    for q in self.cells.get((kx + dx, ky + dy, kz + dz), ()):
                        if np.dot(p - q, p - q) < r * r:
                            return True
        return False

    def add(self, p):
        self.cells.setdefault(self._key(p), []).append(p)


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Sample exactly n blue-noise points on a mesh surface.

    Dart throwing with rejection radius 0.6 * sqrt(area / (n * pi)) and
    area-weighted face selection.  If n darts cannot be placed after
    bounded retries, the radius is relaxed in 5% steps; the relaxation
    count is stored on the returned cloud as ``relaxations``.
    """
    if n < 1:
        raise PlanError(f"need n >= 1, got {n}")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    probs = areas / areas.sum()
    r = 0.6 * math.sqrt(mesh.total_area / (n * math.pi))

    relaxations = 0
    while True:
        grid = _Grid3(max(r, 1e-9))
        pts = []
        face_of = []
        budget = 200 * n + 1000
        while len(pts) < n and budget > 0:
            budget -= 1
            f = int(rng.choice(len(areas), p=probs))
            u, v = rng.random(), rng.random()
            r1 = math.sqrt(u)
            a, b, c = mesh.vertices[mesh.faces[f]]
            p = (1 - r1) * a + r1 * (1 - v) * b + r1 * v * c
            if r > 0 and grid.near(p, r):
                continue
            grid.add(p)
            pts.append(p)
            face_of.append(f)
        if len(pts) == n:
            break
        relaxations += 1
        r *= 0.95

    cloud = PointCloud(np.array(pts), mesh.face_normals[face_of])
    cloud.relaxations = relaxations
    cloud.min_radius = r
    return cloud


# ---------------------------------------------------------------------------
# Synthetic shapes used by the CLI examples and the test suite.


def box_mesh(lx: float, ly: float, lz: float) -> TriangleMesh:
    """Axis-aligned box with corner at the origin, 12 triangles."""
    obj = _box_obj(lx, ly, lz)
    return parse_obj(obj)


def _box_obj(lx: float, ly: float, lz: float) -> str:
    v = [
        (0, 0, 0), (lx, 0, 0), (lx, ly, 0), (0, ly, 0),
        (0, 0, lz), (lx, 0, lz), (lx, ly, lz), (0, ly, lz),
    ]
    quads = [
        (1, 4, 3, 2),  # bottom (z=0), outward -z
        (5, 6, 7, 8),  # top
        (1, 2, 6, 5),  # y=0 side
        (2, 3, 7, 6),  # x=lx side
        (3, 4, 8, 7),  # y=ly side
        (4, 1, 5, 8),  # x=0 side
    ]
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in v]
    lines += [f"f {a} {b} {c} {d}" for a, b, c, d in quads]
    return "\n".join(lines) + "\n"


def skateboard_obj(length: float = 1000.0, width: float = 250.0, height: float = 60.0) -> str:
    """Elongated flat box: the side faces dominate the silhouette the way
    a skateboard deck does, which makes side-mounted sensors dominate the
    planner's mix."""
    return _box_obj(length, width, height)
