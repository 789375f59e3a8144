"""Triangle meshes, primitive builders and exact point-to-triangle distances."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import trimesh
from trimesh.transformations import rotation_matrix, translation_matrix

from src.errors import DataError

DEGENERATE_AREA = 1e-10


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise DataError(f"triangle index out of range for {len(vertices)} vertices")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @classmethod
    def empty(cls) -> "TriMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def from_trimesh(cls, mesh: trimesh.Trimesh) -> "TriMesh":
        return cls(np.array(mesh.vertices, dtype=np.float64), np.array(mesh.faces, dtype=np.int64))

    def to_trimesh(self) -> trimesh.Trimesh:
        return trimesh.Trimesh(vertices=self.vertices, faces=self.triangles, process=False)

    def __len__(self):
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def corners(self) -> np.ndarray:
        """Per-triangle corner positions, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def areas(self) -> np.ndarray:
        tri = self.corners()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def cleaned(self, min_area: float = DEGENERATE_AREA) -> "TriMesh":
        """Drop zero-area triangles and unreferenced vertices."""
        triangles = self.triangles[self.areas() >= min_area] if len(self) else self.triangles
        used, remap = np.unique(triangles, return_inverse=True)
        return TriMesh(self.vertices[used], remap.reshape(-1, 3))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.vertices) == 0:
            raise DataError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, scale: float = 1.0, translation=(0.0, 0.0, 0.0), rotation=None) -> "TriMesh":
        vertices = self.vertices * scale
        if rotation is not None:
            vertices = vertices @ np.asarray(rotation).T
        return TriMesh(vertices + np.asarray(translation), self.triangles)

    def normalized(self, extent: float = 1.0) -> "TriMesh":
        """Centre on the bounding-box centre and scale the longest side to ``extent``."""
        lo, hi = self.bounds()
        return self.transformed(1.0, -(lo + hi) / 2).transformed(extent / float((hi - lo).max()))

    def edge_face_counts(self) -> np.ndarray:
        """Number of incident triangles for every undirected edge."""
        edges = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return counts


def merge(meshes: Iterable[TriMesh]) -> TriMesh:
    vertices, triangles, offset = [], [], 0
    for mesh in meshes:
        vertices.append(mesh.vertices)
        triangles.append(mesh.triangles + offset)
        offset += len(mesh.vertices)
    if not vertices:
        return TriMesh.empty()
    return TriMesh(np.concatenate(vertices), np.concatenate(triangles))


def box(center, size) -> TriMesh:
    """Axis-aligned box with outward-facing triangles."""
    return TriMesh.from_trimesh(trimesh.creation.box(extents=size, transform=translation_matrix(center)))


def revolve(profile, segments: int = 24, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Closed solid of revolution about +z from (radius, height) profile points, bottom to top.

    Zero radii at the ends collapse into poles; nonzero end radii are capped.
    """
    profile = np.asarray(profile, dtype=np.float64)
    angles = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    vertices, rings = [], []
    for radius, height in profile:
        start = sum(len(v) for v in vertices)
        if radius <= 0:
            vertices.append(np.array([[0.0, 0.0, height]]))
            rings.append(np.full(segments, start))
        else:
            vertices.append(np.column_stack([radius * ring, np.full(segments, height)]))
            rings.append(start + np.arange(segments))
    triangles = []
    nxt = np.roll(np.arange(segments), -1)
    for lower, upper in zip(rings[:-1], rings[1:]):
        triangles.append(np.column_stack([lower, lower[nxt], upper[nxt]]))
        triangles.append(np.column_stack([lower, upper[nxt], upper]))
    count = sum(len(v) for v in vertices)
    for ring_idx, height, flip in ((rings[0], profile[0, 1], True), (rings[-1], profile[-1, 1], False)):
        if len(np.unique(ring_idx)) == 1:
            continue
        vertices.append(np.array([[0.0, 0.0, height]]))
        cap = np.column_stack([np.full(segments, count), ring_idx[nxt], ring_idx])
        triangles.append(cap if flip else cap[:, [0, 2, 1]])
        count += 1
    mesh = TriMesh(np.concatenate(vertices) + np.asarray(center), np.concatenate(triangles))
    return mesh.cleaned()


def _axis_transform(center, axis: int) -> np.ndarray:
    """Translation to ``center`` after turning the +z axis onto ``axis``."""
    turn = {0: rotation_matrix(np.pi / 2, [0, 1, 0]), 1: rotation_matrix(-np.pi / 2, [1, 0, 0]), 2: np.eye(4)}
    if axis not in turn:
        raise DataError(f"axis must be 0, 1 or 2, got {axis}")
    return translation_matrix(center) @ turn[axis]


def cylinder(center, radius: float, height: float, segments: int = 16, axis: int = 2) -> TriMesh:
    mesh = trimesh.creation.cylinder(radius=radius, height=height, sections=segments,
                                     transform=_axis_transform(center, axis))
    return TriMesh.from_trimesh(mesh)


def ellipsoid(center, radii, segments: int = 16, rings: int = 8, axis: int = 2) -> TriMesh:
    """Unit sphere of revolution with its poles on ``axis``, scaled per world axis by ``radii``."""
    theta = np.linspace(0.0, np.pi, rings + 1)
    profile = np.column_stack([np.sin(theta), -np.cos(theta)])
    profile[[0, -1], 0] = 0.0
    sphere = revolve(profile, segments).to_trimesh()
    sphere.apply_transform(_axis_transform((0.0, 0.0, 0.0), axis))
    sphere.apply_transform(np.diag(np.append(np.asarray(radii, dtype=np.float64), 1.0)))
    sphere.apply_translation(np.asarray(center, dtype=np.float64))
    return TriMesh.from_trimesh(sphere).cleaned()


def closest_points_on_triangle(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Closest point on one triangle (3, 3) for every query point (N, 3), by Voronoi region."""
    a, b, c = tri
    ab, ac = b - a, c - a
    ap = points - a
    d1, d2 = ap @ ab, ap @ ac
    bp = points - b
    d3, d4 = bp @ ab, bp @ ac
    cp = points - c
    d5, d6 = cp @ ab, cp @ ac

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    regions = [
        # lowest priority first; later regions overwrite earlier ones
        (np.ones_like(va, dtype=bool), None),
        ((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), "bc"),
        ((vb <= 0) & (d2 >= 0) & (d6 <= 0), "ac"),
        ((d6 >= 0) & (d5 <= d6), "c"),
        ((vc <= 0) & (d1 >= 0) & (d3 <= 0), "ab"),
        ((d3 >= 0) & (d4 <= d3), "b"),
        ((d1 <= 0) & (d2 <= 0), "a"),
    ]
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = {
            None: a + (vb / (va + vb + vc))[:, None] * ab + (vc / (va + vb + vc))[:, None] * ac,
            "bc": b + ((d4 - d3) / ((d4 - d3) + (d5 - d6)))[:, None] * (c - b),
            "ac": a + (d2 / (d2 - d6))[:, None] * ac,
            "ab": a + (d1 / (d1 - d3))[:, None] * ab,
            "a": np.broadcast_to(a, points.shape),
            "b": np.broadcast_to(b, points.shape),
            "c": np.broadcast_to(c, points.shape),
        }
    out = np.empty_like(points, dtype=np.float64)
    for mask, region in regions:
        out[mask] = candidates[region][mask]
    return out


def point_triangle_distance(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.linalg.norm(points - closest_points_on_triangle(points, np.asarray(tri, dtype=np.float64)), axis=1)


def point_mesh_distance(points: np.ndarray, mesh: TriMesh) -> np.ndarray:
    """Brute-force minimum over all triangles."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    best = np.full(len(points), np.inf)
    for tri in mesh.corners():
        np.minimum(best, point_triangle_distance(points, tri), out=best)
    return best
