"""Virtual range scanner: pinhole cameras, ray-cast depth maps and random trajectories.

Camera frame: x right, y down, z forward. Pixel ``(u, v)`` has its centre at
image coordinate ``(u, v)``, so with the default principal point the pixel
``(width // 2, height // 2)`` looks straight down the optical axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence

import numpy as np

from src.dataset.mesh import TriMesh
from src.errors import DataError, EmptyInputError, MissingArtifactError

DEFAULT_WIDTH = 320
DEFAULT_HEIGHT = 240
DEFAULT_FOCAL = 285.0
DEFAULT_FAR = 10.0
NEAR_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class Camera:
    rotation: np.ndarray
    translation: np.ndarray
    fx: float = DEFAULT_FOCAL
    fy: float = DEFAULT_FOCAL
    cx: float = DEFAULT_WIDTH / 2
    cy: float = DEFAULT_HEIGHT / 2
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    far: float = DEFAULT_FAR

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        if np.abs(rotation.T @ rotation - np.eye(3)).max() >= 1e-5:
            raise DataError("camera rotation is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise DataError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    @property
    def forward(self) -> np.ndarray:
        return self.rotation[2]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.translation) @ self.rotation

    def project(self, cam_points: np.ndarray) -> np.ndarray:
        """Continuous pixel coordinates (u, v) of camera-space points."""
        z = cam_points[..., 2]
        return np.stack([self.fx * cam_points[..., 0] / z + self.cx, self.fy * cam_points[..., 1] / z + self.cy], axis=-1)

    def intrinsics(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])


@dataclass(frozen=True, eq=False)
class DepthFrame:
    camera: Camera
    depth: np.ndarray = field(repr=False)

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float32)
        if depth.shape != (self.camera.height, self.camera.width):
            raise DataError(f"depth shape {depth.shape} does not match camera {self.camera.height}x{self.camera.width}")
        if depth.min(initial=0) < 0 or depth.max(initial=0) > self.camera.far:
            raise DataError("depth values must lie in [0, far]")
        object.__setattr__(self, "depth", depth)


def look_at(eye, target, up=(0.0, 0.0, 1.0), **intrinsics) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    if np.linalg.norm(np.cross(forward, up)) < 1e-6:
        up = np.array([0.0, 1.0, 0.0]) if abs(forward[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return Camera(rotation, -rotation @ eye, **intrinsics)


def _ray_triangle_depth(dirs: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Moller-Trumbore from the camera origin; ``dirs`` have unit z so t is the camera depth."""
    e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
    p = np.cross(dirs, e2)
    det = p @ e1
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        s = -tri[0]
        u = (p @ s) * inv
        q = np.cross(s, e1)
        v = (dirs @ q) * inv
        t = (e2 @ q) * inv
    hit = (np.abs(det) > 1e-12) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > NEAR_EPS)
    return np.where(hit, t, np.inf)


def render_depth(mesh: TriMesh, camera: Camera) -> DepthFrame:
    """Ray cast every pixel centre against the mesh; nearest hit's camera z, 0 where nothing is hit."""
    if mesh.is_empty:
        raise EmptyInputError("cannot render an empty mesh")
    h, w = camera.height, camera.width
    depth = np.full((h, w), np.inf)
    tris = camera.world_to_camera(mesh.corners().reshape(-1, 3)).reshape(-1, 3, 3)
    z = tris[..., 2]
    visible = (z > NEAR_EPS).any(axis=1)
    full_frame = visible & ~(z > NEAR_EPS).all(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = camera.project(tris)

    for idx in np.flatnonzero(visible):
        if full_frame[idx]:
            u0, u1, v0, v1 = 0, w, 0, h
        else:
            lo, hi = pix[idx].min(axis=0), pix[idx].max(axis=0)
            u0, v0 = max(int(np.ceil(lo[0])), 0), max(int(np.ceil(lo[1])), 0)
            u1, v1 = min(int(np.floor(hi[0])) + 1, w), min(int(np.floor(hi[1])) + 1, h)
            if u0 >= u1 or v0 >= v1:
                continue
        uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
        dirs = np.stack([(uu - camera.cx) / camera.fx, (vv - camera.cy) / camera.fy, np.ones(uu.shape)], axis=-1)
        t = _ray_triangle_depth(dirs.reshape(-1, 3), tris[idx]).reshape(uu.shape)
        np.minimum(depth[v0:v1, u0:u1], t, out=depth[v0:v1, u0:u1])

    depth[~(depth <= camera.far)] = 0.0
    return DepthFrame(camera, depth)


def cast_through(mesh: TriMesh, camera: Camera, cam_points: np.ndarray) -> np.ndarray:
    """Camera depth of the first hit along the rays from the camera centre through ``cam_points``.

    Brute force over all triangles; ``inf`` where a ray hits nothing.
    """
    cam_points = np.asarray(cam_points, dtype=np.float64).reshape(-1, 3)
    dirs = cam_points / cam_points[:, 2:3]
    tris = camera.world_to_camera(mesh.corners().reshape(-1, 3)).reshape(-1, 3, 3)
    best = np.full(len(dirs), np.inf)
    for tri in tris:
        np.minimum(best, _ray_triangle_depth(dirs, tri), out=best)
    return best


def backproject(frame: DepthFrame) -> np.ndarray:
    """World-space points (N, 3) of every pixel with a nonzero depth."""
    cam = frame.camera
    v, u = np.nonzero(frame.depth > 0)
    d = frame.depth[v, u].astype(np.float64)
    points = np.stack([(u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d], axis=1)
    return cam.camera_to_world(points)


def gen_trajectory(seed: int, n_views: int, radius: float, center=(0.0, 0.0, 0.0), **intrinsics) -> List[Camera]:
    """``n_views`` cameras uniformly placed on a sphere around ``center``, all looking at it."""
    if n_views < 1:
        raise DataError(f"n_views must be >= 1, got {n_views}")
    rng = np.random.default_rng(seed)
    directions = rng.normal(size=(n_views, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    center = np.asarray(center, dtype=np.float64)
    return [look_at(center + radius * d, center, **intrinsics) for d in directions]


def dense_trajectory(radius: float, center=(0.0, 0.0, 0.0), **intrinsics) -> List[Camera]:
    """26 views from the face, edge and corner directions of a cube."""
    offsets = np.array([(x, y, z) for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1) if (x, y, z) != (0, 0, 0)], dtype=np.float64)
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    center = np.asarray(center, dtype=np.float64)
    return [look_at(center + radius * d, center, **intrinsics) for d in offsets]


def write_trajectory(cameras: Sequence[Camera], path) -> Path:
    """One camera per line: 9 rotation (row-major) + 3 translation + fx fy cx cy."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [np.concatenate([c.rotation.ravel(), c.translation, c.intrinsics()]) for c in cameras]
    np.savetxt(path, np.asarray(rows).reshape(-1, 16), fmt="%.17g")
    return path


def read_trajectory(path, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT, far: float = DEFAULT_FAR) -> List[Camera]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"trajectory file not found: {path}")
    rows = np.loadtxt(path, ndmin=2)
    if rows.shape[1] != 16:
        raise DataError(f"{path}: expected 16 numbers per camera, got {rows.shape[1]}")
    return [
        Camera(r[:9].reshape(3, 3), r[9:12], fx=r[12], fy=r[13], cx=r[14], cy=r[15], width=width, height=height, far=far)
        for r in rows
    ]
