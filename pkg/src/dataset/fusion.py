"""Volumetric fusion of depth frames and exact unsigned distance fields of meshes.

Sign convention of the fused TSDF: positive is known-empty space, zero the
observed surface, negative unknown. Never-observed voxels hold ``-truncation``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from src.dataset.mesh import TriMesh, point_triangle_distance
from src.dataset.scanner import NEAR_EPS, Camera, DepthFrame, cast_through, render_depth
from src.errors import DataError, EmptyInputError
from src.grid.traversal import traverse_segments, triangle_scanlines
from src.grid.voxel_grid import (
    DEFAULT_TRUNCATION,
    GridKind,
    GridMeta,
    TwoChannelGrid,
    VoxelGrid,
    split_channels,
)

logger = logging.getLogger(__name__)

GRID_MARGIN = 3
SCANLINE_SPACING = 0.5


@dataclass(frozen=True)
class FusionParams:
    meta: GridMeta
    truncation: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if self.truncation < 1.0:
            raise DataError(f"truncation must be at least one voxel, got {self.truncation}")


class _Observations:
    """Per-voxel running averages of clamped projective distances, kept apart by sign.

    A voxel is known once any view sees it at or in front of the surface, and
    then holds the average of those samples only, so later views can never turn
    it back to unknown. Voxels seen only behind the surface hold the average of
    their negative samples; voxels never seen hold ``-truncation``.
    """

    def __init__(self, size: int, truncation: float):
        self.truncation = truncation
        self.total = np.zeros((2, size))
        self.weight = np.zeros((2, size))

    def add(self, idx: np.ndarray, sdf: np.ndarray) -> None:
        use = sdf > -self.truncation
        idx, sdf = idx[use], np.minimum(sdf[use], self.truncation)
        side = (sdf >= 0).astype(np.int64)
        np.add.at(self.total, (side, idx), sdf)
        np.add.at(self.weight, (side, idx), 1.0)

    @property
    def known(self) -> np.ndarray:
        return self.weight[1] > 0

    def values(self) -> np.ndarray:
        values = np.full(self.total.shape[1], -self.truncation)
        for side, mask in ((0, (self.weight[0] > 0) & ~self.known), (1, self.known)):
            values[mask] = self.total[side, mask] / self.weight[side, mask]
        return values


def grid_meta_for_mesh(mesh: TriMesh, resolution: int = 32, margin: int = GRID_MARGIN) -> GridMeta:
    """Cubic grid around the mesh bounding box with ``margin`` empty voxels on every side."""
    lo, hi = mesh.bounds()
    extent = float((hi - lo).max())
    voxel_size = extent / (resolution - 2 * margin)
    origin = (lo + hi) / 2 - resolution / 2 * voxel_size
    return GridMeta((resolution,) * 3, voxel_size, tuple(origin))


def fuse_tsdf(frames: Sequence[DepthFrame], params: FusionParams) -> VoxelGrid:
    """Curless-Levoy style running average of truncated projective distances (voxel units)."""
    if not frames:
        raise EmptyInputError("fuse_tsdf needs at least one depth frame")
    meta, trunc = params.meta, params.truncation
    centers = meta.voxel_centers().reshape(-1, 3)
    observed = _Observations(len(centers), trunc)

    for frame in frames:
        cam = frame.camera
        pc = cam.world_to_camera(centers)
        z = pc[:, 2]
        front = np.flatnonzero(z > NEAR_EPS)
        uv = np.rint(cam.project(pc[front])).astype(np.int64)
        inside = (uv[:, 0] >= 0) & (uv[:, 0] < cam.width) & (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
        idx, uv = front[inside], uv[inside]
        depth = frame.depth[uv[:, 1], uv[:, 0]].astype(np.float64)
        hit = depth > 0
        observed.add(idx[hit], (depth[hit] - z[idx[hit]]) / meta.voxel_size)

    logger.debug("fused %d frames, %d/%d voxels known", len(frames), int(observed.known.sum()), len(centers))
    return VoxelGrid(meta, observed.values().reshape(meta.dims), GridKind.TSDF)


def mesh_to_df(mesh: TriMesh, meta: GridMeta, truncation: float = DEFAULT_TRUNCATION) -> VoxelGrid:
    """Exact unsigned distance (voxel units, clamped at ``truncation``) from voxel centres to the mesh.

    Triangles are rasterized into the cells they cross by voxel traversal of
    scanlines; the covered cells are dilated into a band that provably holds
    every voxel closer than ``truncation``, and only band voxels get exact
    point-triangle distances.
    """
    if mesh.is_empty:
        raise EmptyInputError("mesh_to_df needs a non-empty mesh")
    dims = np.asarray(meta.dims)
    tris = (mesh.corners() - np.asarray(meta.origin)) / meta.voxel_size

    starts, ends, _ = triangle_scanlines(tris, SCANLINE_SPACING)
    surface = traverse_segments(starts, ends, meta.dims)
    radius = int(np.floor(truncation + 0.5 + SCANLINE_SPACING / 2))
    band = ndimage.maximum_filter(surface, size=2 * radius + 1, mode="constant", cval=False)

    dist = np.full(meta.dims, np.inf)
    for tri in tris:
        lo = np.clip(np.floor(tri.min(axis=0) - truncation - 0.5).astype(np.int64), 0, dims)
        hi = np.clip(np.ceil(tri.max(axis=0) + truncation - 0.5).astype(np.int64) + 1, 0, dims)
        window = band[lo[0]:hi[0], lo[1]:hi[1], lo[2]:hi[2]]
        cells = np.argwhere(window) + lo
        if len(cells) == 0:
            continue
        d = point_triangle_distance(cells + 0.5, tri)
        x, y, z = cells.T
        dist[x, y, z] = np.minimum(dist[x, y, z], d)
    return VoxelGrid(meta, np.minimum(dist, truncation), GridKind.UNSIGNED_DF)


def visibility_labels(mesh: TriMesh, cameras: Sequence[Camera], meta: GridMeta, truncation: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Ray-visibility ground truth: +1 known-empty, 0 on-surface, -1 unknown per voxel.

    Every voxel casts an exact ray towards each camera instead of reading the
    nearest depth pixel, then applies the same truncation and averaging as
    :func:`fuse_tsdf`.
    """
    centers = meta.voxel_centers().reshape(-1, 3)
    observed = _Observations(len(centers), truncation)
    for cam in cameras:
        pc = cam.world_to_camera(centers)
        front = np.flatnonzero(pc[:, 2] > NEAR_EPS)
        uv = cam.project(pc[front])
        half = 0.5
        inside = (uv[:, 0] > -half) & (uv[:, 0] < cam.width - half) & (uv[:, 1] > -half) & (uv[:, 1] < cam.height - half)
        idx = front[inside]
        hit = cast_through(mesh, cam, pc[idx])
        sdf = (hit - pc[idx, 2]) / meta.voxel_size
        use = hit <= cam.far
        observed.add(idx[use], sdf[use])
    values = observed.values()
    labels = np.where(values > 0.5, 1, np.where(values < 0, -1, 0)).astype(np.int8)
    return labels.reshape(meta.dims)


@dataclass(frozen=True, eq=False)
class TrainingPair:
    input: TwoChannelGrid
    target: VoxelGrid
    class_label: int
    model_id: str = ""
    trajectory_id: int = 0

    def __post_init__(self):
        if self.input.meta != self.target.meta:
            raise DataError("training input and target must share grid metadata")
        self.target.require_kind(GridKind.UNSIGNED_DF)


def make_training_pair(
    mesh: TriMesh,
    class_label: int,
    trajectory: Sequence[Camera],
    params: FusionParams,
    model_id: str = "",
    trajectory_id: int = 0,
    target: VoxelGrid | None = None,
) -> TrainingPair:
    """Scan, fuse and split the partial input; compute the ground-truth DF unless one is given."""
    if not trajectory:
        raise EmptyInputError("a training pair needs at least one camera")
    frames = [render_depth(mesh, cam) for cam in trajectory]
    tsdf = fuse_tsdf(frames, params)
    if target is None:
        target = mesh_to_df(mesh, params.meta, params.truncation)
    return TrainingPair(split_channels(tsdf, params.truncation), target, class_label, model_id, trajectory_id)
