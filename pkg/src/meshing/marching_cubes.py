"""Isosurface extraction from voxel distance fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from src.dataset.mesh import DEGENERATE_AREA, TriMesh
from src.errors import ConfigError, ShapeError
from src.grid.voxel_grid import GridKind, VoxelGrid, trilinear_sample_many

DEFAULT_ISO = 0.5


@dataclass(frozen=True)
class IsoParams:
    iso: float = DEFAULT_ISO
    kind: GridKind = GridKind.UNSIGNED_DF

    def __post_init__(self):
        kind = GridKind(self.kind)
        if kind not in (GridKind.TSDF, GridKind.UNSIGNED_DF):
            raise ConfigError(f"cannot extract an isosurface from a {kind.name} grid")
        if kind == GridKind.UNSIGNED_DF and not self.iso > 0:
            raise ConfigError(f"an unsigned distance field needs a positive iso value, got {self.iso}")
        object.__setattr__(self, "kind", kind)


def marching_cubes(df: VoxelGrid, params: IsoParams | None = None) -> TriMesh:
    """Triangle mesh of the iso level set in world coordinates.

    Faces are oriented towards increasing field values (out of the shape).
    A field that never crosses the level gives an empty mesh.
    """
    params = params or IsoParams(kind=df.kind)
    df.require_kind(params.kind)
    if min(df.dims) < 2:
        raise ShapeError(f"marching cubes needs at least 2 samples per axis, got {df.dims}")
    scalar = df.values.astype(np.float64) - (params.iso if params.kind == GridKind.UNSIGNED_DF else 0.0)
    if not (scalar.min() < 0.0 < scalar.max()):
        return TriMesh.empty()

    verts, faces, _, _ = measure.marching_cubes(scalar, level=0.0, method="lewiner", allow_degenerate=False)
    faces = faces.astype(np.int64)
    if len(faces) == 0:
        return TriMesh.empty()

    corners = verts[faces]
    normals = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    grads = np.stack(np.gradient(scalar), axis=-1)
    centroid = corners.mean(axis=1)
    grad_at = np.stack([trilinear_sample_many(grads[..., a], centroid) for a in range(3)], axis=1)
    if np.sum(np.einsum("ij,ij->i", normals, grad_at)) < 0:
        faces = faces[:, [0, 2, 1]]

    world = np.asarray(df.meta.origin) + (verts + 0.5) * df.meta.voxel_size
    return TriMesh(world, faces).cleaned(DEGENERATE_AREA)
