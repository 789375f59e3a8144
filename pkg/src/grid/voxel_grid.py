"""Dense voxel grids registered in world space.

Values live at voxel centres: voxel (i, j, k) covers the cell
``origin + [i, i+1) * voxel_size`` per axis and its sample sits at
``origin + (index + 0.5) * voxel_size``. Distances are stored in voxel units.
Arrays are indexed ``values[x, y, z]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.errors import GridRangeError, KindError, ShapeError

DEFAULT_TRUNCATION = 2.5


class GridKind(IntEnum):
    TSDF = 0
    UNSIGNED_DF = 1
    OCCUPANCY = 2
    TERNARY = 3
    SIGN_MASK = 4
    ABS_CHANNEL = 5


@dataclass(frozen=True)
class GridMeta:
    dims: Tuple[int, int, int]
    voxel_size: float
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or min(dims) < 1:
            raise ShapeError(f"grid dims must be 3 positive integers, got {self.dims}")
        if len(origin) != 3:
            raise ShapeError(f"grid origin must have 3 components, got {self.origin}")
        if not self.voxel_size > 0:
            raise ShapeError(f"voxel_size must be positive, got {self.voxel_size}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))

    def scaled(self, factor: int) -> "GridMeta":
        """Same world extent sampled ``factor`` times finer per axis."""
        return GridMeta(tuple(d * factor for d in self.dims), self.voxel_size / factor, self.origin)

    def voxel_centers(self) -> np.ndarray:
        """World positions of every voxel centre, shape (X, Y, Z, 3)."""
        axes = [self.origin[a] + (np.arange(self.dims[a]) + 0.5) * self.voxel_size for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def voxel_to_world(meta: GridMeta, index: Sequence[int]) -> np.ndarray:
    idx = np.asarray(index)
    if idx.shape[-1] != 3:
        raise ShapeError(f"voxel index must have 3 components, got shape {idx.shape}")
    if np.any(idx < 0) or np.any(idx >= np.asarray(meta.dims)):
        raise GridRangeError(f"voxel index {index} outside grid dims {meta.dims}")
    return np.asarray(meta.origin) + (idx + 0.5) * meta.voxel_size


def world_to_voxel(meta: GridMeta, point: Sequence[float]) -> np.ndarray:
    """Continuous voxel coordinate of a world point (integers land on voxel centres)."""
    return (np.asarray(point, dtype=np.float64) - np.asarray(meta.origin)) / meta.voxel_size - 0.5


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    meta: GridMeta
    values: np.ndarray
    kind: GridKind = GridKind.UNSIGNED_DF

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float32, copy=True)
        if values.shape != self.meta.dims:
            raise ShapeError(f"values shape {values.shape} does not match grid dims {self.meta.dims}")
        kind = GridKind(self.kind)
        _check_kind_values(values, kind)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", kind)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.meta.dims

    def with_values(self, values: np.ndarray, kind: GridKind | None = None) -> "VoxelGrid":
        return VoxelGrid(self.meta, values, self.kind if kind is None else kind)

    def require_kind(self, *kinds: GridKind) -> None:
        if self.kind not in kinds:
            names = ", ".join(k.name for k in kinds)
            raise KindError(f"expected a grid of kind {names}, got {self.kind.name}")


def _check_kind_values(values: np.ndarray, kind: GridKind) -> None:
    if kind in (GridKind.UNSIGNED_DF, GridKind.ABS_CHANNEL) and values.size and values.min() < 0:
        raise KindError(f"{kind.name} grid has negative values (min {values.min()})")
    if kind in (GridKind.OCCUPANCY, GridKind.SIGN_MASK) and not np.isin(values, (0.0, 1.0)).all():
        raise KindError(f"{kind.name} grid must only hold 0 and 1")
    if kind == GridKind.TERNARY and not np.isin(values, (-1.0, 0.0, 1.0)).all():
        raise KindError("TERNARY grid must only hold -1, 0 and +1")


@dataclass(frozen=True, eq=False)
class TwoChannelGrid:
    """Network input: truncated absolute distance plus the known/unknown mask."""

    abs: VoxelGrid
    known: VoxelGrid
    truncation: float = field(default=DEFAULT_TRUNCATION)

    def __post_init__(self):
        if self.abs.meta != self.known.meta:
            raise ShapeError("abs and known channels must share grid metadata")
        self.abs.require_kind(GridKind.ABS_CHANNEL)
        self.known.require_kind(GridKind.SIGN_MASK)

    @property
    def meta(self) -> GridMeta:
        return self.abs.meta

    def combine(self) -> VoxelGrid:
        """Recombine the channels into the truncated TSDF."""
        return VoxelGrid(self.meta, self.abs.values * (2.0 * self.known.values - 1.0), GridKind.TSDF)

    def stacked(self) -> np.ndarray:
        """Channel-major (2, X, Y, Z) array as fed to the network."""
        return np.stack([self.abs.values, self.known.values]).astype(np.float32)


def split_channels(tsdf: VoxelGrid, truncation: float = DEFAULT_TRUNCATION) -> TwoChannelGrid:
    tsdf.require_kind(GridKind.TSDF)
    abs_values = np.minimum(np.abs(tsdf.values), truncation)
    known = (tsdf.values >= 0).astype(np.float32)
    return TwoChannelGrid(
        VoxelGrid(tsdf.meta, abs_values, GridKind.ABS_CHANNEL),
        VoxelGrid(tsdf.meta, known, GridKind.SIGN_MASK),
        truncation,
    )


def trilinear_sample(grid: VoxelGrid, p: Sequence[float]) -> float:
    """Trilinear interpolation at continuous voxel coordinate ``p`` (integers are voxel centres)."""
    coords = np.asarray(p, dtype=np.float64)
    upper = np.asarray(grid.dims) - 1
    if coords.shape != (3,) or np.any(coords < 0) or np.any(coords > upper):
        raise GridRangeError(f"sample point {tuple(coords)} outside [0, {tuple(upper)}]")
    return float(trilinear_sample_many(grid.values, coords[None, :])[0])


def trilinear_sample_many(values: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Vectorized trilinear sampling of (N, 3) voxel coordinates; out-of-range clamps to the edge."""
    return ndimage.map_coordinates(values.astype(np.float64), coords.T, order=1, mode="nearest")


def upsample(grid: VoxelGrid, factor: int = 2) -> VoxelGrid:
    """Trilinear upsampling over the same world extent."""
    fine = grid.meta.scaled(factor)
    axes = [(np.arange(n) + 0.5) / factor - 0.5 for n in fine.dims]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=0)
    values = ndimage.map_coordinates(grid.values.astype(np.float64), coords, order=1, mode="nearest")
    if grid.kind in (GridKind.UNSIGNED_DF, GridKind.ABS_CHANNEL):
        values = np.maximum(values, 0.0)
    return VoxelGrid(fine, values, grid.kind)


def downsample(grid: VoxelGrid, factor: int = 2) -> VoxelGrid:
    """Average ``factor``³ blocks."""
    if any(d % factor for d in grid.dims):
        raise ShapeError(f"dims {grid.dims} not divisible by {factor}")
    x, y, z = (d // factor for d in grid.dims)
    blocks = grid.values.reshape(x, factor, y, factor, z, factor)
    meta = GridMeta((x, y, z), grid.meta.voxel_size * factor, grid.meta.origin)
    return VoxelGrid(meta, blocks.mean(axis=(1, 3, 5)), grid.kind)


def to_representation(df: VoxelGrid, target: GridKind, iso_band: float = 0.5) -> VoxelGrid:
    """Re-encode a distance field as occupancy, ternary or unsigned DF."""
    df.require_kind(GridKind.TSDF, GridKind.UNSIGNED_DF)
    target = GridKind(target)
    if target == df.kind:
        return df
    values = df.values
    if target == GridKind.OCCUPANCY:
        return df.with_values((np.abs(values) <= iso_band).astype(np.float32), GridKind.OCCUPANCY)
    if target == GridKind.TERNARY:
        if df.kind != GridKind.TSDF:
            raise KindError("a ternary grid needs sign information; got an unsigned distance field")
        ternary = np.where(values > iso_band, 1.0, np.where(values < -iso_band, -1.0, 0.0))
        return df.with_values(ternary, GridKind.TERNARY)
    if target == GridKind.UNSIGNED_DF:
        return df.with_values(np.abs(values), GridKind.UNSIGNED_DF)
    raise KindError(f"cannot convert {df.kind.name} to {target.name}")


def upsample_df(grid: VoxelGrid, factor: int = 2, truncation: float = DEFAULT_TRUNCATION) -> VoxelGrid:
    """Trilinear upsampling of a distance field, rescaled to the finer voxel unit and re-truncated."""
    grid.require_kind(GridKind.UNSIGNED_DF, GridKind.ABS_CHANNEL)
    fine = upsample(grid, factor)
    return fine.with_values(np.clip(fine.values.astype(np.float64) * factor, 0.0, truncation))


def downsample_df(grid: VoxelGrid, factor: int = 2) -> VoxelGrid:
    """Block average of a distance field expressed in the coarser voxel unit."""
    grid.require_kind(GridKind.UNSIGNED_DF, GridKind.ABS_CHANNEL)
    coarse = downsample(grid, factor)
    return coarse.with_values(coarse.values / factor)
