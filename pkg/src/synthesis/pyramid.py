"""Multi-resolution distance-field pyramids and their on-disk store.

Level ``l`` samples the same world extent at ``2**l`` times the base
resolution. Every level stores distances in its own voxel unit, truncated at
the same number of voxels, so a finer level reaches half as far from the
surface in world units.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.dataset.fusion import mesh_to_df
from src.dataset.mesh import TriMesh
from src.errors import DataError, MissingArtifactError, ShapeError
from src.grid.grid_io import read_grid, write_grid
from src.grid.voxel_grid import DEFAULT_TRUNCATION, GridKind, GridMeta, VoxelGrid, downsample_df, upsample_df

PYRAMID_COLUMNS = ["model_id", "level", "path", "resolution"]


@dataclass(frozen=True, eq=False)
class SynthesisPyramid:
    levels: Tuple[VoxelGrid, ...]
    provenance: str = "prediction"

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise ShapeError("a pyramid needs at least one level")
        for lower, upper in zip(levels, levels[1:]):
            if upper.dims != tuple(2 * d for d in lower.dims):
                raise ShapeError(f"pyramid level dims must double: {lower.dims} -> {upper.dims}")
        for grid in levels:
            grid.require_kind(GridKind.UNSIGNED_DF)
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, level: int) -> VoxelGrid:
        return self.levels[level]

    @property
    def top(self) -> VoxelGrid:
        return self.levels[-1]

    def replace(self, level: int, grid: VoxelGrid) -> "SynthesisPyramid":
        levels = list(self.levels)
        levels[level] = grid
        return SynthesisPyramid(tuple(levels), self.provenance)


def build_pyramid(source: Union[TriMesh, VoxelGrid], levels: int, meta: Optional[GridMeta] = None,
                  truncation: float = DEFAULT_TRUNCATION, provenance: Optional[str] = None) -> SynthesisPyramid:
    """Neighbour pyramids come straight from the mesh at every level; a predicted
    grid seeds level 0 and finer levels are trilinear upsamplings of the one below.
    """
    if levels < 1:
        raise ShapeError(f"levels must be >= 1, got {levels}")
    if isinstance(source, TriMesh):
        if meta is None:
            raise ShapeError("a mesh pyramid needs the base grid metadata")
        grids = [mesh_to_df(source, meta.scaled(2 ** l), truncation) for l in range(levels)]
        return SynthesisPyramid(tuple(grids), provenance or "neighbor")

    source.require_kind(GridKind.UNSIGNED_DF)
    grids = [source.with_values(np.minimum(source.values, truncation))]
    for _ in range(1, levels):
        grids.append(upsample_df(grids[-1], 2, truncation))
    return SynthesisPyramid(tuple(grids), provenance or "prediction")


def level_consistency(pyramid: SynthesisPyramid, level: int, truncation: float = DEFAULT_TRUNCATION) -> float:
    """Mean |block average of ``level`` - ``level - 1``| in the coarser voxel unit.

    The finer level is truncated at ``truncation / 2`` coarse voxels, so the
    coarser one is capped there too before comparing.
    """
    if not 1 <= level < len(pyramid):
        raise ShapeError(f"level {level} has no coarser neighbour in a {len(pyramid)}-level pyramid")
    block_mean = downsample_df(pyramid[level]).values.astype(np.float64)
    coarse = np.minimum(pyramid[level - 1].values.astype(np.float64), truncation / 2)
    return float(np.abs(block_mean - coarse).mean())


def level_path(store_dir, model_id: str, level: int) -> Path:
    return Path(store_dir) / f"{model_id}.L{level}.vxg"


def write_pyramid(pyramid: SynthesisPyramid, store_dir, model_id: str) -> List[Path]:
    return [write_grid(grid, level_path(store_dir, model_id, l)) for l, grid in enumerate(pyramid.levels)]


def read_pyramid(store_dir, model_id: str, levels: int) -> SynthesisPyramid:
    paths = [level_path(store_dir, model_id, l) for l in range(levels)]
    missing = [p for p in paths if not p.exists()]
    if missing:
        raise MissingArtifactError(f"pyramid of {model_id} incomplete, missing {missing[0]}")
    return SynthesisPyramid(tuple(read_grid(p) for p in paths), f"neighbor:{model_id}")


def write_store_manifest(store_dir, model_ids, levels: int, base_resolution: int) -> Path:
    rows = [(mid, l, level_path(".", mid, l).name, base_resolution * 2 ** l) for mid in model_ids for l in range(levels)]
    path = Path(store_dir) / "pyramids.tsv"
    pd.DataFrame(rows, columns=PYRAMID_COLUMNS).to_csv(path, sep="\t", index=False)
    return path


def read_store_manifest(store_dir) -> pd.DataFrame:
    path = Path(store_dir) / "pyramids.tsv"
    if not path.exists():
        raise MissingArtifactError(f"pyramid store manifest not found: {path}")
    frame = pd.read_csv(path, sep="\t", dtype={"model_id": str})
    if list(frame.columns) != PYRAMID_COLUMNS:
        raise DataError(f"{path}: unexpected columns {list(frame.columns)}")
    return frame
