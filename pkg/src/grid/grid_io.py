"""VXG1 grid files.

Layout (little-endian): ``b"VXG1"``, u32 kind, 3 x u32 dims, f32 voxel_size,
3 x f32 origin, then dims.x * dims.y * dims.z f32 values, x fastest.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from src.errors import DataError, MissingArtifactError
from src.grid.voxel_grid import GridKind, GridMeta, VoxelGrid

MAGIC = b"VXG1"
HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("kind", "<u4"),
    ("dims", "<u4", (3,)),
    ("voxel_size", "<f4"),
    ("origin", "<f4", (3,)),
])


def write_grid(grid: VoxelGrid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros((), dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["kind"] = int(grid.kind)
    header["dims"] = grid.dims
    header["voxel_size"] = grid.meta.voxel_size
    header["origin"] = grid.meta.origin
    body = np.asarray(grid.values, dtype="<f4").ravel(order="F")
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(body.tobytes())
    return path


def read_grid(path) -> VoxelGrid:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"grid file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise DataError(f"{path}: truncated VXG1 header")
    header = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if header["magic"] != MAGIC:
        raise DataError(f"{path}: bad magic {header['magic']!r}, expected {MAGIC!r}")
    dims = tuple(int(d) for d in header["dims"])
    count = int(np.prod(dims))
    body = np.frombuffer(raw, dtype="<f4", offset=HEADER_DTYPE.itemsize)
    if body.size != count:
        raise DataError(f"{path}: expected {count} values, found {body.size}")
    try:
        kind = GridKind(int(header["kind"]))
    except ValueError as err:
        raise DataError(f"{path}: unknown grid kind tag {int(header['kind'])}") from err
    meta = GridMeta(dims, float(header["voxel_size"]), tuple(float(o) for o in header["origin"]))
    return VoxelGrid(meta, body.reshape(dims, order="F"), kind)
