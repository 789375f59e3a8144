"""OBJ and binary PLY mesh files, read and written through trimesh."""
from __future__ import annotations

from pathlib import Path

import trimesh

from src.dataset.mesh import TriMesh
from src.errors import DataError, MissingArtifactError

MESH_FORMATS = ("obj", "ply")


def _format_of(path: Path, fmt: str | None = None) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in MESH_FORMATS:
        raise DataError(f"unsupported mesh format {fmt!r} for {path}")
    return fmt


def write_mesh(mesh: TriMesh, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = _format_of(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        # PLY goes out as binary little-endian
        mesh.to_trimesh().export(path, file_type=fmt)
    except OSError as err:
        raise DataError(f"could not write mesh to {path}: {err}") from err
    return path


def read_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"mesh file not found: {path}")
    fmt = _format_of(path)
    try:
        loaded = trimesh.load(path, file_type=fmt, force="mesh", process=False)
    except Exception as err:
        raise DataError(f"{path}: could not parse mesh: {err}") from err
    if isinstance(loaded, trimesh.Scene):
        parts = [g for g in loaded.geometry.values() if isinstance(g, trimesh.Trimesh)]
        if not parts:
            return TriMesh.empty()
        loaded = trimesh.util.concatenate(parts)
    if not isinstance(loaded, trimesh.Trimesh):
        raise DataError(f"{path}: no triangle mesh in file")
    mesh = TriMesh.from_trimesh(loaded)
    return mesh.cleaned() if not mesh.is_empty else mesh

