"""Volumetric patch features and their PCA projection."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from sklearn.decomposition import PCA

from src.errors import EmptyInputError, GridRangeError, ShapeError
from src.grid.voxel_grid import VoxelGrid

logger = logging.getLogger(__name__)

PATCH_RADIUS = 2
PARENT_RADIUS = 1
BAND_ISO = 1.0


def _offsets(radius: int) -> np.ndarray:
    """Neighbourhood offsets, x varying fastest."""
    r = np.arange(-radius, radius + 1)
    dz, dy, dx = np.meshgrid(r, r, r, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)


def surface_band(df: VoxelGrid, patch_radius: int = PATCH_RADIUS, iso: float = BAND_ISO) -> np.ndarray:
    """Voxels whose (2r+1)³ neighbourhood holds a value at or below ``iso``."""
    near = np.asarray(df.values) <= iso
    if not near.any():
        return np.zeros(df.dims, dtype=bool)
    return ndimage.maximum_filter(near, size=2 * patch_radius + 1, mode="constant", cval=False)


def gather_patches(values: np.ndarray, voxels: np.ndarray, radius: int) -> np.ndarray:
    """(N, (2r+1)³) neighbourhood values with clamp-to-edge borders."""
    dims = np.asarray(values.shape)
    idx = voxels[:, None, :] + _offsets(radius)[None, :, :]
    idx = np.clip(idx, 0, dims - 1)
    return values[idx[..., 0], idx[..., 1], idx[..., 2]]


def compute_features(fine: np.ndarray, coarse: Optional[np.ndarray], voxels: np.ndarray,
                     patch_radius: int = PATCH_RADIUS) -> np.ndarray:
    """Raw patch features of many voxels: the fine block, then the parent block one level down.

    Without a coarse level only the fine block is returned.
    """
    voxels = np.asarray(voxels, dtype=np.int64).reshape(-1, 3)
    if len(voxels) and (voxels.min() < 0 or np.any(voxels.max(axis=0) >= np.asarray(fine.shape))):
        raise GridRangeError(f"voxel outside grid dims {fine.shape}")
    parts = [gather_patches(fine, voxels, patch_radius)]
    if coarse is not None:
        if tuple(2 * d for d in coarse.shape) != fine.shape:
            raise ShapeError(f"parent level {coarse.shape} is not half of {fine.shape}")
        parts.append(gather_patches(coarse, voxels // 2, PARENT_RADIUS))
    return np.concatenate(parts, axis=1).astype(np.float64)


def compute_feature(levels: Sequence[VoxelGrid], level: int, voxel: Sequence[int],
                    patch_radius: int = PATCH_RADIUS) -> np.ndarray:
    """Raw feature of one voxel at ``level`` of a pyramid (152 values from level 1 up)."""
    coarse = levels[level - 1].values if level > 0 else None
    return compute_features(levels[level].values, coarse, np.asarray(voxel)[None, :], patch_radius)[0]


@dataclass(frozen=True, eq=False)
class PcaBasis:
    mean: np.ndarray
    basis: np.ndarray
    explained_variance: np.ndarray
    rank_clamped: bool = False

    @property
    def in_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]

    def project(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.in_dim:
            raise ShapeError(f"feature width {features.shape[-1]} != basis input width {self.in_dim}")
        return (features - self.mean) @ self.basis

    def reconstruct(self, projected: np.ndarray) -> np.ndarray:
        return projected @ self.basis.T + self.mean


def fit_pca(features: np.ndarray, out_dim: int = 100) -> PcaBasis:
    """Top principal directions of the samples, sign-fixed so each direction's
    largest-magnitude component is positive. Fewer independent directions than
    ``out_dim`` shrink the basis and set ``rank_clamped``.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) == 0:
        raise EmptyInputError("fit_pca needs a non-empty (samples, width) matrix")
    centered = features - features.mean(axis=0)
    rank = int(np.linalg.matrix_rank(centered)) if len(features) > 1 else 0
    n_components = min(out_dim, rank)
    clamped = n_components < out_dim
    if clamped:
        logger.warning("PCA rank %d below requested %d dimensions; basis clamped", rank, out_dim)
    if n_components == 0:
        return PcaBasis(features.mean(axis=0), np.zeros((features.shape[1], 0)), np.zeros(0), True)

    pca = PCA(n_components=n_components, svd_solver="full").fit(features)
    components = pca.components_.copy()
    flip = components[np.arange(n_components), np.abs(components).argmax(axis=1)] < 0
    components[flip] *= -1
    return PcaBasis(pca.mean_, components.T, pca.explained_variance_, clamped)
