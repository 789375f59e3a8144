"""Nearest-neighbour search over projected patch features of donor shapes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from sklearn.neighbors import NearestNeighbors

from src.errors import EmptyInputError, ShapeError
from src.synthesis.features import PATCH_RADIUS, BAND_ISO, PcaBasis, compute_features, surface_band
from src.synthesis.pyramid import SynthesisPyramid


@dataclass(eq=False)
class AnnIndex:
    """Projected donor features with back-references to ``(donor, voxel)``.

    The kd-tree answers with an entry at most ``1 + eps`` times farther than
    the true nearest one, so a stored feature is always found at distance 0.
    ``brute_force`` switches to an exact linear scan.
    """

    features: np.ndarray
    donors: np.ndarray
    voxels: np.ndarray
    values: np.ndarray
    eps: float = 0.5
    leafsize: int = 32
    brute_force: bool = False

    def __post_init__(self):
        if len(self.features) == 0:
            raise EmptyInputError("no donor voxels near a surface; nothing to index")
        if not (len(self.features) == len(self.donors) == len(self.voxels) == len(self.values)):
            raise ShapeError("index columns have different lengths")
        if self.features.shape[1] == 0:
            # all donor features coincide; every query matches the first entry
            self._search = None
        elif self.brute_force:
            self._search = NearestNeighbors(n_neighbors=1, algorithm="brute").fit(self.features)
        else:
            self._search = cKDTree(self.features, leafsize=self.leafsize)

    def __len__(self):
        return len(self.features)

    def query(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Distance and entry position of the match for each row of ``queries``."""
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if queries.shape[1] != self.features.shape[1]:
            raise ShapeError(f"query width {queries.shape[1]} != index width {self.features.shape[1]}")
        if self._search is None:
            return np.zeros(len(queries)), np.zeros(len(queries), dtype=np.int64)
        if self.brute_force:
            dist, pos = self._search.kneighbors(queries, n_neighbors=1)
            return dist[:, 0], pos[:, 0]
        dist, pos = self._search.query(queries, k=1, eps=self.eps, workers=-1)
        return np.asarray(dist), np.asarray(pos, dtype=np.int64)


def donor_band_features(neighbors: Sequence[SynthesisPyramid], level: int, patch_radius: int = PATCH_RADIUS,
                        iso: float = BAND_ISO):
    """Raw band features of every donor at ``level`` with their donor index, voxel and value."""
    feats, donors, voxels, values = [], [], [], []
    for r, pyramid in enumerate(neighbors):
        grid = pyramid[level]
        band = np.argwhere(surface_band(grid, patch_radius, iso))
        coarse = pyramid[level - 1].values if level > 0 else None
        feats.append(compute_features(grid.values, coarse, band, patch_radius))
        donors.append(np.full(len(band), r, dtype=np.int64))
        voxels.append(band)
        values.append(grid.values[band[:, 0], band[:, 1], band[:, 2]])
    width = feats[0].shape[1] if feats else 0
    if not feats:
        return np.zeros((0, width)), np.zeros(0, np.int64), np.zeros((0, 3), np.int64), np.zeros(0, np.float32)
    return np.concatenate(feats), np.concatenate(donors), np.concatenate(voxels), np.concatenate(values)


def build_ann_index(neighbors: Sequence[SynthesisPyramid], level: int, basis: PcaBasis, eps: float = 0.5,
                    leafsize: int = 32, brute_force: bool = False, patch_radius: int = PATCH_RADIUS,
                    iso: float = BAND_ISO, raw=None) -> AnnIndex:
    """Index the projected band features of all donors at one level.

    ``raw`` may pass precomputed :func:`donor_band_features` output.
    """
    feats, donors, voxels, values = raw if raw is not None else donor_band_features(neighbors, level, patch_radius, iso)
    if len(feats) == 0:
        raise EmptyInputError(f"no donor has surface voxels at level {level}")
    return AnnIndex(basis.project(feats), donors, voxels, values, eps, leafsize, brute_force)
