"""Coarse-to-fine patch synthesis of a fine distance field from retrieved donor shapes.

Level 0 (the network prediction) is kept as is. Each finer level starts as
an upsampling of the synthesized level below; band voxels then take the value
of the donor voxel whose projected patch feature is nearest. Within a pass all
matches are gathered before any value is written, so results do not depend on
the scan order.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from tqdm import tqdm

from src.config import SynthesisConfig
from src.errors import EmptyInputError, ShapeError
from src.grid.voxel_grid import DEFAULT_TRUNCATION, VoxelGrid, upsample_df
from src.synthesis.ann import AnnIndex, build_ann_index, donor_band_features
from src.synthesis.features import PcaBasis, compute_features, fit_pca, surface_band
from src.synthesis.pyramid import SynthesisPyramid, build_pyramid, level_consistency

logger = logging.getLogger(__name__)

CONSISTENCY_WARN = 0.5


@dataclass(frozen=True)
class LevelReport:
    level: int
    band_voxels: int
    donor_voxels: int
    pca_dim: int
    rank_clamped: bool
    mean_match_distance: float
    consistency: float = 0.0


def synthesize_level(target: SynthesisPyramid, neighbors: Sequence[SynthesisPyramid], level: int,
                     basis: PcaBasis, index: AnnIndex, passes: int = 2, patch_radius: int = 2,
                     iso_band: float = 1.0):
    """Rewrite the band voxels of ``target[level]``; returns the new grid and the mean match distance."""
    if level < 1:
        raise ShapeError("level 0 is the coarse anchor and is never synthesized")
    grid = target[level]
    values = np.array(grid.values, dtype=np.float32)
    band = np.argwhere(surface_band(grid, patch_radius, iso_band))
    coarse = target[level - 1].values
    mean_dist = 0.0
    if len(band) == 0:
        return grid, mean_dist

    # x-fastest scan order
    band = band[np.lexsort((band[:, 0], band[:, 1], band[:, 2]))]
    for _ in range(passes):
        feats = compute_features(values, coarse, band, patch_radius)
        dist, pos = index.query(basis.project(feats))
        values[band[:, 0], band[:, 1], band[:, 2]] = index.values[pos]
        mean_dist = float(np.mean(dist))
    return grid.with_values(values), mean_dist


def synthesize(prediction: VoxelGrid, neighbors: Sequence[SynthesisPyramid], config: SynthesisConfig,
               truncation: float = DEFAULT_TRUNCATION, progress: bool = False):
    """Fine distance field at ``2**(levels-1)`` times the prediction resolution.

    Returns the synthesized pyramid and one :class:`LevelReport` per level.
    """
    if not neighbors:
        raise EmptyInputError("synthesis needs at least one donor pyramid")
    levels = config.levels
    for donor in neighbors:
        if len(donor) < levels or donor[0].dims != prediction.dims:
            raise ShapeError(f"donor {donor.provenance} does not cover {levels} levels at {prediction.dims}")

    target = build_pyramid(prediction, 1, truncation=truncation)
    reports: List[LevelReport] = []
    for level in tqdm(range(1, levels), desc="synthesis", disable=not progress):
        target = SynthesisPyramid(target.levels + (upsample_df(target.top, 2, truncation),), target.provenance)
        raw = donor_band_features(neighbors, level, config.patch_radius, config.iso_band)
        if len(raw[0]) == 0:
            raise EmptyInputError(f"no donor has surface voxels at level {level}")
        basis = fit_pca(raw[0], config.pca_dim)
        index = build_ann_index(neighbors, level, basis, config.ann_eps, config.ann_leafsize, config.brute_force,
                                config.patch_radius, config.iso_band, raw=raw)
        n_band = int(surface_band(target[level], config.patch_radius, config.iso_band).sum())
        grid, mean_dist = synthesize_level(target, neighbors, level, basis, index, config.passes,
                                           config.patch_radius, config.iso_band)
        target = target.replace(level, grid)
        report = LevelReport(level, n_band, len(index), basis.out_dim, basis.rank_clamped, mean_dist,
                             level_consistency(target, level, truncation))
        logger.debug("level %d: %s", level, report)
        if report.consistency > CONSISTENCY_WARN:
            logger.warning("level %d drifts %.3f voxels from the level below", level, report.consistency)
        reports.append(report)
    return target, reports
