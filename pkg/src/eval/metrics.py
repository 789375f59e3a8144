"""Completion error on the unknown region and scan partialness."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from src.errors import DataError, ShapeError
from src.grid.voxel_grid import DEFAULT_TRUNCATION, TwoChannelGrid, VoxelGrid, upsample_df

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["model_id", "class", "method", "seed", "resolution", "partialness", "unknown_count",
                  "l1_error", "l2_error"]


@dataclass(frozen=True)
class EvalRecord:
    model_id: str
    class_name: str
    method: str
    seed: int
    resolution: int
    partialness: float
    unknown_count: int
    l1_error: float
    l2_error: float

    def __post_init__(self):
        if self.resolution < 1 or self.resolution & (self.resolution - 1):
            raise DataError(f"unsupported evaluation resolution {self.resolution}")
        if self.l1_error < 0 or self.l2_error < 0:
            raise DataError("errors must be nonnegative")

    def row(self) -> dict:
        row = asdict(self)
        row["class"] = row.pop("class_name")
        return {c: row[c] for c in RECORD_COLUMNS}


def _align(pred: VoxelGrid, gt: VoxelGrid, known: np.ndarray, truncation: float, upsample: bool):
    known = np.asarray(known)
    if pred.dims != gt.dims:
        if not upsample:
            raise ShapeError(f"prediction {pred.dims} and ground truth {gt.dims} differ; pass upsample=True")
        factor = gt.dims[0] // pred.dims[0]
        if factor < 2 or tuple(d * factor for d in pred.dims) != gt.dims:
            raise ShapeError(f"cannot upsample {pred.dims} to {gt.dims}")
        pred = upsample_df(pred, factor, truncation)
    if known.shape != gt.dims:
        factor = gt.dims[0] // known.shape[0]
        if not upsample or factor < 2 or tuple(d * factor for d in known.shape) != gt.dims:
            raise ShapeError(f"known mask {known.shape} does not match {gt.dims}")
        for axis in range(3):
            known = np.repeat(known, factor, axis=axis)
    unknown = known == 0
    diff = np.minimum(pred.values.astype(np.float64), truncation) - np.minimum(gt.values.astype(np.float64), truncation)
    return diff[unknown], int(unknown.sum())


def masked_l1_error(pred: VoxelGrid, gt: VoxelGrid, known: np.ndarray, truncation: float = DEFAULT_TRUNCATION,
                    upsample: bool = False) -> float:
    """Mean ``|min(pred, t) - min(gt, t)|`` over unknown voxels.

    With ``upsample`` a coarser prediction is trilinearly upsampled (and a
    coarser known mask repeated) to the ground-truth resolution first. An empty
    unknown region scores 0.
    """
    diff, count = _align(pred, gt, known, truncation, upsample)
    return float(np.abs(diff).mean()) if count else 0.0


def masked_l2_error(pred: VoxelGrid, gt: VoxelGrid, known: np.ndarray, truncation: float = DEFAULT_TRUNCATION,
                    upsample: bool = False) -> float:
    """Root mean squared counterpart of :func:`masked_l1_error`."""
    diff, count = _align(pred, gt, known, truncation, upsample)
    return float(np.sqrt(np.mean(diff ** 2))) if count else 0.0


def unknown_count(known: np.ndarray) -> int:
    return int((np.asarray(known) == 0).sum())


def partialness(partial: TwoChannelGrid, gt_band: np.ndarray) -> float:
    """Fraction of ground-truth surface-band voxels that are known in the scan.

    Voxels the scan placed behind a measured surface stay unknown. An empty
    band returns NaN and logs a warning.
    """
    gt_band = np.asarray(gt_band, dtype=bool)
    if gt_band.shape != partial.meta.dims:
        raise ShapeError(f"band {gt_band.shape} does not match input {partial.meta.dims}")
    total = int(gt_band.sum())
    if total == 0:
        logger.warning("partialness undefined: empty ground-truth surface band")
        return float("nan")
    known = partial.known.values > 0
    return float(known[gt_band].sum() / total)


def surface_voxels(gt: VoxelGrid, iso: float = 1.0) -> np.ndarray:
    """Ground-truth surface band used for partialness: voxels within ``iso`` of the surface."""
    return np.asarray(gt.values) <= iso
