import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from src.errors import DataError, ShapeError
from src.eval.metrics import (
    RECORD_COLUMNS,
    EvalRecord,
    masked_l1_error,
    masked_l2_error,
    partialness,
    surface_voxels,
    unknown_count,
)
from src.grid.voxel_grid import GridKind, GridMeta, VoxelGrid, split_channels

META = GridMeta((4, 4, 4), 1.0)
field = arrays(np.float64, (4, 4, 4), elements=st.floats(0, 4, allow_nan=False))
mask = arrays(np.bool_, (4, 4, 4))


def df(values):
    return VoxelGrid(META, values)


def test_error_examples():
    gt = np.zeros((4, 4, 4))
    pred = np.zeros((4, 4, 4))
    pred[0, 0, 0] = 1.0
    pred[1, 0, 0] = 9.0  # clamped to 2.5
    known = np.ones((4, 4, 4))
    known[:2, 0, 0] = 0
    assert masked_l1_error(df(pred), df(gt), known) == pytest.approx(1.75)
    assert masked_l2_error(df(pred), df(gt), known) == pytest.approx(np.sqrt((1 + 6.25) / 2))
    assert unknown_count(known) == 2


def test_fully_known_scores_zero():
    assert masked_l1_error(df(np.ones((4, 4, 4))), df(np.zeros((4, 4, 4))), np.ones((4, 4, 4))) == 0.0
    assert masked_l2_error(df(np.ones((4, 4, 4))), df(np.zeros((4, 4, 4))), np.ones((4, 4, 4))) == 0.0


@given(field, field, mask)
def test_l2_bounds_l1(pred, gt, known):
    l1 = masked_l1_error(df(pred), df(gt), known.astype(float))
    l2 = masked_l2_error(df(pred), df(gt), known.astype(float))
    assert 0.0 <= l1 <= 2.5
    assert l2 >= l1 - 1e-6


def test_coarse_prediction_is_upsampled():
    coarse = VoxelGrid(GridMeta((2, 2, 2), 2.0), np.full((2, 2, 2), 1.0))
    fine_gt = VoxelGrid(META, np.full((4, 4, 4), 2.0))
    # a constant 1.0 coarse voxel is 2.0 fine voxels
    assert masked_l1_error(coarse, fine_gt, np.zeros((2, 2, 2)), upsample=True) == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ShapeError):
        masked_l1_error(coarse, fine_gt, np.zeros((4, 4, 4)))


def test_mask_shape_is_checked():
    with pytest.raises(ShapeError):
        masked_l1_error(df(np.zeros((4, 4, 4))), df(np.zeros((4, 4, 4))), np.zeros((3, 3, 3)))


def test_partialness():
    tsdf = np.full((4, 4, 4), -2.5)
    tsdf[0] = 2.5   # seen empty
    tsdf[1] = -0.5  # behind the surface
    tsdf[2] = 0.0   # on the surface
    partial = split_channels(VoxelGrid(META, tsdf, GridKind.TSDF))
    band = np.zeros((4, 4, 4), bool)
    band[:4, 0, 0] = True
    assert partialness(partial, band) == pytest.approx(0.5)
    band[:, 0, 0] = False
    band[1, 1, 1] = True
    assert partialness(partial, band) == 0.0
    unseen = split_channels(VoxelGrid(META, np.full((4, 4, 4), -2.5), GridKind.TSDF))
    assert partialness(unseen, np.ones((4, 4, 4), bool)) == 0.0
    assert np.isnan(partialness(partial, np.zeros((4, 4, 4), bool)))
    with pytest.raises(ShapeError):
        partialness(partial, np.zeros((2, 2, 2), bool))


def test_surface_voxels():
    values = np.full((4, 4, 4), 2.5)
    values[1, 1, 1] = 0.0
    values[2, 1, 1] = 1.0
    assert surface_voxels(df(values)).sum() == 2


def test_eval_record():
    record = EvalRecord("chair_0001", "chair", "epn", 7, 32, 0.4, 100, 0.2, 0.3)
    row = record.row()
    assert list(row) == RECORD_COLUMNS
    assert row["class"] == "chair"
    with pytest.raises(DataError):
        EvalRecord("m", "chair", "epn", 7, 48, 0.4, 100, 0.2, 0.3)
    with pytest.raises(DataError):
        EvalRecord("m", "chair", "epn", 7, 32, 0.4, 100, -0.1, 0.3)
