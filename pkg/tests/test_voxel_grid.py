import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.errors import DataError, GridRangeError, KindError, MissingArtifactError, ShapeError
from src.grid.grid_io import read_grid, write_grid
from src.grid.voxel_grid import (
    GridKind,
    GridMeta,
    VoxelGrid,
    downsample_df,
    split_channels,
    to_representation,
    trilinear_sample,
    upsample,
    upsample_df,
    voxel_to_world,
    world_to_voxel,
)


def test_meta_rejects_bad_dims_and_voxel_size():
    with pytest.raises(ShapeError):
        GridMeta((4, 4), 1.0)
    with pytest.raises(ShapeError):
        GridMeta((4, 4, 4), 0.0)


@given(st.tuples(*[st.integers(0, 7)] * 3), st.floats(0.01, 3.0), st.tuples(*[st.floats(-5, 5)] * 3))
def test_voxel_world_round_trip(index, voxel_size, origin):
    meta = GridMeta((8, 8, 8), voxel_size, origin)
    back = world_to_voxel(meta, voxel_to_world(meta, index))
    np.testing.assert_allclose(back, index, atol=1e-9)


def test_voxel_to_world_out_of_range():
    with pytest.raises(GridRangeError):
        voxel_to_world(GridMeta((4, 4, 4), 1.0), (4, 0, 0))


def test_values_are_frozen_and_shape_checked():
    grid = VoxelGrid(GridMeta((2, 2, 2), 1.0), np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        grid.values[0, 0, 0] = 3.0
    with pytest.raises(ShapeError):
        VoxelGrid(GridMeta((2, 2, 2), 1.0), np.ones((2, 2, 3)))


def test_unsigned_grid_rejects_negative_values():
    with pytest.raises(KindError):
        VoxelGrid(GridMeta((2, 2, 2), 1.0), -np.ones((2, 2, 2)), GridKind.UNSIGNED_DF)


def test_split_and_combine_tsdf():
    meta = GridMeta((3, 1, 1), 1.0)
    tsdf = VoxelGrid(meta, np.array([2.0, 0.0, -2.5]).reshape(3, 1, 1), GridKind.TSDF)
    two = split_channels(tsdf, 2.5)
    np.testing.assert_array_equal(two.abs.values.ravel(), [2.0, 0.0, 2.5])
    np.testing.assert_array_equal(two.known.values.ravel(), [1.0, 1.0, 0.0])
    np.testing.assert_array_equal(two.combine().values, tsdf.values)
    assert two.stacked().shape == (2, 3, 1, 1)


def test_trilinear_sample_hits_voxel_centres_and_checks_range():
    values = np.arange(27, dtype=float).reshape(3, 3, 3)
    grid = VoxelGrid(GridMeta((3, 3, 3), 1.0), values)
    assert trilinear_sample(grid, (1, 2, 0)) == pytest.approx(values[1, 2, 0])
    assert trilinear_sample(grid, (0.5, 0, 0)) == pytest.approx((values[0, 0, 0] + values[1, 0, 0]) / 2)
    with pytest.raises(GridRangeError):
        trilinear_sample(grid, (2.5, 0, 0))


def test_upsample_keeps_linear_fields_inside():
    x = np.arange(4, dtype=float)
    values = np.broadcast_to(x[:, None, None], (4, 4, 4))
    fine = upsample(VoxelGrid(GridMeta((4, 4, 4), 1.0), values), 2)
    assert fine.dims == (8, 8, 8)
    assert fine.meta.voxel_size == 0.5
    # fine centre i sits at coarse coordinate (i + 0.5) / 2 - 0.5
    expected = (np.arange(8) + 0.5) / 2 - 0.5
    np.testing.assert_allclose(fine.values[1:7, 3, 3], expected[1:7], atol=1e-6)


def test_df_unit_conversions_between_levels():
    grid = VoxelGrid(GridMeta((4, 4, 4), 1.0), np.full((4, 4, 4), 1.0))
    fine = upsample_df(grid, 2, truncation=2.5)
    np.testing.assert_allclose(fine.values, 2.0)
    np.testing.assert_allclose(downsample_df(fine, 2).values, 1.0)
    clipped = upsample_df(grid.with_values(np.full((4, 4, 4), 2.0)), 2, truncation=2.5)
    np.testing.assert_allclose(clipped.values, 2.5)


def test_representations():
    meta = GridMeta((4, 1, 1), 1.0)
    tsdf = VoxelGrid(meta, np.array([2.0, 0.2, -0.3, -2.0]).reshape(4, 1, 1), GridKind.TSDF)
    occ = to_representation(tsdf, GridKind.OCCUPANCY, 0.5)
    np.testing.assert_array_equal(occ.values.ravel(), [0, 1, 1, 0])
    ternary = to_representation(tsdf, GridKind.TERNARY, 0.5)
    np.testing.assert_array_equal(ternary.values.ravel(), [1, 0, 0, -1])
    unsigned = to_representation(tsdf, GridKind.UNSIGNED_DF)
    with pytest.raises(KindError):
        to_representation(unsigned, GridKind.TERNARY)


def test_grid_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    meta = GridMeta((3, 4, 5), 0.25, (1.0, -2.0, 0.5))
    grid = VoxelGrid(meta, rng.uniform(-2.5, 2.5, size=(3, 4, 5)), GridKind.TSDF)
    back = read_grid(write_grid(grid, tmp_path / "g.vxg"))
    assert back.kind == GridKind.TSDF
    assert back.meta == meta
    np.testing.assert_array_equal(back.values, grid.values)


def test_grid_file_is_x_fastest(tmp_path):
    values = np.arange(8, dtype=np.float32).reshape(2, 2, 2)
    path = write_grid(VoxelGrid(GridMeta((2, 2, 2), 1.0), values), tmp_path / "g.vxg")
    body = np.frombuffer(path.read_bytes()[-32:], dtype="<f4")
    assert body[1] == values[1, 0, 0]
    assert body[2] == values[0, 1, 0]


def test_grid_file_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_grid(tmp_path / "missing.vxg")
    bad = tmp_path / "bad.vxg"
    bad.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(DataError):
        read_grid(bad)
    grid = VoxelGrid(GridMeta((2, 2, 2), 1.0), np.zeros((2, 2, 2)))
    path = write_grid(grid, tmp_path / "short.vxg")
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError):
        read_grid(path)
