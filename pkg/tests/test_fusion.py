import numpy as np
import pytest

from src.dataset.corpus import make_model
from src.dataset.fusion import (
    FusionParams,
    fuse_tsdf,
    grid_meta_for_mesh,
    make_training_pair,
    mesh_to_df,
    visibility_labels,
)
from src.dataset.mesh import TriMesh, point_mesh_distance
from src.dataset.scanner import dense_trajectory, gen_trajectory, look_at, render_depth
from src.errors import DataError, EmptyInputError
from src.grid.voxel_grid import GridKind, GridMeta

SMALL = dict(fx=60.0, fy=60.0, cx=32.0, cy=24.0, width=64, height=48)


def _random_mesh(rng, n_triangles):
    vertices = rng.uniform(2.0, 14.0, size=(3 * n_triangles, 3))
    return TriMesh(vertices, np.arange(3 * n_triangles).reshape(-1, 3))


@pytest.mark.parametrize("seed", range(5))
def test_mesh_to_df_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    mesh = _random_mesh(rng, int(rng.integers(1, 40)))
    meta = GridMeta((16, 16, 16), 1.0)
    df = mesh_to_df(mesh, meta, truncation=2.5)
    brute = np.minimum(point_mesh_distance(meta.voxel_centers().reshape(-1, 3), mesh), 2.5).reshape(meta.dims)
    np.testing.assert_allclose(df.values, brute, atol=1e-4)
    assert df.kind == GridKind.UNSIGNED_DF


def test_mesh_to_df_uses_voxel_units(unit_box):
    meta = grid_meta_for_mesh(unit_box, 16, 3)
    assert meta.voxel_size == pytest.approx(0.1)
    df = mesh_to_df(unit_box, meta, 2.5)
    centers = meta.voxel_centers().reshape(-1, 3)
    expected = np.minimum(point_mesh_distance(centers, unit_box) / meta.voxel_size, 2.5)
    np.testing.assert_allclose(df.values.ravel(), expected, atol=1e-4)
    # the margin keeps the outermost voxels beyond the truncation band
    np.testing.assert_allclose(df.values[0], 2.5, atol=1e-4)


def test_mesh_to_df_rejects_empty_mesh():
    with pytest.raises(EmptyInputError):
        mesh_to_df(TriMesh.empty(), GridMeta((4, 4, 4), 1.0))


def test_unseen_voxels_are_unknown(unit_box):
    meta = grid_meta_for_mesh(unit_box, 16, 3)
    cam = look_at((4.0, 0.0, 0.0), (0.0, 0.0, 0.0), **SMALL)
    tsdf = fuse_tsdf([render_depth(unit_box, cam)], FusionParams(meta))
    assert tsdf.kind == GridKind.TSDF
    assert tsdf.values.min() >= -2.5 and tsdf.values.max() <= 2.5
    # voxels behind the box on the far side are occluded
    assert tsdf.values[1, 8, 8] == -2.5
    # voxels between camera and box are seen empty
    assert tsdf.values[15, 8, 8] == pytest.approx(2.5)


def test_fusion_needs_frames(unit_box):
    with pytest.raises(EmptyInputError):
        fuse_tsdf([], FusionParams(GridMeta((4, 4, 4), 1.0)))
    with pytest.raises(DataError):
        FusionParams(GridMeta((4, 4, 4), 1.0), truncation=0.5)


def test_dense_fusion_is_sound(unit_box):
    meta = grid_meta_for_mesh(unit_box, 16, 3)
    params = FusionParams(meta, 2.5)
    cameras = dense_trajectory(4.0, fx=150.0, fy=150.0, cx=80.0, cy=60.0, width=160, height=120)
    tsdf = fuse_tsdf([render_depth(unit_box, cam) for cam in cameras], params)
    truth = mesh_to_df(unit_box, meta, 2.5).values

    # every known voxel within half a voxel of the observed surface is within one voxel of the mesh
    surface = (tsdf.values >= 0) & (tsdf.values <= 0.5)
    assert surface.any()
    assert (truth[surface] <= 1.0).all()

    labels = visibility_labels(unit_box, cameras, meta, 2.5)
    agree = (tsdf.values >= 0) == (labels >= 0)
    assert agree.mean() >= 0.99


def _plane(x=0.0, half=5.0):
    vertices = [[x, -half, -half], [x, half, -half], [x, half, half], [x, -half, half]]
    return TriMesh(vertices, [[0, 1, 2], [0, 2, 3]])


def test_single_view_of_a_plane():
    # voxel (8, 8, 8) sits 1.3 voxels in front of the plane x = 0
    meta = GridMeta((16, 16, 16), 0.1, (-0.72, -0.8, -0.8))
    cam = look_at((4.0, 0.0, 0.0), (0.0, 0.0, 0.0), **SMALL)
    tsdf = fuse_tsdf([render_depth(_plane(), cam)], FusionParams(meta, 2.5))
    assert tsdf.values[8, 8, 8] == pytest.approx(1.3, abs=1e-4)
    np.testing.assert_allclose(tsdf.values[12:, 6:10, 6:10], 2.5)
    assert (tsdf.values[:7, 6:10, 6:10] < 0).all()


def test_identical_frames_fuse_like_one(unit_box):
    meta = grid_meta_for_mesh(unit_box, 16, 3)
    frame = render_depth(unit_box, look_at((3.0, 1.5, 1.0), (0.0, 0.0, 0.0), **SMALL))
    once = fuse_tsdf([frame], FusionParams(meta))
    twice = fuse_tsdf([frame, frame], FusionParams(meta))
    np.testing.assert_array_equal(once.values, twice.values)


def _known(mesh, cameras, meta):
    return fuse_tsdf([render_depth(mesh, cam) for cam in cameras], FusionParams(meta)).values >= 0


@pytest.mark.parametrize("class_label", range(4))
def test_more_views_never_shrink_the_known_set(class_label):
    mesh = make_model(3, class_label, 0)
    meta = grid_meta_for_mesh(mesh, 16, 3)
    first = gen_trajectory(1, 2, 2.5, **SMALL)
    second = gen_trajectory(2, 3, 2.5, **SMALL)
    known_first = _known(mesh, first, meta)
    known_both = _known(mesh, first + second, meta)
    assert not (known_first & ~known_both).any()


def test_one_view_knows_less_than_eight(sphere_mesh):
    meta = grid_meta_for_mesh(sphere_mesh, 16, 3)
    eight = gen_trajectory(5, 8, 2.5, **SMALL)
    one = _known(sphere_mesh, eight[:1], meta)
    all_eight = _known(sphere_mesh, eight, meta)
    assert one.mean() < all_eight.mean()
    assert not (one & ~all_eight).any()


def test_target_does_not_depend_on_the_trajectory(unit_box):
    params = FusionParams(grid_meta_for_mesh(unit_box, 16, 3))
    a = make_training_pair(unit_box, 0, gen_trajectory(1, 1, 3.0, **SMALL), params)
    b = make_training_pair(unit_box, 0, gen_trajectory(9, 4, 3.0, **SMALL), params)
    assert a.target.values.tobytes() == b.target.values.tobytes()
    assert a.input.known.values.tobytes() != b.input.known.values.tobytes()


def test_training_pair_shares_metadata(unit_box):
    meta = grid_meta_for_mesh(unit_box, 16, 3)
    cams = [look_at((4.0, 1.0, 0.5), (0.0, 0.0, 0.0), **SMALL)]
    pair = make_training_pair(unit_box, 2, cams, FusionParams(meta), "box_0000", 3)
    assert pair.input.meta == pair.target.meta == meta
    assert pair.class_label == 2 and pair.trajectory_id == 3
    assert 0 < pair.input.known.values.mean() < 1
    with pytest.raises(EmptyInputError):
        make_training_pair(unit_box, 2, [], FusionParams(meta))
