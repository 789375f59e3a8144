import numpy as np
import pytest

from src.completion import Completer
from src.config import SynthesisConfig
from src.dataset.corpus import make_model
from src.dataset.fusion import grid_meta_for_mesh, mesh_to_df
from src.errors import EmptyInputError, GridRangeError, MissingArtifactError, ShapeError
from src.grid.voxel_grid import GridKind, GridMeta, VoxelGrid
from src.synthesis.ann import AnnIndex, build_ann_index, donor_band_features
from src.synthesis.features import compute_feature, compute_features, fit_pca, surface_band
from src.synthesis.pyramid import (
    build_pyramid,
    level_consistency,
    read_pyramid,
    write_pyramid,
    write_store_manifest,
)
from src.synthesis.synthesize import synthesize, synthesize_level


def single_point_grid(n=8, at=(4, 4, 4)):
    values = np.full((n, n, n), 2.5)
    values[at] = 0.0
    return VoxelGrid(GridMeta((n, n, n), 1.0), values, GridKind.UNSIGNED_DF)


def test_band_around_a_single_surface_voxel():
    band = surface_band(single_point_grid())
    assert band.sum() == 125
    assert band[2:7, 2:7, 2:7].all()


def test_band_of_empty_field():
    grid = VoxelGrid(GridMeta((4, 4, 4), 1.0), np.full((4, 4, 4), 2.5), GridKind.UNSIGNED_DF)
    assert not surface_band(grid).any()


def test_features_of_constant_field_are_constant():
    fine = np.full((8, 8, 8), 1.25)
    feats = compute_features(fine, np.full((4, 4, 4), 0.5), np.array([[0, 0, 0], [7, 7, 7], [3, 4, 5]]))
    assert feats.shape == (3, 152)
    np.testing.assert_array_equal(feats[:, :125], 1.25)
    np.testing.assert_array_equal(feats[:, 125:], 0.5)


def test_feature_layout_is_x_fastest():
    fine = np.arange(8 ** 3, dtype=float).reshape(8, 8, 8)
    feat = compute_features(fine, None, np.array([[4, 4, 4]]))[0]
    assert feat.shape == (125,)
    assert feat[62] == fine[4, 4, 4]
    assert feat[63] == fine[5, 4, 4]
    assert feat[62 + 5] == fine[4, 5, 4]
    assert feat[62 + 25] == fine[4, 4, 5]


def test_feature_errors():
    with pytest.raises(GridRangeError):
        compute_features(np.zeros((4, 4, 4)), None, np.array([[4, 0, 0]]))
    with pytest.raises(ShapeError):
        compute_features(np.zeros((8, 8, 8)), np.zeros((3, 3, 3)), np.array([[0, 0, 0]]))


def test_level_zero_feature_has_no_parent(ball):
    pyramid = build_pyramid(ball, 2)
    assert compute_feature(pyramid.levels, 0, (16, 16, 16)).shape == (125,)
    assert compute_feature(pyramid.levels, 1, (32, 32, 32)).shape == (152,)


def test_pca_basis_is_orthonormal_and_sign_fixed():
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(300, 12)) @ rng.normal(size=(12, 12))
    basis = fit_pca(feats, 5)
    np.testing.assert_allclose(basis.basis.T @ basis.basis, np.eye(5), atol=1e-10)
    largest = basis.basis[np.abs(basis.basis).argmax(axis=0), np.arange(5)]
    assert (largest > 0).all()
    assert np.all(np.diff(basis.explained_variance) <= 0)
    assert not basis.rank_clamped
    np.testing.assert_allclose(basis.project(basis.mean[None]), 0.0, atol=1e-12)


def test_pca_rank_is_clamped():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(50, 2)) @ rng.normal(size=(2, 10))
    basis = fit_pca(feats, 6)
    assert basis.out_dim == 2 and basis.rank_clamped
    constant = fit_pca(np.ones((10, 4)), 3)
    assert constant.out_dim == 0 and constant.rank_clamped
    with pytest.raises(EmptyInputError):
        fit_pca(np.zeros((0, 4)))


@pytest.mark.parametrize("brute_force", [False, True])
def test_stored_features_are_found_exactly(brute_force):
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(200, 8))
    index = AnnIndex(feats, np.zeros(200, np.int64), np.zeros((200, 3), np.int64), rng.uniform(0, 2.5, 200),
                     brute_force=brute_force)
    dist, pos = index.query(feats[[3, 50, 199]])
    np.testing.assert_array_equal(pos, [3, 50, 199])
    np.testing.assert_allclose(dist, 0.0, atol=1e-12)


def test_zero_width_basis_matches_first_entry():
    index = AnnIndex(np.zeros((3, 0)), np.zeros(3, np.int64), np.zeros((3, 3), np.int64), np.array([1.0, 2.0, 3.0]))
    dist, pos = index.query(np.zeros((2, 0)))
    np.testing.assert_array_equal(pos, [0, 0])
    np.testing.assert_array_equal(dist, [0.0, 0.0])


def test_level_zero_is_never_synthesized(ball):
    pyramid = build_pyramid(ball, 2)
    with pytest.raises(ShapeError):
        synthesize_level(pyramid, [pyramid], 0, None, None)


def _donor_setup(sphere_mesh, resolution=16, levels=2):
    meta = grid_meta_for_mesh(sphere_mesh, resolution, 3)
    donor = build_pyramid(sphere_mesh, levels, meta)
    prediction = mesh_to_df(sphere_mesh, meta)
    target = build_pyramid(prediction, levels)
    raw = donor_band_features([donor], 1)
    basis = fit_pca(raw[0], 20)
    index = build_ann_index([donor], 1, basis, brute_force=True, raw=raw)
    return donor, prediction, target, basis, index


def test_zero_passes_leave_the_level_unchanged(sphere_mesh):
    donor, _, target, basis, index = _donor_setup(sphere_mesh)
    grid, _ = synthesize_level(target, [donor], 1, basis, index, passes=0)
    np.testing.assert_array_equal(grid.values, target[1].values)


def test_voxels_outside_the_band_are_untouched(sphere_mesh):
    donor, _, target, basis, index = _donor_setup(sphere_mesh)
    grid, _ = synthesize_level(target, [donor], 1, basis, index)
    outside = ~surface_band(target[1])
    np.testing.assert_array_equal(grid.values[outside], target[1].values[outside])


def test_small_shape_rebuilds_itself_from_its_own_pyramid(sphere_mesh):
    donor, prediction, _, _, _ = _donor_setup(sphere_mesh)
    config = SynthesisConfig(levels=2, pca_dim=20, brute_force=True)
    pyramid, reports = synthesize(prediction, [donor], config)
    assert len(pyramid) == 2 and pyramid.top.dims == (32, 32, 32)
    np.testing.assert_array_equal(pyramid[0].values, np.minimum(prediction.values, 2.5))
    band = surface_band(donor[1])
    error = np.abs(pyramid.top.values[band] - donor[1].values[band]).mean()
    assert error < 0.5
    assert reports[0].level == 1 and reports[0].donor_voxels > 0
    assert reports[0].consistency < 0.5


@pytest.mark.slow
@pytest.mark.parametrize("shape", range(10))
def test_corpus_shape_rebuilds_itself_at_full_resolution(shape):
    mesh = make_model(11, shape % 4, shape // 4)
    meta = grid_meta_for_mesh(mesh, 32, 3)
    donor = build_pyramid(mesh, 3, meta)
    pyramid, reports = synthesize(donor[0], [donor], SynthesisConfig(levels=3, pca_dim=20))
    assert pyramid.top.dims == (128, 128, 128)
    band = surface_band(donor[2])
    assert np.abs(pyramid.top.values[band] - donor[2].values[band]).mean() < 0.25
    assert all(report.consistency < 0.5 for report in reports)


def test_synthesis_needs_donors(ball):
    with pytest.raises(EmptyInputError):
        synthesize(ball, [], SynthesisConfig(levels=2))
    with pytest.raises(ShapeError):
        synthesize(ball, [build_pyramid(ball, 1)], SynthesisConfig(levels=2))


def test_pyramid_store_round_trip(tmp_path, ball):
    pyramid = build_pyramid(ball, 2)
    write_pyramid(pyramid, tmp_path, "ball")
    back = read_pyramid(tmp_path, "ball", 2)
    for a, b in zip(pyramid.levels, back.levels):
        np.testing.assert_array_equal(a.values, b.values)
    assert back.top.dims == (64, 64, 64)


def test_pca_preserves_distances_and_ignores_row_order():
    rng = np.random.default_rng(4)
    feats = rng.normal(size=(120, 6)) @ rng.normal(size=(6, 6))
    basis = fit_pca(feats, 6)
    a, b = basis.project(feats[:10]), basis.project(feats[10:20])
    np.testing.assert_allclose(np.linalg.norm(a - b, axis=1), np.linalg.norm(feats[:10] - feats[10:20], axis=1),
                               rtol=1e-8)
    shuffled = fit_pca(feats[rng.permutation(len(feats))], 6)
    np.testing.assert_allclose(shuffled.basis, basis.basis, atol=1e-8)


def test_mesh_pyramid_levels_agree(sphere_mesh):
    pyramid = build_pyramid(sphere_mesh, 3, grid_meta_for_mesh(sphere_mesh, 16, 3))
    for level in (1, 2):
        assert level_consistency(pyramid, level) < 0.25
    with pytest.raises(ShapeError):
        level_consistency(pyramid, 0)


@pytest.mark.slow
@pytest.mark.parametrize("class_label", range(4))
def test_corpus_pyramid_levels_agree(class_label):
    mesh = make_model(3, class_label, 0)
    pyramid = build_pyramid(mesh, 3, grid_meta_for_mesh(mesh, 32, 3))
    for level in (1, 2):
        assert level_consistency(pyramid, level) < 0.25


def test_synthesized_values_come_from_donors(sphere_mesh):
    donor, _, target, basis, index = _donor_setup(sphere_mesh)
    grid, _ = synthesize_level(target, [donor], 1, basis, index)
    band = surface_band(target[1])
    assert np.isin(grid.values[band], donor[1].values[surface_band(donor[1])]).all()


def test_completer_refuses_a_shallow_pyramid_store(tiny_config, ball):
    store = tiny_config.paths.pyramid_dir
    write_pyramid(build_pyramid(ball, 1), store, "m000")
    write_store_manifest(store, ["m000"], 1, 32)
    completer = Completer(tiny_config)
    with pytest.raises(MissingArtifactError, match="m000"):
        completer.neighbor_pyramids(["m000"])

    write_pyramid(build_pyramid(ball, 2), store, "m001")
    write_store_manifest(store, ["m001"], 2, 32)
    [pyramid] = Completer(tiny_config).neighbor_pyramids(["m001"])
    assert len(pyramid) == 2
