from pathlib import Path

import numpy as np
import pytest

from src.dataset.corpus import CLASS_NAMES, make_model, plan_corpus
from src.dataset.initialize_dataset import TRAJECTORIES_PER_MODEL, generate_corpus, generate_dataset, trajectory_views
from src.dataset.training_data import ENCODING_CHANNELS, TrainingPairDataset, encode_input, read_manifest
from src.errors import ConfigError, DataError, MissingArtifactError
from src.grid.grid_io import read_grid
from src.grid.voxel_grid import GridKind, GridMeta, VoxelGrid, split_channels
from src.meshing.mesh_io import read_mesh


def test_plan_corpus_splits_are_disjoint_and_sized():
    entries = plan_corpus(seed=3, per_class=20, test_fraction=0.25)
    assert len(entries) == 20 * len(CLASS_NAMES)
    train = {e.model_id for e in entries if e.split == "train"}
    test = {e.model_id for e in entries if e.split == "test"}
    assert not train & test
    assert len(test) == 5 * len(CLASS_NAMES)


@pytest.mark.parametrize("label", range(len(CLASS_NAMES)))
def test_models_are_deterministic_and_normalized(label):
    a, b = make_model(5, label, 1), make_model(5, label, 1)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(a.triangles, b.triangles)
    lo, hi = a.bounds()
    assert (hi - lo).max() == pytest.approx(1.0)
    assert len(a) > 0 and not np.array_equal(a.vertices, make_model(6, label, 1).vertices)


def test_encodings_have_declared_channels():
    meta = GridMeta((4, 4, 4), 1.0)
    rng = np.random.default_rng(0)
    partial = split_channels(VoxelGrid(meta, rng.uniform(-2.5, 2.5, (4, 4, 4)), GridKind.TSDF))
    for name, channels in ENCODING_CHANNELS.items():
        encoded = encode_input(partial, name)
        assert encoded.shape == (channels, 4, 4, 4)
        assert encoded.dtype == np.float32
    with pytest.raises(ConfigError):
        encode_input(partial, "voxels")


def test_view_counts_cycle_per_trajectory(tiny_config):
    assert [trajectory_views(tiny_config, 0, t) for t in range(4)] == [1, 2, 1, 2]


def test_generate_corpus_refuses_to_overwrite(tiny_config):
    frame = generate_corpus(tiny_config)
    assert len(frame) == 2 * len(CLASS_NAMES)
    corpus_dir = Path(tiny_config.paths.corpus_dir)
    assert all((corpus_dir / p).exists() for p in frame["path"])
    with pytest.raises(ConfigError):
        generate_corpus(tiny_config)
    again = generate_corpus(tiny_config, force=True)
    assert again.equals(frame)


def test_generate_dataset(tiny_config):
    tiny_config.corpus.per_class = 1
    generate_corpus(tiny_config)
    frame = generate_dataset(tiny_config)
    assert len(frame) == len(CLASS_NAMES) * TRAJECTORIES_PER_MODEL

    root = Path(tiny_config.paths.dataset_dir)
    manifest = read_manifest(root / "dataset.tsv")
    assert list(manifest["trajectory_id"][:TRAJECTORIES_PER_MODEL]) == list(range(TRAJECTORIES_PER_MODEL))
    first = manifest.iloc[0]
    tsdf = read_grid(root / first["input_path"])
    target = read_grid(root / first["target_path"])
    assert tsdf.kind == GridKind.TSDF and target.kind == GridKind.UNSIGNED_DF
    assert tsdf.dims == target.dims == (32, 32, 32)
    assert (root / "trajectories" / f"{first['model_id']}.t0.txt").exists()

    dataset = TrainingPairDataset(manifest, root, len(CLASS_NAMES))
    item = dataset[0]
    assert item["input"].shape == (2, 32, 32, 32)
    assert item["known"].shape == item["target"].shape == (1, 32, 32, 32)
    assert float(item["target"].max()) <= tiny_config.grid.truncation
    assert float(item["class_probs"].sum()) == pytest.approx(1.0)


def test_manifest_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_manifest(tmp_path / "missing.tsv")
    bad = tmp_path / "bad.tsv"
    bad.write_text("model_id\tsplit\nx\ttrain\n")
    with pytest.raises(DataError):
        read_manifest(bad)


def test_corpus_meshes_survive_the_file_round_trip(tiny_config):
    frame = generate_corpus(tiny_config)
    row = frame.iloc[0]
    mesh = read_mesh(Path(tiny_config.paths.corpus_dir) / row["path"])
    original = make_model(tiny_config.seed, int(row["class_label"]), int(row["model_id"].rsplit("_", 1)[1]))
    np.testing.assert_allclose(mesh.bounds()[0], original.bounds()[0], atol=1e-6)
