import os
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import HealthCheck, settings

from src.config import load_config
from src.dataset.mesh import box, ellipsoid
from src.grid.voxel_grid import GridKind, GridMeta, VoxelGrid

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("fast", max_examples=10, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def ball_df(resolution=32, radius=8.0, center=None, truncation=None):
    """Analytic distance to a solid ball in voxel units (0 inside), voxel size 1, origin 0."""
    meta = GridMeta((resolution,) * 3, 1.0)
    center = np.full(3, resolution / 2) if center is None else np.asarray(center, dtype=float)
    r = np.linalg.norm(meta.voxel_centers() - center, axis=-1)
    values = np.maximum(r - radius, 0.0)
    if truncation is not None:
        values = np.minimum(values, truncation)
    return VoxelGrid(meta, values, GridKind.UNSIGNED_DF)


@pytest.fixture
def ball():
    return ball_df()


@pytest.fixture
def unit_box():
    return box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


@pytest.fixture
def sphere_mesh():
    return ellipsoid((0.0, 0.0, 0.0), (0.5, 0.5, 0.5), segments=16, rings=8)


@pytest.fixture
def tiny_config(tmp_path):
    """Desk-test configuration: every artifact directory under ``tmp_path``."""
    data = {
        "seed": 7,
        "paths": {name: str(tmp_path / name) for name in
                  ("corpus_dir", "dataset_dir", "pyramid_dir", "checkpoint_dir", "output_dir", "logs_dir")},
        "scan": {"width": 64, "height": 48, "focal": 57.0, "view_counts": [1, 2]},
        "corpus": {"per_class": 2, "test_fraction": 0.5},
        "train": {"epochs": 1, "batch_size": 4, "channels": [4, 8, 8, 8], "latent_dim": 32,
                  "classifier_epochs": 1, "feature_dim": 16, "val_fraction": 0.0},
        "synthesis": {"levels": 2, "pca_dim": 20},
        "bench": {"resolutions": [32, 64]},
    }
    path = Path(tmp_path) / "tiny.yaml"
    path.write_text(yaml.safe_dump(data))
    return load_config(path)
