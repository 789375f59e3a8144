"""Generate the procedural corpus and the partial-scan training pairs."""
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import PipelineConfig
from src.dataset.corpus import CLASS_NAMES, corpus_frame, make_model, plan_corpus
from src.dataset.fusion import FusionParams, grid_meta_for_mesh, make_training_pair, mesh_to_df
from src.dataset.scanner import gen_trajectory, write_trajectory
from src.dataset.training_data import DATASET_COLUMNS, read_manifest, write_manifest
from src.errors import ConfigError
from src.grid.grid_io import write_grid
from src.meshing.mesh_io import read_mesh, write_mesh

logger = logging.getLogger(__name__)

TRAJECTORIES_PER_MODEL = 6


def _check_output_dir(path: Path, force: bool) -> None:
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"output directory {path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)


def generate_corpus(config: PipelineConfig, force: bool = False) -> pd.DataFrame:
    """Write one OBJ per procedural model plus ``corpus.tsv``."""
    corpus_dir = Path(config.paths.corpus_dir)
    _check_output_dir(corpus_dir, force)
    entries = plan_corpus(config.seed, config.corpus.per_class, config.corpus.test_fraction)
    frame = corpus_frame(entries)
    for entry, rel_path in tqdm(zip(entries, frame["path"]), total=len(entries), desc="corpus"):
        index = int(entry.model_id.rsplit("_", 1)[1])
        write_mesh(make_model(config.seed, entry.class_label, index), corpus_dir / rel_path)
    write_manifest(frame, corpus_dir / "corpus.tsv")
    logger.info("wrote %d models (%d classes) to %s", len(frame), len(CLASS_NAMES), corpus_dir)
    return frame


def trajectory_views(config: PipelineConfig, model_index: int, trajectory_id: int) -> int:
    counts = config.scan.view_counts
    if config.scan.randomize_views:
        rng = np.random.default_rng([config.seed, model_index, trajectory_id, 1])
        return int(rng.choice(counts))
    return int(counts[trajectory_id % len(counts)])


def scan_radius(config: PipelineConfig, mesh) -> float:
    lo, hi = mesh.bounds()
    return config.scan.radius_factor * float(np.linalg.norm(hi - lo))


def camera_intrinsics(config: PipelineConfig) -> dict:
    scan = config.scan
    return dict(fx=scan.focal, fy=scan.focal, cx=scan.width / 2, cy=scan.height / 2,
                width=scan.width, height=scan.height, far=scan.far)


def generate_dataset(config: PipelineConfig, force: bool = False) -> pd.DataFrame:
    """Six partial trajectories per corpus model, fused at the configured resolution."""
    corpus_dir = Path(config.paths.corpus_dir)
    dataset_dir = Path(config.paths.dataset_dir)
    corpus = read_manifest(corpus_dir / "corpus.tsv", columns=["model_id", "class_label", "split", "path"])
    _check_output_dir(dataset_dir, force)

    rows = []
    for model_index, model in enumerate(tqdm(corpus.itertuples(index=False), total=len(corpus), desc="dataset")):
        mesh = read_mesh(corpus_dir / model.path)
        meta = grid_meta_for_mesh(mesh, config.grid.resolution, config.grid.margin)
        params = FusionParams(meta, config.grid.truncation)
        target = mesh_to_df(mesh, meta, params.truncation)
        target_path = Path("grids") / f"{model.model_id}.target.vxg"
        write_grid(target, dataset_dir / target_path)
        lo, hi = mesh.bounds()
        for trajectory_id in range(TRAJECTORIES_PER_MODEL):
            n_views = trajectory_views(config, model_index, trajectory_id)
            cameras = gen_trajectory(
                hash_seed(config.seed, model_index, trajectory_id), n_views, scan_radius(config, mesh),
                center=(lo + hi) / 2, **camera_intrinsics(config),
            )
            pair = make_training_pair(mesh, int(model.class_label), cameras, params, model.model_id, trajectory_id, target)
            input_path = Path("grids") / f"{model.model_id}.t{trajectory_id}.input.vxg"
            write_grid(pair.input.combine(), dataset_dir / input_path)
            write_trajectory(cameras, dataset_dir / "trajectories" / f"{model.model_id}.t{trajectory_id}.txt")
            rows.append((model.model_id, int(model.class_label), trajectory_id, str(input_path), str(target_path), model.split, n_views))

    frame = pd.DataFrame(rows, columns=DATASET_COLUMNS)
    write_manifest(frame, dataset_dir / "dataset.tsv")
    logger.info("wrote %d training pairs to %s", len(frame), dataset_dir)
    return frame


def hash_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])
