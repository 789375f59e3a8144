"""Build the retrieval database: full-resolution pyramids and descriptors of every training shape."""
import logging
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from src.config import PipelineConfig
from src.dataset.training_data import read_manifest
from src.grid.grid_io import read_grid
from src.meshing.mesh_io import read_mesh
from src.models.train_classifier import extract_feature, load_classifier, model_table
from src.retrieval.index import ShapeIndex, build_index, read_index, write_index
from src.synthesis.pyramid import build_pyramid, write_pyramid, write_store_manifest

logger = logging.getLogger(__name__)

INDEX_FILE = "shapes.six"


def index_path(config: PipelineConfig) -> Path:
    return Path(config.paths.pyramid_dir) / INDEX_FILE


def build_database(config: PipelineConfig, manifest: pd.DataFrame = None) -> ShapeIndex:
    """Index every train-split model; test-split ids are recorded as excluded."""
    dataset_dir = Path(config.paths.dataset_dir)
    corpus_dir = Path(config.paths.corpus_dir)
    store = Path(config.paths.pyramid_dir)
    if manifest is None:
        manifest = read_manifest(dataset_dir / "dataset.tsv")
    corpus = read_manifest(corpus_dir / "corpus.tsv", columns=["model_id", "path"]).set_index("model_id")
    classifier = load_classifier(config)

    train = model_table(manifest, "train")
    excluded = model_table(manifest, "test")["model_id"].tolist()
    entries = []
    for row in tqdm(train.itertuples(index=False), total=len(train), desc="index"):
        target = read_grid(dataset_dir / row.target_path)
        feature = extract_feature(classifier, target, config.grid.truncation)
        mesh = read_mesh(corpus_dir / corpus.loc[row.model_id, "path"])
        pyramid = build_pyramid(mesh, config.synthesis.levels, target.meta, config.grid.truncation,
                                provenance=f"neighbor:{row.model_id}")
        write_pyramid(pyramid, store, row.model_id)
        entries.append((row.model_id, int(row.class_label), feature, row.model_id))

    write_store_manifest(store, train["model_id"].tolist(), config.synthesis.levels, config.grid.resolution)
    index = build_index(entries, excluded)
    write_index(index, index_path(config))
    logger.info("indexed %d shapes (%d excluded) into %s", len(index), len(excluded), store)
    return index


def load_database(config: PipelineConfig) -> ShapeIndex:
    return read_index(index_path(config))
