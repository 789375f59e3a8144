"""Subcommands of the command line: thin wrappers that plumb config into each stage and persist its outputs."""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from plots.benchmark_plotter import plot_benchmark
from plots.training_plotter import plot_loss_history
from src.completion import Completer, CompletionResult
from src.config import PipelineConfig, snapshot_config
from src.dataset.corpus import CLASS_NAMES
from src.dataset.initialize_dataset import generate_corpus, generate_dataset
from src.errors import ConfigError, DataError
from src.eval.benchmark_models import run_benchmark
from src.grid.grid_io import read_grid, write_grid
from src.grid.voxel_grid import GridKind, split_channels
from src.meshing.marching_cubes import IsoParams, marching_cubes
from src.meshing.mesh_io import write_mesh
from src.models import train_classifier, train_epn
from src.retrieval.database import build_database, load_database

logger = logging.getLogger(__name__)

STAGE_FILES = {
    "input": "input.vxg",
    "prediction": "prediction.vxg",
    "neighbors": "neighbors.tsv",
    "synthesized": "synthesized.vxg",
    "mesh": "mesh",
}


def cmd_gen_corpus(config: PipelineConfig, force: bool = False) -> pd.DataFrame:
    frame = generate_corpus(config, force)
    snapshot_config(config, config.paths.corpus_dir, "gen-corpus")
    return frame


def cmd_gen_dataset(config: PipelineConfig, force: bool = False) -> pd.DataFrame:
    frame = generate_dataset(config, force)
    snapshot_config(config, config.paths.dataset_dir, "gen-dataset")
    return frame


def cmd_train_classifier(config: PipelineConfig, epochs: Optional[int] = None):
    model = train_classifier.train(config, epochs=epochs)
    snapshot_config(config, config.paths.checkpoint_dir, "train-classifier")
    return model


def cmd_train_epn(config: PipelineConfig, variants: Optional[List[str]] = None, epochs: Optional[int] = None):
    """Train each requested variant; ``epn-per-class`` expands to one network per class."""
    variants = list(variants or ["epn"])
    names = []
    for name in variants:
        if name == "epn-per-class":
            names.extend(f"epn-class{label}" for label in range(len(CLASS_NAMES)))
        else:
            train_epn.parse_variant(name, config)
            names.append(name)

    plot_dir = Path(config.paths.output_dir) / "plots"
    models = {}
    for name in names:
        model, history = train_epn.train(config, name, epochs=epochs)
        if history:
            plot_loss_history(pd.DataFrame(history), plot_dir / f"{name}.seed{config.seed}_loss.png", title=name)
        models[name] = model
    snapshot_config(config, config.paths.checkpoint_dir, "train-epn")
    return models


def cmd_build_index(config: PipelineConfig):
    index = build_database(config)
    snapshot_config(config, config.paths.pyramid_dir, "build-index")
    return index


def load_completer(config: PipelineConfig, synth: bool = True, synth_only: bool = False) -> Completer:
    """Loads only the artifacts the requested stages need."""
    epn, variant = (None, None) if synth_only else train_epn.load_variant(config, "epn")
    needs_classifier = synth or synth_only or variant.use_class_vector
    classifier = train_classifier.load_classifier(config) if needs_classifier else None
    index = load_database(config) if synth or synth_only else None
    return Completer(config, epn, variant, classifier, index)


def write_completion(result: CompletionResult, out_dir: Path, mesh_format: str = "obj") -> dict:
    """Persist every stage that ran; returns the written paths by stage name."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {"input": write_grid(result.partial.combine(), out_dir / STAGE_FILES["input"])}
    if result.class_probs is not None:
        probs = pd.DataFrame({"class": CLASS_NAMES, "probability": result.class_probs})
        probs.to_csv(out_dir / "class_probs.csv", index=False, float_format="%.6f")
    if result.prediction is not None:
        written["prediction"] = write_grid(result.prediction, out_dir / STAGE_FILES["prediction"])
    if result.neighbors:
        path = out_dir / STAGE_FILES["neighbors"]
        pd.DataFrame(result.neighbors, columns=["model_id", "distance"]).to_csv(
            path, sep="\t", index=False, float_format="%.8f")
        written["neighbors"] = path
    if result.synthesized is not None:
        written["synthesized"] = write_grid(result.synthesized, out_dir / STAGE_FILES["synthesized"])
        pd.DataFrame([vars(r) for r in result.reports]).to_csv(out_dir / "synthesis_levels.csv", index=False)
    if result.mesh is not None:
        written["mesh"] = write_mesh(result.mesh, out_dir / f"{STAGE_FILES['mesh']}.{mesh_format}")
    return written


def cmd_complete(config: PipelineConfig, input_path, out_dir=None, synth: bool = True,
                 synth_only: bool = False) -> dict:
    """Complete one fused scan (a TSDF VXG1 file) and write each intermediate stage."""
    if synth_only and not synth:
        raise ConfigError("--synth-only and --no-synth cannot be combined")
    input_path = Path(input_path)
    tsdf = read_grid(input_path)
    if tsdf.kind != GridKind.TSDF:
        raise DataError(f"{input_path}: expected a fused TSDF grid, got {tsdf.kind.name}")
    partial = split_channels(tsdf, config.grid.truncation)
    if not np.any(partial.known.values):
        logger.warning("%s has no observed voxels", input_path)

    completer = load_completer(config, synth, synth_only)
    result = completer.complete(partial, synth=synth, synth_only=synth_only)
    out_dir = Path(out_dir or Path(config.paths.output_dir) / "complete" / input_path.name.split(".")[0])
    written = write_completion(result, out_dir, config.mesh.format)
    snapshot_config(config, out_dir, "complete")
    logger.info("completed %s: %s", input_path, ", ".join(sorted(written)))
    return written


def cmd_mesh(config: PipelineConfig, grid_path, out_path=None) -> Path:
    """Extract the iso surface of a stored distance field or TSDF."""
    grid_path = Path(grid_path)
    grid = read_grid(grid_path)
    iso = config.mesh.iso if grid.kind == GridKind.UNSIGNED_DF else 0.0
    mesh = marching_cubes(grid, IsoParams(iso, grid.kind))
    if mesh.is_empty:
        logger.warning("%s does not cross level %.3f; writing an empty mesh", grid_path, iso)
    out_path = Path(out_path) if out_path else grid_path.with_suffix(f".{config.mesh.format}")
    write_mesh(mesh, out_path)
    snapshot_config(config, out_path.parent, "mesh")
    return out_path


def cmd_bench(config: PipelineConfig, methods: Optional[List[str]] = None):
    out_dir = Path(config.paths.output_dir) / "bench"
    tables = run_benchmark(config, methods, out_dir)
    plot_benchmark(tables, out_dir / "plots")
    snapshot_config(config, out_dir, "bench")
    return tables
