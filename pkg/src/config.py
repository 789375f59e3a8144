"""Pipeline configuration: YAML file, then environment, then command-line flags."""
from __future__ import annotations

import dataclasses
import datetime
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from src.errors import ConfigError


@dataclass
class PathsConfig:
    corpus_dir: str = "data/corpus"
    dataset_dir: str = "data/dataset"
    pyramid_dir: str = "data/pyramids"
    checkpoint_dir: str = "saved_models"
    output_dir: str = "outputs"
    logs_dir: str = "logs"


@dataclass
class GridConfig:
    resolution: int = 32
    margin: int = 3
    truncation: float = 2.5


@dataclass
class ScanConfig:
    width: int = 320
    height: int = 240
    focal: float = 285.0
    far: float = 10.0
    radius_factor: float = 2.5
    view_counts: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 6, 8])
    # draw each trajectory's view count at random from view_counts instead of cycling through them
    randomize_views: bool = False


@dataclass
class CorpusConfig:
    per_class: int = 200
    test_fraction: float = 0.25


@dataclass
class TrainConfig:
    epochs: int = 60
    learning_rate: float = 0.001
    batch_size: int = 32
    lr_decay_epochs: int = 20
    lr_decay: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    channels: List[int] = field(default_factory=lambda: [8, 16, 32, 64])
    latent_dim: int = 512
    use_skips: bool = True
    use_class_vector: bool = True
    encoding: str = "sdf"
    classifier_epochs: int = 30
    feature_dim: int = 128
    val_fraction: float = 0.1
    num_workers: int = 0


@dataclass
class SynthesisConfig:
    k: int = 3
    levels: int = 3
    passes: int = 2
    pca_dim: int = 100
    iso_band: float = 1.0
    patch_radius: int = 2
    ann_eps: float = 0.5
    ann_leafsize: int = 32
    brute_force: bool = False
    retrieval_source: str = "prediction"


@dataclass
class MeshConfig:
    iso: float = 0.5
    format: str = "obj"


@dataclass
class BenchConfig:
    methods: List[str] = field(default_factory=lambda: ["copy-input", "mean-shape", "epn", "epn+synth"])
    partialness_bins: List[float] = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    max_models: Optional[int] = None
    # completion-network seeds to evaluate; empty means the run seed only
    seeds: List[int] = field(default_factory=list)
    resolutions: List[int] = field(default_factory=lambda: [32, 128])


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    seed: int = 42

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _from_dict(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, f"{where}.{name}".lstrip("."))
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: invalid YAML: {err}") from err
    config = _from_dict(PipelineConfig, data, "")

    # same variables the training scripts have always read
    if os.getenv("EPOCHS"):
        config.train.epochs = int(os.environ["EPOCHS"])
    if os.getenv("LEARNING_RATE"):
        config.train.learning_rate = float(os.environ["LEARNING_RATE"])
    if os.getenv("BATCH_SIZE"):
        config.train.batch_size = int(os.environ["BATCH_SIZE"])

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.rpartition(".")
        target = getattr(config, section) if section else config
        if not hasattr(target, key):
            raise ConfigError(f"unknown override {dotted!r}")
        setattr(target, key, value)
    validate_config(config)
    return config


def validate_config(config: PipelineConfig) -> None:
    if config.grid.truncation < 1.0:
        raise ConfigError("grid.truncation must be at least one voxel")
    if config.grid.resolution <= 2 * config.grid.margin:
        raise ConfigError("grid.resolution must exceed twice the margin")
    if not config.scan.view_counts or min(config.scan.view_counts) < 1:
        raise ConfigError("scan.view_counts must be positive")
    if config.synthesis.k < 1 or config.synthesis.levels < 1:
        raise ConfigError("synthesis.k and synthesis.levels must be >= 1")
    if config.train.encoding not in ("binary", "ternary", "df", "sdf"):
        raise ConfigError(f"unknown input encoding {config.train.encoding!r}")
    if config.synthesis.retrieval_source not in ("prediction", "partial"):
        raise ConfigError(f"unknown retrieval source {config.synthesis.retrieval_source!r}")
    if config.synthesis.levels < 1 or config.grid.resolution * 2 ** (config.synthesis.levels - 1) > 256:
        raise ConfigError("synthesis.levels must keep the finest level at or below 256 voxels")
    if any(r not in (config.grid.resolution, config.grid.resolution * 2 ** (config.synthesis.levels - 1))
           for r in config.bench.resolutions):
        raise ConfigError("bench.resolutions must be the base or the finest synthesis resolution")
    if config.mesh.iso <= 0:
        raise ConfigError("mesh.iso must be positive for unsigned distance fields")


def package_versions() -> Dict[str, str]:
    import pytorch_lightning
    import scipy
    import skimage
    import sklearn
    import torch

    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "torch": str(torch.__version__),
        "pytorch_lightning": pytorch_lightning.__version__,
        "scipy": scipy.__version__,
        "scikit-image": skimage.__version__,
        "scikit-learn": sklearn.__version__,
    }


def snapshot_config(config: PipelineConfig, out_dir, command: str) -> Path:
    """Write the reproducibility record for one subcommand run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "seed": config.seed,
        "created": datetime.datetime.now().isoformat(timespec="seconds"),
        "versions": package_versions(),
        "config": config.to_dict(),
    }
    path = out_dir / "run_record.yaml"
    path.write_text(yaml.safe_dump(record, sort_keys=False))
    return path
