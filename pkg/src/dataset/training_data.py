"""Dataset manifest I/O, input encodings and the torch dataset over training pairs."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

import numpy as np
import pandas as pd
import torch
from torch.utils.data import Dataset

from src.errors import ConfigError, DataError, MissingArtifactError
from src.grid.grid_io import read_grid
from src.grid.voxel_grid import GridKind, TwoChannelGrid, split_channels, to_representation

DATASET_COLUMNS = ["model_id", "class_label", "trajectory_id", "input_path", "target_path", "split", "n_views"]
ENCODING_CHANNELS = {"binary": 1, "ternary": 1, "df": 1, "sdf": 2}


def read_manifest(path, columns=DATASET_COLUMNS) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"manifest not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", dtype={"model_id": str})
    except (OSError, pd.errors.ParserError) as err:
        raise DataError(f"unreadable manifest {path}: {err}") from err
    missing = set(columns) - set(frame.columns)
    if missing:
        raise DataError(f"{path}: manifest lacks columns {sorted(missing)}")
    return frame


def write_manifest(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep="\t", index=False)
    return path


def encode_input(partial: TwoChannelGrid, encoding: str = "sdf", iso_band: float = 0.5) -> np.ndarray:
    """Channel-major network input for one of the surface representations.

    ``sdf`` is the two-channel (abs distance, known mask) input; ``df`` keeps
    only the distance channel; ``binary`` and ``ternary`` discretize the fused
    TSDF around the surface band.
    """
    if encoding == "sdf":
        return partial.stacked()
    if encoding == "df":
        return partial.abs.values[None].astype(np.float32)
    tsdf = partial.combine()
    if encoding == "binary":
        return to_representation(tsdf, GridKind.OCCUPANCY, iso_band).values[None].astype(np.float32)
    if encoding == "ternary":
        return to_representation(tsdf, GridKind.TERNARY, iso_band).values[None].astype(np.float32)
    raise ConfigError(f"unknown input encoding {encoding!r}")


def one_hot(label: int, num_classes: int) -> np.ndarray:
    vec = np.zeros(num_classes, dtype=np.float32)
    vec[label] = 1.0
    return vec


class TrainingPairDataset(Dataset):
    """Training pairs listed in a dataset manifest, read lazily from VXG1 files."""

    def __init__(self, manifest: pd.DataFrame, root, num_classes: int, encoding: str = "sdf",
                 truncation: float = 2.5, split: Optional[str] = None):
        if split is not None:
            manifest = manifest[manifest["split"] == split]
        self.rows = manifest.reset_index(drop=True)
        self.root = Path(root)
        self.num_classes = num_classes
        self.encoding = encoding
        self.truncation = truncation
        if len(self.rows) == 0:
            raise DataError(f"no training pairs for split {split!r} in {self.root}")

    def __len__(self):
        return len(self.rows)

    def load_pair(self, idx: int):
        row = self.rows.iloc[idx]
        partial = split_channels(read_grid(self.root / row["input_path"]), self.truncation)
        target = read_grid(self.root / row["target_path"])
        return partial, target, int(row["class_label"])

    def __getitem__(self, idx: int) -> Dict[str, torch.Tensor]:
        partial, target, label = self.load_pair(idx)
        return {
            "input": torch.from_numpy(encode_input(partial, self.encoding)),
            "known": torch.from_numpy(partial.known.values[None].copy()),
            "target": torch.from_numpy(np.minimum(target.values, self.truncation)[None].astype(np.float32)),
            "class_probs": torch.from_numpy(one_hot(label, self.num_classes)),
            "label": torch.tensor(label, dtype=torch.long),
        }
