"""Exact k-nearest-neighbour shape retrieval over classifier descriptors.

Index file layout (little-endian)::

    b"SIX1" | u32 count | u32 feature width | u32 excluded count
    count x (u16 id length, id, i32 label, f32 x width feature, u16 path length, path)
    excluded count x (u16 id length, id)
"""
from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Sequence, Tuple

import numpy as np

from src.errors import DataError, EmptyInputError, MissingArtifactError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"SIX1"


@dataclass(frozen=True, eq=False)
class ShapeIndex:
    model_ids: Tuple[str, ...]
    labels: np.ndarray
    features: np.ndarray
    pyramid_paths: Tuple[str, ...]
    excluded: FrozenSet[str] = field(default_factory=frozenset)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float32)
        if features.ndim != 2 or len(features) != len(self.model_ids):
            raise ShapeError(f"expected ({len(self.model_ids)}, width) features, got {features.shape}")
        if not (len(self.labels) == len(self.pyramid_paths) == len(self.model_ids)):
            raise ShapeError("index columns have different lengths")
        leaked = self.excluded.intersection(self.model_ids)
        if leaked:
            raise DataError(f"excluded models present in the index: {sorted(leaked)[:5]}")
        features.setflags(write=False)
        labels = np.asarray(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.model_ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def position(self, model_id: str) -> int:
        return self.model_ids.index(model_id)


def build_index(entries: Iterable[Tuple[str, int, np.ndarray, str]], excluded: Iterable[str] = ()) -> ShapeIndex:
    """Index ``(model_id, label, feature, pyramid_path)`` entries, dropping excluded ids."""
    excluded = frozenset(excluded)
    kept = [e for e in entries if e[0] not in excluded]
    if not kept:
        raise EmptyInputError("no shapes left to index")
    ids, labels, feats, paths = zip(*kept)
    return ShapeIndex(tuple(ids), np.asarray(labels), np.stack(feats), tuple(paths), excluded)


def knn_retrieve(index: ShapeIndex, query: np.ndarray, k: int = 3) -> Tuple[List[Tuple[str, float]], bool]:
    """Exact ``k`` nearest models by Euclidean distance, ascending, ties by model id.

    Returns the result list and a flag that is set when ``k`` exceeded the
    index size and every entry was returned.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise EmptyInputError("cannot query an empty index")
    query = np.asarray(query, dtype=np.float64).ravel()
    if query.shape[0] != index.feature_dim:
        raise ShapeError(f"query width {query.shape[0]} != index width {index.feature_dim}")
    dist = np.linalg.norm(index.features.astype(np.float64) - query, axis=1)
    order = np.lexsort((np.asarray(index.model_ids), dist))
    truncated = k > len(index)
    if truncated:
        logger.warning("k=%d exceeds the %d indexed shapes; returning all", k, len(index))
    top = order[:k]
    return [(index.model_ids[i], float(dist[i])) for i in top], truncated


def majority_correct(neighbor_labels: Sequence[int], true_label: int) -> bool:
    """True if ``true_label`` is among the most frequent neighbour labels."""
    counts = Counter(int(l) for l in neighbor_labels)
    best = max(counts.values())
    return counts.get(int(true_label), 0) == best


def retrieval_accuracy(index: ShapeIndex, queries: np.ndarray, labels: Sequence[int], k: int = 3) -> float:
    """Fraction of queries whose majority top-``k`` class is the true class."""
    queries = np.atleast_2d(np.asarray(queries))
    if len(queries) == 0:
        return float("nan")
    correct = 0
    for query, label in zip(queries, labels):
        results, _ = knn_retrieve(index, query, k)
        neighbor_labels = [index.labels[index.position(mid)] for mid, _ in results]
        correct += majority_correct(neighbor_labels, label)
    return correct / len(queries)


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def write_index(index: ShapeIndex, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    parts = [MAGIC, struct.pack("<III", len(index), index.feature_dim, len(index.excluded))]
    for mid, label, feat, pyr in zip(index.model_ids, index.labels, index.features, index.pyramid_paths):
        parts += [_pack_str(mid), struct.pack("<i", int(label)), feat.astype("<f4").tobytes(), _pack_str(pyr)]
    parts += [_pack_str(mid) for mid in sorted(index.excluded)]
    path.write_bytes(b"".join(parts))
    return path


def read_index(path) -> ShapeIndex:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"shape index not found: {path}; run build-index first")
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a shape index")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise DataError(f"{path}: truncated shape index")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    def take_str():
        (n,) = struct.unpack("<H", take(2))
        return take(n).decode("utf-8")

    count, width, n_excluded = struct.unpack("<III", take(12))
    ids, labels, feats, paths = [], [], [], []
    for _ in range(count):
        ids.append(take_str())
        labels.append(struct.unpack("<i", take(4))[0])
        feats.append(np.frombuffer(take(4 * width), dtype="<f4"))
        paths.append(take_str())
    excluded = frozenset(take_str() for _ in range(n_excluded))
    if pos != len(raw):
        raise DataError(f"{path}: {len(raw) - pos} trailing bytes in shape index")
    features = np.stack(feats) if feats else np.zeros((0, width), np.float32)
    return ShapeIndex(tuple(ids), np.asarray(labels, dtype=np.int64), features, tuple(paths), excluded)
