"""End-to-end completion of one partial scan: classify, predict, retrieve, synthesize, mesh."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.config import PipelineConfig
from src.dataset.corpus import CLASS_NAMES
from src.dataset.mesh import TriMesh
from src.errors import MissingArtifactError
from src.grid.voxel_grid import GridKind, TwoChannelGrid, VoxelGrid
from src.meshing.marching_cubes import IsoParams, marching_cubes
from src.models.network import EncoderPredictor, ShapeClassifier
from src.models.train_classifier import classify, extract_feature
from src.models.train_epn import EpnVariant, predict
from src.retrieval.index import ShapeIndex, knn_retrieve
from src.synthesis.pyramid import SynthesisPyramid, read_pyramid, read_store_manifest
from src.synthesis.synthesize import LevelReport, synthesize

logger = logging.getLogger(__name__)


def input_as_df(partial: TwoChannelGrid) -> VoxelGrid:
    """The scan's truncated distance channel read as an unsigned distance field."""
    return VoxelGrid(partial.meta, partial.abs.values, GridKind.UNSIGNED_DF)


@dataclass
class CompletionResult:
    partial: TwoChannelGrid
    class_probs: Optional[np.ndarray] = None
    prediction: Optional[VoxelGrid] = None
    neighbors: List[Tuple[str, float]] = field(default_factory=list)
    synthesized: Optional[VoxelGrid] = None
    mesh: Optional[TriMesh] = None
    reports: List[LevelReport] = field(default_factory=list)

    @property
    def final(self) -> VoxelGrid:
        return self.synthesized if self.synthesized is not None else self.prediction


class Completer:
    """Holds the trained artifacts and runs the completion stages on partial scans."""

    def __init__(self, config: PipelineConfig, epn: Optional[EncoderPredictor] = None,
                 variant: Optional[EpnVariant] = None, classifier: Optional[ShapeClassifier] = None,
                 index: Optional[ShapeIndex] = None):
        self.config = config
        self.epn = epn
        self.variant = variant
        self.classifier = classifier
        self.index = index
        self._pyramids: Dict[str, SynthesisPyramid] = {}
        self._stored_levels: Optional[Dict[str, int]] = None

    def class_vector(self, partial: TwoChannelGrid) -> np.ndarray:
        if self.classifier is None:
            return np.full(len(CLASS_NAMES), 1.0 / len(CLASS_NAMES))
        return classify(self.classifier, input_as_df(partial), self.config.grid.truncation)

    def predict(self, partial: TwoChannelGrid, class_probs=None) -> VoxelGrid:
        if class_probs is None and self.variant.use_class_vector:
            class_probs = self.class_vector(partial)
        return predict(self.epn, partial, class_probs if self.variant.use_class_vector else None,
                       self.variant.encoding)

    def neighbor_pyramids(self, ids) -> List[SynthesisPyramid]:
        store = Path(self.config.paths.pyramid_dir)
        levels = self.config.synthesis.levels
        if self._stored_levels is None:
            manifest = read_store_manifest(store)
            self._stored_levels = manifest.groupby("model_id")["level"].max().add(1).to_dict()
        for model_id in ids:
            stored = int(self._stored_levels.get(model_id, 0))
            if stored < levels:
                raise MissingArtifactError(f"pyramid store holds {stored} levels of {model_id}, synthesis needs "
                                           f"{levels}; rerun build-index")
            if model_id not in self._pyramids:
                self._pyramids[model_id] = read_pyramid(store, model_id, levels)
        return [self._pyramids[i] for i in ids]

    def retrieve(self, df: VoxelGrid) -> List[Tuple[str, float]]:
        feature = extract_feature(self.classifier, df, self.config.grid.truncation)
        results, _ = knn_retrieve(self.index, feature, self.config.synthesis.k)
        return results

    def complete(self, partial: TwoChannelGrid, synth: bool = True, synth_only: bool = False,
                 extract_mesh: bool = True) -> CompletionResult:
        """Run every stage; ``synth_only`` feeds the scan itself to synthesis, skipping the network."""
        result = CompletionResult(partial)
        if synth_only:
            base = input_as_df(partial)
        else:
            result.class_probs = self.class_vector(partial)
            result.prediction = self.predict(partial, result.class_probs)
            base = result.prediction

        if synth or synth_only:
            source = base if self.config.synthesis.retrieval_source == "prediction" else input_as_df(partial)
            result.neighbors = self.retrieve(source)
            logger.debug("neighbours: %s", result.neighbors)
            donors = self.neighbor_pyramids([mid for mid, _ in result.neighbors])
            pyramid, result.reports = synthesize(base, donors, self.config.synthesis, self.config.grid.truncation)
            result.synthesized = pyramid.top

        if extract_mesh and result.final is not None:
            result.mesh = marching_cubes(result.final, IsoParams(self.config.mesh.iso))
        return result
