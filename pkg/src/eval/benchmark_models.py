"""Held-out evaluation of the completion methods and of classification/retrieval accuracy."""
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix
from tqdm import tqdm

from src.completion import Completer, input_as_df
from src.config import PipelineConfig
from src.dataset.corpus import CLASS_NAMES
from src.dataset.fusion import mesh_to_df
from src.dataset.training_data import read_manifest
from src.errors import ConfigError, DataError
from src.grid.grid_io import read_grid
from src.grid.voxel_grid import VoxelGrid, split_channels
from src.meshing.mesh_io import read_mesh
from src.models.train_classifier import classify, extract_feature, load_classifier
from src.models.train_epn import load_variant, parse_variant
from src.retrieval.database import load_database
from src.retrieval.index import knn_retrieve, majority_correct
from src.eval.metrics import (
    RECORD_COLUMNS,
    EvalRecord,
    masked_l1_error,
    masked_l2_error,
    partialness,
    surface_voxels,
    unknown_count,
)

logger = logging.getLogger(__name__)

BASELINES = ("copy-input", "mean-shape")
SYNTHESIS_METHODS = ("synth-only", "epn+synth")


@dataclass(frozen=True)
class TestCase:
    model_id: str
    class_label: int
    trajectory_id: int
    partial: object
    target: VoxelGrid
    mesh_path: Path


def method_needs(method: str) -> Optional[str]:
    """Completion-network variant a method runs on, if any."""
    if method in BASELINES or method == "synth-only":
        return None
    if method == "epn+synth":
        return "epn"
    return method


def check_methods(methods: List[str], config: PipelineConfig) -> None:
    for method in methods:
        variant = method_needs(method)
        if variant is not None and variant != "epn-per-class":
            parse_variant(variant, config)


def mean_shapes(manifest: pd.DataFrame, root: Path) -> Dict[int, VoxelGrid]:
    """Per-class mean ground-truth distance field over the training split."""
    train = manifest[manifest["split"] == "train"].drop_duplicates("model_id")
    means = {}
    for label, rows in train.groupby("class_label"):
        grids = [read_grid(root / p) for p in rows["target_path"]]
        means[int(label)] = grids[0].with_values(np.mean([g.values for g in grids], axis=0))
    return means


def load_cases(config: PipelineConfig, manifest: pd.DataFrame) -> List[TestCase]:
    dataset_dir = Path(config.paths.dataset_dir)
    corpus = read_manifest(Path(config.paths.corpus_dir) / "corpus.tsv", columns=["model_id", "path"])
    mesh_paths = dict(zip(corpus["model_id"], corpus["path"]))
    test = manifest[manifest["split"] == "test"].sort_values(["model_id", "trajectory_id"])
    if config.bench.max_models is not None:
        keep = sorted(test["model_id"].unique())[:config.bench.max_models]
        test = test[test["model_id"].isin(keep)]
    if len(test) == 0:
        raise DataError("no test-split training pairs to evaluate")
    cases = []
    for row in test.itertuples(index=False):
        partial = split_channels(read_grid(dataset_dir / row.input_path), config.grid.truncation)
        target = read_grid(dataset_dir / row.target_path)
        cases.append(TestCase(row.model_id, int(row.class_label), int(row.trajectory_id), partial, target,
                              Path(config.paths.corpus_dir) / mesh_paths[row.model_id]))
    return cases


class BenchmarkModel:
    """Evaluates completion methods on held-out scans and collects :class:`EvalRecord` rows."""

    def __init__(self, config: PipelineConfig, manifest: pd.DataFrame):
        self.config = config
        self.manifest = manifest
        self.records: List[EvalRecord] = []
        self._fine_gt: Dict[str, VoxelGrid] = {}
        self._classifier = None
        self._index = None

    @property
    def top_resolution(self) -> int:
        return self.config.grid.resolution * 2 ** (self.config.synthesis.levels - 1)

    def fine_target(self, case: TestCase) -> VoxelGrid:
        if case.model_id not in self._fine_gt:
            factor = self.top_resolution // self.config.grid.resolution
            mesh = read_mesh(case.mesh_path)
            self._fine_gt[case.model_id] = mesh_to_df(mesh, case.target.meta.scaled(factor), self.config.grid.truncation)
        return self._fine_gt[case.model_id]

    def classifier(self):
        if self._classifier is None:
            self._classifier = load_classifier(self.config)
        return self._classifier

    def index(self):
        if self._index is None:
            self._index = load_database(self.config)
        return self._index

    def completer(self, variant_name: Optional[str], seed: int) -> Completer:
        epn, variant = (None, None)
        if variant_name is not None:
            epn, variant = load_variant(self.config, variant_name, seed)
        needs_classifier = variant is None or variant.use_class_vector
        return Completer(self.config, epn, variant, self.classifier() if needs_classifier else None, None)

    def record(self, case: TestCase, method: str, seed: int, pred: VoxelGrid, part: float) -> None:
        known = case.partial.known.values
        trunc = self.config.grid.truncation
        resolutions = [pred.dims[0]] if pred.dims[0] != self.config.grid.resolution else self.config.bench.resolutions
        for res in resolutions:
            gt = case.target if res == self.config.grid.resolution else self.fine_target(case)
            self.records.append(EvalRecord(
                case.model_id, CLASS_NAMES[case.class_label], method, seed, res, part,
                unknown_count(known) * (res // self.config.grid.resolution) ** 3,
                masked_l1_error(pred, gt, known, trunc, upsample=True),
                masked_l2_error(pred, gt, known, trunc, upsample=True),
            ))

    def evaluate(self, method: str, cases: List[TestCase], seed: int, means=None) -> None:
        variant_name = method_needs(method)
        completers: Dict[str, Completer] = {}

        def completer_for(case):
            name = f"epn-class{case.class_label}" if variant_name == "epn-per-class" else variant_name
            if name not in completers:
                completers[name] = self.completer(name, seed)
                if method in SYNTHESIS_METHODS:
                    completers[name].classifier = self.classifier()
                    completers[name].index = self.index()
            return completers[name]

        for case in tqdm(cases, desc=f"{method} seed {seed}", leave=False):
            part = partialness(case.partial, surface_voxels(case.target))
            if method == "copy-input":
                pred = input_as_df(case.partial)
            elif method == "mean-shape":
                pred = means[case.class_label]
            else:
                result = completer_for(case).complete(
                    case.partial, synth=method in SYNTHESIS_METHODS, synth_only=method == "synth-only",
                    extract_mesh=False)
                pred = result.final
            self.record(case, method, seed, pred, part)

    def classification_accuracy(self, cases: List[TestCase], seed: int) -> pd.DataFrame:
        """Classification and top-k retrieval accuracy on raw partial inputs and on network completions."""
        classifier, index = self.classifier(), self.index()
        completer = self.completer("epn", seed)
        k = self.config.synthesis.k
        labels = [c.class_label for c in cases]
        rows, matrices = [], {}
        for source in ("partial", "epn"):
            preds, hits = [], []
            for case in cases:
                df = input_as_df(case.partial) if source == "partial" else completer.predict(case.partial)
                preds.append(int(np.argmax(classify(classifier, df, self.config.grid.truncation))))
                results, _ = knn_retrieve(index, extract_feature(classifier, df, self.config.grid.truncation), k)
                hits.append(majority_correct([index.labels[index.position(m)] for m, _ in results], case.class_label))
            matrices[source] = confusion_matrix(labels, preds, labels=list(range(len(CLASS_NAMES))))
            rows.append({"source": source, "seed": seed, "classification_accuracy": accuracy_score(labels, preds),
                         f"retrieval_accuracy_top{k}": float(np.mean(hits))})
        self.confusion = matrices
        return pd.DataFrame(rows)


def summarize(records: pd.DataFrame, bins: List[float]):
    """Per-method, per-class and per-partialness summaries computed from the record table alone."""
    per_seed = records.groupby(["method", "resolution", "seed"])[["l1_error", "l2_error"]].mean().reset_index()
    summary = per_seed.groupby(["method", "resolution"]).agg(
        l1_error=("l1_error", "mean"), l2_error=("l2_error", "mean"), l1_seed_std=("l1_error", "std"),
        seeds=("seed", "nunique")).reset_index()
    summary["l1_seed_std"] = summary["l1_seed_std"].fillna(0.0)
    counts = records.groupby(["method", "resolution"]).size().rename("records").reset_index()
    summary = summary.merge(counts, on=["method", "resolution"])

    by_class = records.pivot_table(index=["method", "resolution"], columns="class", values="l1_error",
                                   aggfunc="mean").reset_index()

    edges = np.asarray(bins, dtype=float)
    binned = records.assign(partialness_bin=pd.cut(records["partialness"], edges, right=False))
    by_partialness = binned.groupby(["method", "resolution", "partialness_bin"], observed=False)["l1_error"].agg(
        ["mean", "count"]).reset_index()
    by_partialness["partialness_bin"] = by_partialness["partialness_bin"].astype(str)
    return summary, by_class, by_partialness


def run_benchmark(config: PipelineConfig, methods: Optional[List[str]] = None, out_dir=None) -> Dict[str, pd.DataFrame]:
    """Evaluate every requested method on the test split and write CSV tables plus a text report."""
    methods = list(methods or config.bench.methods)
    check_methods(methods, config)
    seeds = list(config.bench.seeds) or [config.seed]
    out_dir = Path(out_dir or Path(config.paths.output_dir) / "bench")
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset_dir = Path(config.paths.dataset_dir)
    manifest = read_manifest(dataset_dir / "dataset.tsv")

    cases = load_cases(config, manifest)
    bench = BenchmarkModel(config, manifest)
    means = mean_shapes(manifest, dataset_dir) if "mean-shape" in methods else None
    if means is not None and set(c.class_label for c in cases) - set(means):
        raise DataError("mean-shape baseline: a test class has no training shapes")

    start_time = time.time()
    for method in methods:
        for seed in (seeds if method_needs(method) is not None or method == "synth-only" else seeds[:1]):
            bench.evaluate(method, cases, seed, means)
    records = pd.DataFrame([r.row() for r in bench.records], columns=RECORD_COLUMNS)
    records = records.sort_values(["method", "seed", "resolution", "model_id"], kind="stable").reset_index(drop=True)
    summary, by_class, by_partialness = summarize(records, config.bench.partialness_bins)

    tables = {"records": records, "summary": summary, "summary_by_class": by_class, "partialness": by_partialness}
    if "epn" in methods:
        try:
            tables["classification"] = pd.concat([bench.classification_accuracy(cases, s) for s in seeds],
                                                 ignore_index=True)
        except ConfigError as err:
            logger.warning("skipping classification/retrieval accuracy: %s", err)

    for name, table in tables.items():
        table.to_csv(out_dir / f"{name}.csv", index=False, float_format="%.6f")
    write_report(tables, out_dir / "benchmark_results.txt", time.time() - start_time)
    logger.info("benchmark of %d methods on %d scans written to %s", len(methods), len(cases), out_dir)
    return tables


def write_report(tables: Dict[str, pd.DataFrame], path: Path, elapsed: float) -> Path:
    with open(path, "w") as f:
        f.write("Masked completion error (voxel units, unknown region)\n")
        f.write(tables["summary"].to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        f.write("\n\nMean l1 error per class\n")
        f.write(tables["summary_by_class"].to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        f.write("\n\nMean l1 error by observed-surface fraction\n")
        f.write(tables["partialness"].to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        if "classification" in tables:
            f.write("\n\nClassification and retrieval accuracy\n")
            f.write(tables["classification"].to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        f.write(f"\n\nEvaluated in {elapsed:.1f} s\n")
    return path
