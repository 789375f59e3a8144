"""Procedural shape corpus: four parametric families standing in for a CAD database.

Every model is rebuilt bit-identically from (seed, class, index), normalized so
its longest bounding-box side is one metre.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np
import pandas as pd

from src.dataset.mesh import TriMesh, box, cylinder, ellipsoid, merge, revolve

CLASS_NAMES = ["table", "chair", "plane", "lamp"]
MANIFEST_COLUMNS = ["model_id", "class_label", "class_name", "split", "path"]


def make_table(rng: np.random.Generator) -> TriMesh:
    width, depth = rng.uniform(1.0, 1.8), rng.uniform(0.6, 1.2)
    height, top = rng.uniform(0.6, 0.9), rng.uniform(0.04, 0.1)
    leg = rng.uniform(0.05, 0.1)
    inset = rng.uniform(0.0, 0.1)
    parts = [box((0, 0, height - top / 2), (width, depth, top))]
    for sx in (-1, 1):
        for sy in (-1, 1):
            x = sx * (width / 2 - leg / 2 - inset)
            y = sy * (depth / 2 - leg / 2 - inset)
            parts.append(box((x, y, (height - top) / 2), (leg, leg, height - top)))
    if rng.uniform() < 0.5:
        shelf = height * rng.uniform(0.2, 0.4)
        parts.append(box((0, 0, shelf), (width - 2 * inset - leg, depth - 2 * inset - leg, top / 2)))
    return merge(parts)


def make_chair(rng: np.random.Generator) -> TriMesh:
    width, depth = rng.uniform(0.4, 0.6), rng.uniform(0.4, 0.6)
    seat_h, seat_t = rng.uniform(0.4, 0.5), rng.uniform(0.04, 0.08)
    back_h = rng.uniform(0.35, 0.6)
    leg_r = rng.uniform(0.015, 0.03)
    parts = [
        box((0, 0, seat_h), (width, depth, seat_t)),
        box((0, -depth / 2 + seat_t / 2, seat_h + seat_t / 2 + back_h / 2), (width, seat_t, back_h)),
    ]
    leg_len = seat_h - seat_t / 2
    for sx in (-1, 1):
        for sy in (-1, 1):
            parts.append(cylinder((sx * (width / 2 - 2 * leg_r), sy * (depth / 2 - 2 * leg_r), leg_len / 2), leg_r, leg_len, segments=8))
    if rng.uniform() < 0.5:
        for sx in (-1, 1):
            parts.append(box((sx * (width / 2 - seat_t / 2), 0, seat_h + 0.2), (seat_t, depth, seat_t)))
    return merge(parts)


def make_plane(rng: np.random.Generator) -> TriMesh:
    length = rng.uniform(1.4, 2.0)
    radius = rng.uniform(0.08, 0.14)
    span = rng.uniform(1.2, 1.9)
    chord = rng.uniform(0.2, 0.35)
    wing_x = rng.uniform(-0.15, 0.15)
    parts = [
        ellipsoid((0, 0, 0), (length / 2, radius, radius), segments=12, rings=8, axis=0),
        box((wing_x, 0, 0), (chord, span, 0.03)),
        box((-length / 2 + chord / 2, 0, 0), (chord * 0.6, span * 0.35, 0.02)),
        box((-length / 2 + chord / 2, 0, radius + 0.1), (chord * 0.6, 0.02, 0.2 + rng.uniform(0, 0.1))),
    ]
    if rng.uniform() < 0.5:
        for sy in (-1, 1):
            parts.append(cylinder((wing_x + 0.05, sy * span * 0.25, -0.06), 0.04, chord * 0.9, segments=8, axis=0))
    return merge(parts)


def make_lamp(rng: np.random.Generator) -> TriMesh:
    base_r, base_h = rng.uniform(0.12, 0.2), rng.uniform(0.02, 0.05)
    stem_r, stem_h = rng.uniform(0.01, 0.025), rng.uniform(0.4, 0.8)
    shade_lo, shade_hi = rng.uniform(0.15, 0.25), rng.uniform(0.06, 0.14)
    shade_h = rng.uniform(0.15, 0.3)
    top = base_h + stem_h
    profile = [
        (0.0, 0.0), (base_r, 0.0), (base_r, base_h), (stem_r, base_h),
        (stem_r, top), (shade_lo, top), (shade_hi, top + shade_h), (0.0, top + shade_h),
    ]
    return revolve(profile, segments=16)


FAMILIES: Dict[str, Callable[[np.random.Generator], TriMesh]] = {
    "table": make_table,
    "chair": make_chair,
    "plane": make_plane,
    "lamp": make_lamp,
}


def make_model(seed: int, class_label: int, index: int) -> TriMesh:
    rng = np.random.default_rng([seed, class_label, index])
    return FAMILIES[CLASS_NAMES[class_label]](rng).normalized(1.0).cleaned()


@dataclass(frozen=True)
class CorpusEntry:
    model_id: str
    class_label: int
    split: str


def plan_corpus(seed: int, per_class: int, test_fraction: float = 0.25) -> List[CorpusEntry]:
    """Model ids with a per-class seeded train/test split; ids are disjoint across splits."""
    rng = np.random.default_rng(seed)
    entries = []
    for label, name in enumerate(CLASS_NAMES):
        order = rng.permutation(per_class)
        n_test = int(round(per_class * test_fraction))
        test = set(order[:n_test].tolist())
        entries.extend(
            CorpusEntry(f"{name}_{i:04d}", label, "test" if i in test else "train") for i in range(per_class)
        )
    return entries


def corpus_frame(entries: List[CorpusEntry], mesh_dir: str = "meshes") -> pd.DataFrame:
    return pd.DataFrame(
        [(e.model_id, e.class_label, CLASS_NAMES[e.class_label], e.split, f"{mesh_dir}/{e.model_id}.obj") for e in entries],
        columns=MANIFEST_COLUMNS,
    )
