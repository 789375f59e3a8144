"""Amanatides-Woo voxel traversal, vectorized over many segments.

Coordinates here are *cell* coordinates: cell ``i`` spans ``[i, i + 1)`` on each
axis, i.e. ``(world - origin) / voxel_size``.
"""
from __future__ import annotations

import numpy as np


def _clip_to_box(starts: np.ndarray, direction: np.ndarray, dims: np.ndarray):
    # slab test on the segment parameter t in [0, 1]
    t_enter = np.zeros(len(starts))
    t_exit = np.ones(len(starts))
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            d = direction[:, axis]
            s = starts[:, axis]
            flat = d == 0
            t_a = (0.0 - s) / d
            t_b = (dims[axis] - s) / d
            lo = np.where(flat, -np.inf, np.minimum(t_a, t_b))
            hi = np.where(flat, np.inf, np.maximum(t_a, t_b))
            outside = flat & ((s < 0) | (s > dims[axis]))
            t_enter = np.maximum(t_enter, lo)
            t_exit = np.minimum(t_exit, np.where(outside, -np.inf, hi))
    return t_enter, t_exit


def traverse_segments(starts: np.ndarray, ends: np.ndarray, dims) -> np.ndarray:
    """Boolean mask of every cell touched by any of the segments ``starts[i] -> ends[i]``."""
    dims = np.asarray(dims, dtype=np.int64)
    visited = np.zeros(tuple(dims), dtype=bool)
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 3)
    direction = ends - starts

    t_enter, t_exit = _clip_to_box(starts, direction, dims)
    keep = t_enter <= t_exit
    if not keep.any():
        return visited
    starts, direction = starts[keep], direction[keep]
    t_enter, t_exit = t_enter[keep], t_exit[keep]

    entry = starts + t_enter[:, None] * direction
    current = np.clip(np.floor(entry).astype(np.int64), 0, dims - 1)
    step = np.sign(direction).astype(np.int64)
    boundary = current + (step > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = np.where(direction != 0, (boundary - starts) / direction, np.inf)
        t_delta = np.where(direction != 0, np.abs(1.0 / direction), np.inf)

    rows = np.arange(len(current))
    active = np.ones(len(current), dtype=bool)
    while active.any():
        cells = current[active]
        visited[cells[:, 0], cells[:, 1], cells[:, 2]] = True

        axis = np.argmin(t_max, axis=1)
        t_next = t_max[rows, axis]
        active &= t_next <= t_exit
        moving = rows[active]
        ax = axis[active]
        current[moving, ax] += step[moving, ax]
        t_max[moving, ax] += t_delta[moving, ax]
        active &= np.all((current >= 0) & (current < dims), axis=1)
    return visited


def triangle_scanlines(triangles: np.ndarray, spacing: float = 0.5):
    """Cover each triangle (T, 3, 3) with segments parallel to its first edge.

    Any point of a triangle lies within ``spacing / 2`` of one of its segments.
    """
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    reach = np.maximum(np.linalg.norm(c - a, axis=1), np.linalg.norm(c - b, axis=1))
    counts = np.ceil(reach / spacing).astype(np.int64) + 1
    owner = np.repeat(np.arange(len(triangles)), counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    s = (offsets / np.maximum(counts[owner] - 1, 1))[:, None]
    starts = a[owner] + s * (c[owner] - a[owner])
    ends = b[owner] + s * (c[owner] - b[owner])
    return starts, ends, owner
