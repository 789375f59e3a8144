import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from plots.training_plotter import custom_plot_style_with_larger_figsize


def _save(fig, path):
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, facecolor="#212121")
    plt.close(fig)
    return path


def plot_method_errors(summary: pd.DataFrame, path):
    """Mean masked l1 per method, one bar group per evaluation resolution, seed std as error bars."""
    custom_plot_style_with_larger_figsize()
    methods = list(dict.fromkeys(summary["method"]))
    resolutions = sorted(summary["resolution"].unique())
    x = np.arange(len(methods))
    width = 0.8 / len(resolutions)
    fig, ax = plt.subplots(figsize=(12, 6), dpi=100)
    for i, res in enumerate(resolutions):
        rows = summary[summary["resolution"] == res].set_index("method").reindex(methods)
        ax.bar(x + (i - (len(resolutions) - 1) / 2) * width, rows["l1_error"], width,
               yerr=rows["l1_seed_std"], capsize=4, label=f"{res}³")
    ax.set_xticks(x)
    ax.set_xticklabels(methods, rotation=30, ha="right")
    ax.set_ylabel("Masked L1 Error (voxels)")
    ax.legend()
    return _save(fig, path)


def plot_class_errors(by_class: pd.DataFrame, path, resolution):
    custom_plot_style_with_larger_figsize()
    rows = by_class[by_class["resolution"] == resolution].set_index("method").drop(columns="resolution")
    classes = list(rows.columns)
    x = np.arange(len(classes))
    width = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(12, 6), dpi=100)
    for i, (method, values) in enumerate(rows.iterrows()):
        ax.bar(x + (i - (len(rows) - 1) / 2) * width, values.values, width, alpha=0.8, label=method)
    ax.set_xticks(x)
    ax.set_xticklabels(classes)
    ax.set_title(f"Masked L1 Error by Class ({resolution}³)", color="white")
    ax.legend()
    return _save(fig, path)


def plot_partialness(by_partialness: pd.DataFrame, path, resolution):
    """Error against the observed fraction of the surface, one line per method."""
    custom_plot_style_with_larger_figsize()
    rows = by_partialness[(by_partialness["resolution"] == resolution) & (by_partialness["count"] > 0)]
    fig, ax = plt.subplots(figsize=(12, 8))
    for method, group in rows.groupby("method", sort=False):
        ax.plot(group["partialness_bin"], group["mean"], marker="o", label=method)
    ax.set_xlabel("Observed Surface Fraction")
    ax.set_ylabel("Masked L1 Error (voxels)")
    ax.grid(True)
    ax.legend()
    return _save(fig, path)


def plot_benchmark(tables, output_dir):
    """All benchmark figures for the tables returned by ``run_benchmark``."""
    output_dir = Path(output_dir)
    written = [plot_method_errors(tables["summary"], output_dir / "method_errors.png")]
    for res in sorted(tables["summary"]["resolution"].unique()):
        written.append(plot_class_errors(tables["summary_by_class"], output_dir / f"class_errors_{res}.png", res))
        written.append(plot_partialness(tables["partialness"], output_dir / f"partialness_{res}.png", res))
    return written
