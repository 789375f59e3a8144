import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


# Define custom plotting style
def custom_plot_style_with_larger_figsize():
    plt.style.use('dark_background')
    plt.rcParams.update({
        'figure.facecolor': '#212121',
        'axes.facecolor': '#212121',
        'axes.edgecolor': 'white',
        'text.color': 'white',
        'xtick.color': 'white',
        'ytick.color': 'white',
        'grid.color': 'white',
        'grid.linestyle': '--',  # Dashed grid lines
        'axes.labelcolor': 'white',
        'font.size': 14,
        'legend.fontsize': 12,
        'lines.linewidth': 2,
        'lines.markersize': 8
    })


def _save(fig, path):
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, facecolor='#212121')
    plt.close(fig)
    return path


def plot_loss_history(history: pd.DataFrame, path, title=None):
    """Per-epoch masked l1 loss with the learning rate on a second axis."""
    custom_plot_style_with_larger_figsize()
    fig, ax = plt.subplots(figsize=(12, 8))
    epochs = history['epoch'] + 1
    ax.plot(epochs, history['mean_loss'], marker='o', linestyle='-', label="Training Loss")
    ax.set_xlabel("Epochs")
    ax.set_ylabel("Masked L1 Loss")
    ax.grid(True)
    lr_ax = ax.twinx()
    lr_ax.plot(epochs, history['lr'], color='orange', linestyle='--', label="Learning Rate")
    lr_ax.set_ylabel("Learning Rate")
    lines = ax.get_lines() + lr_ax.get_lines()
    ax.legend(lines, [line.get_label() for line in lines])
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_lightning_metrics(metrics_file_path, output_dir, prefix):
    """Training/validation curves from a Lightning ``metrics.csv``; returns the written files."""
    custom_plot_style_with_larger_figsize()
    metrics_data = pd.read_csv(metrics_file_path)
    epoch_data = metrics_data.dropna(subset=['epoch']).reset_index(drop=True)
    written = []
    for name, label in (("loss", "Loss"), ("acc", "Accuracy")):
        train_rows = epoch_data.dropna(subset=[f'train_{name}']) if f'train_{name}' in epoch_data else None
        val_rows = epoch_data.dropna(subset=[f'val_{name}']) if f'val_{name}' in epoch_data else None
        if train_rows is None and val_rows is None:
            continue
        fig, ax = plt.subplots(figsize=(12, 8))
        if train_rows is not None:
            ax.plot(train_rows['epoch'] + 1, train_rows[f'train_{name}'], marker='o', linestyle='-',
                    label=f"Training {label}")
        if val_rows is not None:
            ax.plot(val_rows['epoch'] + 1, val_rows[f'val_{name}'], marker='x', linestyle='--',
                    label=f"Validation {label}")
        ax.set_xlabel("Epochs")
        ax.set_ylabel(label)
        ax.grid(True)
        ax.legend()
        written.append(_save(fig, Path(output_dir) / f"{prefix}_{name}.png"))
    return written
