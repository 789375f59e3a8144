import datetime
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import pytorch_lightning as pl
import torch
from pytorch_lightning import seed_everything
from pytorch_lightning.callbacks import LearningRateMonitor, ModelCheckpoint
from pytorch_lightning.loggers import CSVLogger
from torch.utils.data import DataLoader, Subset

from src.config import PipelineConfig
from src.dataset.corpus import CLASS_NAMES
from src.dataset.training_data import ENCODING_CHANNELS, TrainingPairDataset, encode_input, read_manifest
from src.errors import ConfigError, DataError, NumericError
from src.grid.voxel_grid import GridKind, TwoChannelGrid, VoxelGrid
from src.models.checkpoint import load_epn1, save_epn1
from src.models.counts import measure_model
from src.models.losses import masked_l1_loss
from src.models.network import EncoderPredictor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpnVariant:
    """One trainable configuration of the completion network."""

    name: str
    use_skips: bool = True
    use_class_vector: bool = True
    encoding: str = "sdf"
    class_filter: Optional[int] = None


def parse_variant(name: str, config: PipelineConfig) -> EpnVariant:
    """``epn``, ``epn-noskip``, ``epn-noclass``, ``epn-<encoding>`` or ``epn-class<k>``."""
    train = config.train
    base = dict(use_skips=train.use_skips, use_class_vector=train.use_class_vector, encoding=train.encoding)
    if name == "epn":
        return EpnVariant(name, **base)
    if name == "epn-noskip":
        return EpnVariant(name, **{**base, "use_skips": False})
    if name == "epn-noclass":
        return EpnVariant(name, **{**base, "use_class_vector": False})
    suffix = name[len("epn-"):] if name.startswith("epn-") else None
    if suffix in ENCODING_CHANNELS:
        return EpnVariant(name, **{**base, "encoding": suffix})
    if suffix and suffix.startswith("class") and suffix[5:].isdigit():
        label = int(suffix[5:])
        if label >= len(CLASS_NAMES):
            raise ConfigError(f"variant {name!r}: no class {label}")
        return EpnVariant(name, **base, class_filter=label)
    raise ConfigError(f"unknown completion network variant {name!r}")


def checkpoint_path(config: PipelineConfig, variant: str, seed: Optional[int] = None) -> Path:
    seed = config.seed if seed is None else seed
    return Path(config.paths.checkpoint_dir) / f"{variant}.seed{seed}.epn1"


def build_model(config: PipelineConfig, variant: EpnVariant) -> EncoderPredictor:
    return EncoderPredictor(
        num_classes=len(CLASS_NAMES),
        in_channels=ENCODING_CHANNELS[variant.encoding],
        channels=config.train.channels,
        latent_dim=config.train.latent_dim,
        resolution=config.grid.resolution,
        use_skips=variant.use_skips,
        use_class_vector=variant.use_class_vector,
    )


class EpnModule(pl.LightningModule):
    def __init__(self, model: EncoderPredictor, learning_rate=0.001, betas=(0.9, 0.999), lr_decay_epochs=20,
                 lr_decay=0.5, truncation=2.5):
        super().__init__()
        self.save_hyperparameters(ignore=["model"])
        self.model = model
        self.learning_rate = learning_rate
        self.truncation = truncation

        # per-epoch mean training loss, weighted by batch size
        self.loss_history: List[dict] = []
        self._epoch_loss = 0.0
        self._epoch_count = 0

    def forward(self, x, class_probs=None):
        return self.model(x, class_probs)

    def _loss(self, batch):
        pred = self.forward(batch["input"], batch["class_probs"])
        return masked_l1_loss(pred, batch["target"], batch["known"], self.truncation)

    def training_step(self, batch, batch_idx):
        loss = self._loss(batch)
        n = batch["input"].shape[0]
        self._epoch_loss += loss.item() * n
        self._epoch_count += n
        self.log("train_loss", loss, on_step=False, on_epoch=True, batch_size=n)
        return loss

    def validation_step(self, batch, batch_idx):
        loss = self._loss(batch)
        self.log("val_loss", loss, on_step=False, on_epoch=True, batch_size=batch["input"].shape[0])
        return loss

    def on_train_epoch_end(self):
        if self._epoch_count:
            lr = self.trainer.optimizers[0].param_groups[0]["lr"]
            self.loss_history.append({
                "epoch": self.current_epoch,
                "mean_loss": self._epoch_loss / self._epoch_count,
                "lr": lr,
            })
        self._epoch_loss, self._epoch_count = 0.0, 0

    def configure_optimizers(self):
        hp = self.hparams
        optimizer = torch.optim.Adam(self.parameters(), lr=self.learning_rate, betas=tuple(hp.betas))
        scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=hp.lr_decay_epochs, gamma=hp.lr_decay)
        return [optimizer], [scheduler]


def split_train_val(dataset, val_fraction: float, seed: int):
    """Hold out whole models, not single trajectories, for validation."""
    ids = dataset.rows["model_id"].to_numpy()
    unique = np.unique(ids)
    rng = np.random.default_rng(seed)
    n_val = int(round(len(unique) * val_fraction))
    if n_val == 0 or n_val == len(unique):
        return dataset, None
    val_ids = set(rng.choice(unique, size=n_val, replace=False).tolist())
    val_mask = np.array([i in val_ids for i in ids])
    return Subset(dataset, np.flatnonzero(~val_mask).tolist()), Subset(dataset, np.flatnonzero(val_mask).tolist())


def restore_best(module: pl.LightningModule, checkpoint_callback: ModelCheckpoint) -> Optional[float]:
    """Load the best monitored epoch back into ``module``; returns its score, or None without a checkpoint."""
    best = checkpoint_callback.best_model_path
    if not best:
        return None
    state = torch.load(best, map_location="cpu", weights_only=False)
    module.load_state_dict(state["state_dict"])
    score = float(checkpoint_callback.best_model_score)
    logger.info("restored %s (%s %.4f)", Path(best).name, checkpoint_callback.monitor, score)
    return score


def write_loss_history(history: List[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(history, columns=["epoch", "mean_loss", "lr"]).to_csv(path, index=False)
    return path


def train(config: PipelineConfig, variant_name: str = "epn", manifest: Optional[pd.DataFrame] = None,
          epochs: Optional[int] = None, max_pairs: Optional[int] = None, validate: bool = True):
    """Train one variant on the train split; returns ``(model, loss_history)``.

    The best monitored epoch's weights go to an EPN1 container next to the Lightning checkpoints
    and the per-epoch loss to ``loss_history.csv`` in the run's log directory.
    """
    variant = parse_variant(variant_name, config)
    dataset_dir = Path(config.paths.dataset_dir)
    if manifest is None:
        manifest = read_manifest(dataset_dir / "dataset.tsv")
    manifest = manifest[manifest["split"] == "train"]
    if variant.class_filter is not None:
        manifest = manifest[manifest["class_label"] == variant.class_filter]
    if max_pairs is not None:
        manifest = manifest.iloc[:max_pairs]
    if len(manifest) == 0:
        raise DataError(f"no training pairs for variant {variant.name!r}")

    seed_everything(config.seed, workers=True)
    dataset = TrainingPairDataset(manifest, dataset_dir, len(CLASS_NAMES), variant.encoding, config.grid.truncation)
    train_set, val_set = split_train_val(dataset, config.train.val_fraction if validate else 0.0, config.seed)

    generator = torch.Generator().manual_seed(config.seed)
    train_loader = DataLoader(train_set, batch_size=config.train.batch_size, shuffle=True, generator=generator,
                              num_workers=config.train.num_workers)
    val_loader = None
    if val_set is not None:
        val_loader = DataLoader(val_set, batch_size=config.train.batch_size, num_workers=config.train.num_workers)

    model = build_model(config, variant)
    flops, params = measure_model(model, (model.in_channels,) + (config.grid.resolution,) * 3)
    logger.info("%s: %.3f M parameters, %.1f M multiply-adds", variant.name, params / 1e6, flops / 1e6)

    module = EpnModule(
        model,
        learning_rate=config.train.learning_rate,
        betas=(config.train.beta1, config.train.beta2),
        lr_decay_epochs=config.train.lr_decay_epochs,
        lr_decay=config.train.lr_decay,
        truncation=config.grid.truncation,
    )

    current_time = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    run_name = f"{variant.name}_seed{config.seed}_{current_time}"
    ckpt_dir = Path(config.paths.checkpoint_dir)
    checkpoint_callback = ModelCheckpoint(
        monitor="val_loss" if val_loader is not None else "train_loss",
        mode="min",
        dirpath=ckpt_dir,
        filename=f"{run_name}_best",
        save_top_k=1,
    )
    csv_logger = CSVLogger(config.paths.logs_dir, name=run_name)

    start_time = time.time()
    trainer = pl.Trainer(
        max_epochs=epochs if epochs is not None else config.train.epochs,
        callbacks=[checkpoint_callback, LearningRateMonitor(logging_interval="epoch")],
        logger=csv_logger,
        log_every_n_steps=10,
        accelerator="cpu",
        devices=1,
        deterministic=True,
        enable_progress_bar=logger.isEnabledFor(logging.INFO),
        enable_model_summary=False,
    )
    trainer.fit(module, train_loader, val_loader)
    training_time = time.time() - start_time
    restore_best(module, checkpoint_callback)
    csv_logger.log_hyperparams({"training_time": training_time, "variant": variant.name})

    if module.loss_history and not np.isfinite(module.loss_history[-1]["mean_loss"]):
        raise NumericError(f"{variant.name}: training diverged (non-finite loss)")

    write_loss_history(module.loss_history, Path(csv_logger.log_dir) / "loss_history.csv")
    save_epn1(model, checkpoint_path(config, variant.name), extra={"variant": variant.name, "encoding": variant.encoding,
                                                                 "seed": config.seed, "training_time": training_time})
    logger.info("trained %s in %.1f s", variant.name, training_time)
    return model.eval(), module.loss_history


def load_variant(config: PipelineConfig, variant_name: str, seed: Optional[int] = None):
    """Trained network plus its input encoding; a missing checkpoint names the variant."""
    variant = parse_variant(variant_name, config)
    path = checkpoint_path(config, variant.name, seed)
    if not path.exists():
        raise ConfigError(f"no trained checkpoint for variant {variant.name!r} (expected {path}); run train-epn first")
    return load_epn1(path), variant


@torch.no_grad()
def predict(model: EncoderPredictor, partial: TwoChannelGrid, class_probs=None, encoding: str = "sdf",
            zero_skips: bool = False) -> VoxelGrid:
    """32³ unsigned distance prediction for one partial scan, in inference mode."""
    model.eval()
    x = torch.from_numpy(encode_input(partial, encoding)).unsqueeze(0)
    probs = None
    if class_probs is not None:
        if abs(float(np.sum(class_probs)) - 1.0) > 1e-5:
            raise DataError(f"class vector must sum to 1, got {float(np.sum(class_probs)):.6f}")
        probs = torch.as_tensor(np.asarray(class_probs, dtype=np.float32)).unsqueeze(0)
    device = next(model.parameters()).device
    out = model(x.to(device), None if probs is None else probs.to(device), zero_skips=zero_skips)
    return VoxelGrid(partial.meta, out[0, 0].cpu().numpy(), GridKind.UNSIGNED_DF)
