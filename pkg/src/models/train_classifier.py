import datetime
import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import pytorch_lightning as pl
import torch
from pytorch_lightning import seed_everything
from pytorch_lightning.callbacks import LearningRateMonitor, ModelCheckpoint
from pytorch_lightning.loggers import CSVLogger
from torch.utils.data import DataLoader, Dataset
from torchmetrics.classification import MulticlassAccuracy, MulticlassConfusionMatrix, MulticlassF1Score

from src.config import PipelineConfig
from src.dataset.corpus import CLASS_NAMES
from src.dataset.training_data import read_manifest
from src.errors import ConfigError, DataError
from src.grid.grid_io import read_grid
from src.grid.voxel_grid import DEFAULT_TRUNCATION, VoxelGrid
from src.models.checkpoint import load_epn1, save_epn1
from src.models.network import ShapeClassifier
from src.models.train_epn import restore_best, split_train_val

logger = logging.getLogger(__name__)

CLASSIFIER_FILE = "classifier.epn1"


def model_table(manifest: pd.DataFrame, split: Optional[str] = None) -> pd.DataFrame:
    """One row per model (its complete target DF) from a training-pair manifest."""
    table = manifest.drop_duplicates("model_id")[["model_id", "class_label", "target_path", "split"]]
    if split is not None:
        table = table[table["split"] == split]
    return table.sort_values("model_id").reset_index(drop=True)


class CompleteShapeDataset(Dataset):
    def __init__(self, table: pd.DataFrame, root, truncation=DEFAULT_TRUNCATION):
        self.rows = table.reset_index(drop=True)
        self.root = Path(root)
        self.truncation = truncation
        if len(self.rows) == 0:
            raise DataError(f"no complete shapes listed under {self.root}")

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, idx):
        row = self.rows.iloc[idx]
        values = np.minimum(read_grid(self.root / row["target_path"]).values, self.truncation)
        return torch.from_numpy(values[None].astype(np.float32)), torch.tensor(int(row["class_label"]))


class ClassifierModule(pl.LightningModule):
    def __init__(self, model: ShapeClassifier, learning_rate=0.001, lr_decay_epochs=20, lr_decay=0.5):
        super().__init__()
        self.save_hyperparameters(ignore=["model"])
        self.model = model
        self.criterion = torch.nn.CrossEntropyLoss()
        self.learning_rate = learning_rate

        num_classes = model.num_classes
        self.train_acc = MulticlassAccuracy(num_classes=num_classes)
        self.val_acc = MulticlassAccuracy(num_classes=num_classes)
        self.val_f1 = MulticlassF1Score(num_classes=num_classes, average="macro")
        self.confusion_matrix = MulticlassConfusionMatrix(num_classes=num_classes)

    def forward(self, x):
        return self.model(x)

    def training_step(self, batch, batch_idx):
        x, y = batch
        logits = self.forward(x)
        loss = self.criterion(logits, y)
        self.train_acc(logits.argmax(dim=1), y)
        self.log("train_loss", loss, on_step=False, on_epoch=True, batch_size=len(y))
        self.log("train_acc", self.train_acc, on_step=False, on_epoch=True, batch_size=len(y))
        return loss

    def validation_step(self, batch, batch_idx):
        x, y = batch
        logits = self.forward(x)
        loss = self.criterion(logits, y)
        preds = logits.argmax(dim=1)
        self.val_acc(preds, y)
        self.val_f1(preds, y)
        self.confusion_matrix.update(preds, y)
        self.log("val_loss", loss, on_step=False, on_epoch=True, batch_size=len(y))
        self.log("val_acc", self.val_acc, on_step=False, on_epoch=True, batch_size=len(y))
        self.log("val_f1", self.val_f1, on_step=False, on_epoch=True, batch_size=len(y))
        return loss

    def on_validation_epoch_end(self):
        matrix = self.confusion_matrix.compute().cpu().numpy()
        # per-class misses from the confusion matrix
        false_negatives = matrix.sum(axis=1) - np.diag(matrix)
        for i, fn in enumerate(false_negatives):
            self.log(f"class_{i}_fn", float(fn), on_epoch=True)
        self.confusion_matrix.reset()

    def configure_optimizers(self):
        optimizer = torch.optim.Adam(self.parameters(), lr=self.learning_rate)
        scheduler = torch.optim.lr_scheduler.StepLR(optimizer, step_size=self.hparams.lr_decay_epochs,
                                                    gamma=self.hparams.lr_decay)
        return [optimizer], [scheduler]


def train(config: PipelineConfig, manifest: Optional[pd.DataFrame] = None, epochs: Optional[int] = None):
    """Fit the classifier on complete train-split shapes, holding out ``val_fraction`` of them for validation.

    Test-split shapes are never seen; the best monitored epoch's weights are kept.
    """
    dataset_dir = Path(config.paths.dataset_dir)
    if manifest is None:
        manifest = read_manifest(dataset_dir / "dataset.tsv")
    seed_everything(config.seed, workers=True)

    dataset = CompleteShapeDataset(model_table(manifest, "train"), dataset_dir, config.grid.truncation)
    train_set, val_set = split_train_val(dataset, config.train.val_fraction, config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    train_loader = DataLoader(train_set, batch_size=config.train.batch_size, shuffle=True, generator=generator,
                              num_workers=config.train.num_workers)
    val_loader = None
    if val_set is not None:
        val_loader = DataLoader(val_set, batch_size=config.train.batch_size, num_workers=config.train.num_workers)

    model = ShapeClassifier(len(CLASS_NAMES), config.train.feature_dim, config.grid.resolution)
    module = ClassifierModule(model, config.train.learning_rate, config.train.lr_decay_epochs, config.train.lr_decay)

    current_time = datetime.datetime.now().strftime("%Y-%m-%d_%H-%M-%S")
    run_name = f"classifier_seed{config.seed}_{current_time}"
    checkpoint_callback = ModelCheckpoint(
        monitor="val_acc" if val_loader is not None else "train_acc",
        mode="max",
        dirpath=config.paths.checkpoint_dir,
        filename=f"{run_name}_best",
        save_top_k=1,
    )
    csv_logger = CSVLogger(config.paths.logs_dir, name=run_name)

    start_time = time.time()
    trainer = pl.Trainer(
        max_epochs=epochs if epochs is not None else config.train.classifier_epochs,
        callbacks=[checkpoint_callback, LearningRateMonitor(logging_interval="epoch")],
        logger=csv_logger,
        log_every_n_steps=10,
        accelerator="cpu",
        devices=1,
        deterministic=True,
        enable_model_summary=False,
    )
    trainer.fit(module, train_loader, val_loader)
    training_time = time.time() - start_time
    restore_best(module, checkpoint_callback)
    csv_logger.log_hyperparams({"training_time": training_time})

    save_epn1(model, Path(config.paths.checkpoint_dir) / CLASSIFIER_FILE, extra={"seed": config.seed})
    logger.info("classifier trained in %.1f s", training_time)
    return model.eval()


def load_classifier(config: PipelineConfig) -> ShapeClassifier:
    path = Path(config.paths.checkpoint_dir) / CLASSIFIER_FILE
    if not path.exists():
        raise ConfigError(f"no trained classifier (expected {path}); run train-classifier first")
    return load_epn1(path)


def _as_input(model: ShapeClassifier, df: VoxelGrid, truncation: float) -> torch.Tensor:
    param = next(model.parameters())
    values = np.minimum(np.asarray(df.values), truncation)[None, None]
    return torch.from_numpy(values.copy()).to(device=param.device, dtype=param.dtype)


@torch.no_grad()
def classify(model: ShapeClassifier, df: VoxelGrid, truncation: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """Softmax class probabilities for one distance field."""
    model.eval()
    return torch.softmax(model(_as_input(model, df, truncation)).double(), dim=1)[0].cpu().numpy()


@torch.no_grad()
def extract_feature(model: ShapeClassifier, df: VoxelGrid, truncation: float = DEFAULT_TRUNCATION) -> np.ndarray:
    """L2-normalized penultimate activations."""
    model.eval()
    return model.features(_as_input(model, df, truncation))[0].cpu().numpy().astype(np.float64)
