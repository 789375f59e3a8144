from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
import torch

from src.dataset.initialize_dataset import generate_corpus, generate_dataset
from src.errors import ConfigError, DataError, MissingArtifactError
from src.models import train_epn
from src.models.checkpoint import load_epn1, read_epn1, save_epn1
from src.models.network import EncoderPredictor, ShapeClassifier
from src.models.train_epn import (
    EpnModule,
    checkpoint_path,
    parse_variant,
    restore_best,
    split_train_val,
    write_loss_history,
)


def test_step_schedule_halves_every_twenty_epochs():
    module = EpnModule(EncoderPredictor(4, channels=(2, 2), latent_dim=4, resolution=8),
                       learning_rate=0.001, lr_decay_epochs=20, lr_decay=0.5)
    [optimizer], [scheduler] = module.configure_optimizers()
    rates = []
    for _ in range(60):
        rates.append(optimizer.param_groups[0]["lr"])
        optimizer.step()
        scheduler.step()
    assert rates[0] == rates[19] == pytest.approx(0.001)
    assert rates[20] == pytest.approx(0.0005)
    assert rates[40] == pytest.approx(0.00025)
    assert optimizer.param_groups[0]["betas"] == (0.9, 0.999)


def test_parse_variant(tiny_config):
    assert parse_variant("epn", tiny_config).use_skips
    assert not parse_variant("epn-noskip", tiny_config).use_skips
    assert not parse_variant("epn-noclass", tiny_config).use_class_vector
    assert parse_variant("epn-ternary", tiny_config).encoding == "ternary"
    assert parse_variant("epn-class2", tiny_config).class_filter == 2
    for bad in ("epn-class9", "cnn", "epn-voxels"):
        with pytest.raises(ConfigError):
            parse_variant(bad, tiny_config)


def test_missing_checkpoint_names_the_variant(tiny_config):
    with pytest.raises(ConfigError, match="epn-noskip"):
        train_epn.load_variant(tiny_config, "epn-noskip")
    assert checkpoint_path(tiny_config, "epn").name == "epn.seed7.epn1"


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(3)
    model = EncoderPredictor(4, channels=(2, 4), latent_dim=8, resolution=16, use_skips=False).eval()
    path = save_epn1(model, tmp_path / "m.epn1", extra={"variant": "epn-noskip"})
    descriptor, arrays = read_epn1(path)
    assert descriptor["kind"] == "epn"
    assert descriptor["extra"]["variant"] == "epn-noskip"
    back = load_epn1(path)
    assert back.architecture() == model.architecture()
    x = torch.rand(1, 2, 16, 16, 16)
    torch.testing.assert_close(back(x), model(x))

    classifier = ShapeClassifier(4, feature_dim=8, resolution=16).eval()
    assert isinstance(load_epn1(save_epn1(classifier, tmp_path / "c.epn1")), ShapeClassifier)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(MissingArtifactError):
        read_epn1(tmp_path / "none.epn1")
    bad = tmp_path / "bad.epn1"
    bad.write_bytes(b"PK\x03\x04" + b"\x00" * 16)
    with pytest.raises(DataError):
        read_epn1(bad)
    model = EncoderPredictor(4, channels=(2, 2), latent_dim=4, resolution=8)
    path = save_epn1(model, tmp_path / "cut.epn1")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(DataError):
        read_epn1(path)


def test_validation_split_holds_out_whole_models():
    rows = pd.DataFrame({"model_id": np.repeat([f"m{i}" for i in range(10)], 4)})
    dataset = SimpleNamespace(rows=rows)
    train_set, val_set = split_train_val(dataset, 0.2, seed=1)
    train_ids = set(rows["model_id"].iloc[train_set.indices])
    val_ids = set(rows["model_id"].iloc[val_set.indices])
    assert len(val_ids) == 2
    assert not train_ids & val_ids
    assert len(train_set.indices) + len(val_set.indices) == len(rows)

    whole, none = split_train_val(dataset, 0.0, seed=1)
    assert whole is dataset and none is None


def test_loss_history_file(tmp_path):
    path = write_loss_history([{"epoch": 0, "mean_loss": 1.5, "lr": 0.001}], tmp_path / "h" / "loss.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["epoch", "mean_loss", "lr"]
    assert frame["mean_loss"].iloc[0] == 1.5


@pytest.mark.slow
def test_small_network_overfits_a_few_pairs(tiny_config):
    tiny_config.corpus.per_class = 1
    tiny_config.train.learning_rate = 0.003
    generate_corpus(tiny_config)
    generate_dataset(tiny_config)
    model, history = train_epn.train(tiny_config, "epn", epochs=30, max_pairs=4, validate=False)
    assert len(history) == 30
    assert history[-1]["mean_loss"] < 0.5 * history[0]["mean_loss"]
    assert checkpoint_path(tiny_config, "epn").exists()
    loaded, variant = train_epn.load_variant(tiny_config, "epn")
    assert variant.encoding == "sdf"
    assert loaded.architecture() == model.architecture()


def test_best_checkpoint_weights_are_restored(tmp_path):
    torch.manual_seed(0)
    best = EpnModule(EncoderPredictor(4, channels=(2, 2), latent_dim=4, resolution=8))
    path = tmp_path / "best.ckpt"
    torch.save({"state_dict": best.state_dict()}, path)

    torch.manual_seed(1)
    module = EpnModule(EncoderPredictor(4, channels=(2, 2), latent_dim=4, resolution=8))
    callback = SimpleNamespace(best_model_path=str(path), best_model_score=torch.tensor(0.25), monitor="val_loss")
    assert restore_best(module, callback) == pytest.approx(0.25)
    for a, b in zip(module.parameters(), best.parameters()):
        torch.testing.assert_close(a, b)

    assert restore_best(module, SimpleNamespace(best_model_path="", best_model_score=None, monitor="val_loss")) is None
