from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from main import main
from src import pipeline
from src.dataset.training_data import read_manifest
from src.eval.benchmark_models import summarize
from src.eval.metrics import RECORD_COLUMNS
from src.grid.grid_io import read_grid, write_grid
from src.grid.voxel_grid import GridKind
from src.meshing.mesh_io import read_mesh
from tests.conftest import ball_df


def tiny_yaml(config):
    return str(Path(config.paths.output_dir).parent / "tiny.yaml")


def test_missing_grid_exits_with_config_code(tmp_path):
    assert main(["mesh", str(tmp_path / "none.vxg")]) == 2


def test_commands_without_paths(tmp_path):
    assert main(["complete"]) == 2
    assert main(["mesh"]) == 2


def test_unknown_config_file(tmp_path):
    assert main(["bench", "--config", str(tmp_path / "none.yaml")]) == 2


def test_bad_flag_values_stop_parsing():
    with pytest.raises(SystemExit):
        main(["gen-dataset", "--views", "1,two"])
    with pytest.raises(SystemExit):
        main(["transmogrify"])


def test_conflicting_synthesis_flags(tmp_path):
    path = write_grid(ball_df(), tmp_path / "ball.vxg")
    assert main(["complete", str(path), "--no-synth", "--synth-only"]) == 2


def test_complete_rejects_a_non_tsdf_input(tmp_path, tiny_config):
    path = write_grid(ball_df(), tmp_path / "ball.vxg")
    assert main(["complete", str(path), "--config", tiny_yaml(tiny_config)]) == 3


def test_mesh_command_writes_a_readable_mesh(tmp_path, tiny_config):
    grid = write_grid(ball_df(), tmp_path / "ball.vxg")
    out = tmp_path / "meshes" / "ball.obj"
    assert main(["mesh", str(grid), str(out), "--config", tiny_yaml(tiny_config), "--iso", "1.0"]) == 0
    mesh = read_mesh(out)
    radii = np.linalg.norm(mesh.vertices - 16.0, axis=1)
    assert np.abs(radii - 9.0).max() < 0.5
    assert (out.parent / "run_record.yaml").exists()


def test_summaries_from_records():
    rows = []
    for seed, offset in ((1, 0.0), (2, 0.2)):
        for i, (cls, part) in enumerate((("chair", 0.25), ("table", 0.45), ("chair", 0.65))):
            rows.append({"model_id": f"m{i}", "class": cls, "method": "epn", "seed": seed, "resolution": 32,
                         "partialness": part, "unknown_count": 10, "l1_error": 0.5 + offset + i * 0.1,
                         "l2_error": 0.6 + offset + i * 0.1})
    records = pd.DataFrame(rows, columns=RECORD_COLUMNS)
    summary, by_class, by_partialness = summarize(records, [0.2, 0.4, 0.6, 0.8])

    row = summary.iloc[0]
    assert row["l1_error"] == pytest.approx(0.7)
    assert row["l1_seed_std"] == pytest.approx(np.std([0.6, 0.8], ddof=1))
    assert (row["seeds"], row["records"]) == (2, 6)
    assert by_class.iloc[0]["table"] == pytest.approx(0.7)
    assert list(by_partialness["count"]) == [2, 2, 2]


@pytest.mark.slow
def test_full_pipeline(tiny_config):
    pipeline.cmd_gen_corpus(tiny_config)
    pipeline.cmd_gen_dataset(tiny_config)
    pipeline.cmd_train_classifier(tiny_config)
    pipeline.cmd_train_epn(tiny_config, ["epn"])
    index = pipeline.cmd_build_index(tiny_config)
    assert len(index) > 0

    dataset_dir = Path(tiny_config.paths.dataset_dir)
    manifest = read_manifest(dataset_dir / "dataset.tsv")
    test_row = manifest[manifest["split"] == "test"].iloc[0]
    assert test_row["model_id"] not in index.model_ids

    scan = dataset_dir / test_row["input_path"]
    out = Path(tiny_config.paths.output_dir)
    first = pipeline.cmd_complete(tiny_config, scan, out / "a")
    second = pipeline.cmd_complete(tiny_config, scan, out / "b")
    assert {"input", "prediction", "neighbors", "synthesized", "mesh"} <= set(first)
    for stage in ("prediction", "synthesized"):
        assert first[stage].read_bytes() == second[stage].read_bytes()
    synthesized = read_grid(first["synthesized"])
    assert synthesized.kind == GridKind.UNSIGNED_DF and synthesized.dims == (64, 64, 64)
    assert len(pd.read_csv(first["neighbors"], sep="\t")) == tiny_config.synthesis.k

    no_synth = pipeline.cmd_complete(tiny_config, scan, out / "c", synth=False)
    assert "synthesized" not in no_synth

    tables = pipeline.cmd_bench(tiny_config)
    summary = tables["summary"]
    assert set(summary["method"]) == set(tiny_config.bench.methods)
    assert set(summary["resolution"]) == {32, 64}
    assert (summary["l1_error"] >= 0).all()
    assert (out / "bench" / "benchmark_results.txt").exists()
