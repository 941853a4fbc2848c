from __future__ import annotations

import json

import pytest

from app.degaa_core.artifacts import (
    ADAPT_LOG,
    BACKBONE,
    BUNDLE,
    EMBEDDING_TABLE,
    METRICS,
    REFRESH_LOG,
    ArtifactStore,
    read_stamp,
)
from app.degaa_core.config import config_hash
from app.degaa_core.engine import PipelineEngine, order_stages, run_seeds
from app.degaa_core.errors import DegaaConfigError, MissingPrerequisiteError, PipelineCancelled


def test_order_stages_follows_pipeline_order():
    assert order_stages(["eval", "gen", "embed"]) == ["gen", "embed", "eval"]
    with pytest.raises(DegaaConfigError, match="Unknown stages: train"):
        order_stages(["gen", "train"])


def test_gen_writes_only_the_bundle(smoke_config, tmp_path):
    result = PipelineEngine(smoke_config, tmp_path / "run").run_pipeline(["gen"])
    assert [p.name for p in result.created_files] == [BUNDLE]
    assert result.stages == ["gen"]
    assert result.metrics is None
    stamp = read_stamp(tmp_path / "run" / BUNDLE)
    assert stamp == {"config_hash": config_hash(smoke_config), "seed": str(smoke_config.seed)}


def test_missing_prerequisite_names_the_producer(smoke_config, tmp_path):
    engine = PipelineEngine(smoke_config, tmp_path)
    engine.run_pipeline(["gen"])
    with pytest.raises(MissingPrerequisiteError, match="run 'embed' first"):
        engine.run_pipeline(["warmup"])


def test_earlier_requested_stage_satisfies_prerequisite(smoke_config, tmp_path):
    result = PipelineEngine(smoke_config, tmp_path).run_pipeline(["gen", "embed"])
    assert result.stages == ["gen", "embed"]
    assert (tmp_path / EMBEDDING_TABLE).is_file()


def test_cancel_before_start(smoke_config, tmp_path):
    engine = PipelineEngine(smoke_config, tmp_path)
    engine.cancel()
    with pytest.raises(PipelineCancelled):
        engine.run_pipeline(["gen"])
    assert not (tmp_path / BUNDLE).exists()


def test_callbacks_receive_phases_and_tags(smoke_config, tmp_path):
    lines, phases = [], []
    engine = PipelineEngine(
        smoke_config,
        tmp_path,
        log_callback=lines.append,
        progress_callback=lambda i, n, label: phases.append((i, n, label)),
    )
    engine.run_pipeline(["gen"])
    assert [p[2] for p in phases] == ["Pre-checks", "Generate dataset", "Summary"]
    assert all(p[1] == 3 for p in phases)
    assert any(line.startswith("[GEN]") for line in lines)
    assert any(line.startswith("[PRECHECK]") for line in lines)


def test_output_path_that_is_a_file(smoke_config, tmp_path):
    target = tmp_path / "taken"
    target.write_text("x", encoding="utf-8")
    with pytest.raises(DegaaConfigError, match="not a directory"):
        PipelineEngine(smoke_config, target).run_pipeline(["gen"])


@pytest.mark.slow
def test_full_pipeline_is_reproducible(smoke_config, tmp_path):
    first = PipelineEngine(smoke_config, tmp_path / "a").run_pipeline()
    second = PipelineEngine(smoke_config, tmp_path / "b").run_pipeline()
    text_a = (tmp_path / "a" / METRICS).read_text(encoding="utf-8")
    text_b = (tmp_path / "b" / METRICS).read_text(encoding="utf-8")
    assert text_a == text_b
    assert first.metrics == second.metrics
    assert 0.0 <= first.metrics["os"] <= 1.0
    assert 0.0 <= first.metrics["os_star"] <= 1.0
    for name in (BUNDLE, BACKBONE, ADAPT_LOG, REFRESH_LOG, METRICS):
        assert read_stamp(tmp_path / "a" / name)["config_hash"] == first.config_hash


@pytest.mark.slow
def test_stage_by_stage_matches_single_run(smoke_config, tmp_path):
    PipelineEngine(smoke_config, tmp_path / "whole").run_pipeline()
    split = PipelineEngine(smoke_config, tmp_path / "split")
    for stage in ("gen", "embed", "warmup", "adapt", "eval"):
        split.run_pipeline([stage])
    whole = json.loads((tmp_path / "whole" / METRICS).read_text(encoding="utf-8"))
    parts = json.loads((tmp_path / "split" / METRICS).read_text(encoding="utf-8"))
    assert whole == parts


@pytest.mark.slow
def test_run_seeds_writes_summary(smoke_config, tmp_path):
    summary = run_seeds(smoke_config, tmp_path, seeds=2)
    assert summary["seeds"] == [smoke_config.seed, smoke_config.seed + 1]
    assert (tmp_path / f"seed_{smoke_config.seed}" / METRICS).is_file()
    on_disk = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert on_disk["mean"]["os"] == pytest.approx(sum(r["os"] for r in summary["per_seed"]) / 2)


def test_run_seeds_rejects_zero(smoke_config, tmp_path):
    with pytest.raises(DegaaConfigError):
        run_seeds(smoke_config, tmp_path, seeds=0)


def test_store_csv_round_trip(tmp_path):
    store = ArtifactStore(tmp_path, "abc", 3)
    store.write_csv("log.csv", ["step", "loss", "note"], [[0, 0.5, None], [1, 0.25, "x"]])
    rows = store.read_csv("log.csv")
    assert rows == [{"step": "0", "loss": "0.5", "note": ""}, {"step": "1", "loss": "0.25", "note": "x"}]
    assert read_stamp(tmp_path / "log.csv") == {"config_hash": "abc", "seed": "3"}
    with pytest.raises(MissingPrerequisiteError):
        store.read_json(METRICS)


def test_deleted_embedding_table_blocks_adapt(smoke_config, tmp_path):
    engine = PipelineEngine(smoke_config, tmp_path)
    engine.run_pipeline(["gen", "embed", "warmup"])
    (tmp_path / EMBEDDING_TABLE).unlink()
    with pytest.raises(MissingPrerequisiteError, match="run 'embed' first"):
        engine.run_pipeline(["adapt"])
