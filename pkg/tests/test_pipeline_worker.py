from __future__ import annotations

import os

import pytest

pytest.importorskip("PyQt6")
os.environ.setdefault("QT_QPA_PLATFORM", "offscreen")

from PyQt6.QtCore import QCoreApplication  # noqa: E402

from app.degaa_core.engine import PipelineResult  # noqa: E402
from app.pipeline_worker import PipelineWorker  # noqa: E402

pytestmark = pytest.mark.gui


@pytest.fixture(scope="module")
def qt_app():
    return QCoreApplication.instance() or QCoreApplication([])


def _collect(worker):
    seen = {"log": [], "progress": [], "ok": [], "error": []}
    worker.log.connect(seen["log"].append)
    worker.progress.connect(lambda i, n, label: seen["progress"].append(label))
    worker.finished_ok.connect(seen["ok"].append)
    worker.finished_error.connect(seen["error"].append)
    return seen


def test_worker_runs_a_stage(qt_app, smoke_config, tmp_path):
    worker = PipelineWorker(smoke_config, tmp_path, stages=["gen"])
    seen = _collect(worker)
    worker.run()
    assert seen["error"] == []
    assert isinstance(seen["ok"][0], PipelineResult)
    assert seen["progress"] == ["Pre-checks", "Generate dataset", "Summary"]
    assert any(line.startswith("[GEN]") for line in seen["log"])


def test_worker_reports_missing_prerequisite(qt_app, smoke_config, tmp_path):
    worker = PipelineWorker(smoke_config, tmp_path, stages=["adapt"])
    seen = _collect(worker)
    worker.run()
    assert seen["ok"] == []
    assert "run 'gen' first" in seen["error"][0]


def test_worker_cancelled_before_start(qt_app, smoke_config, tmp_path):
    worker = PipelineWorker(smoke_config, tmp_path, stages=["gen"])
    seen = _collect(worker)
    worker.cancel()
    worker.run()
    assert seen["error"] == ["Operation cancelled."]
    assert not (tmp_path / "bundle.csv").exists()


def test_monitor_reads_configs_from_the_package(monkeypatch, tmp_path):
    import sys

    from app import window
    from app.degaa_core.config import DEFAULT_CONFIG_PATH

    monkeypatch.setattr(sys, "frozen", True, raising=False)
    monkeypatch.setattr(sys, "_MEIPASS", str(tmp_path), raising=False)
    assert window._resources_dir().resolve() == DEFAULT_CONFIG_PATH.parent
    assert (window._resources_dir() / DEFAULT_CONFIG_PATH.name).is_file()
