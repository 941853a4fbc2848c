"""
Pipeline worker: QThread wrapper for PipelineEngine and ablation runs, so
the window stays responsive while a stage trains.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

from PyQt6.QtCore import QThread, pyqtSignal

from .degaa_core.ablation import run_ablation
from .degaa_core.config import AblationName, RunConfig
from .degaa_core.engine import PipelineEngine
from .degaa_core.errors import PipelineCancelled


class PipelineWorker(QThread):
    log = pyqtSignal(str)                # a log line
    progress = pyqtSignal(int, int, str)  # (current, total, label)
    finished_ok = pyqtSignal(object)     # PipelineResult or AblationReport
    finished_error = pyqtSignal(str)     # error message

    def __init__(
        self,
        cfg: RunConfig,
        out_dir: Path,
        stages: Optional[Sequence[str]] = None,
        ablation: Optional[AblationName] = None,
        parent=None,
    ):
        super().__init__(parent)
        self._cfg = cfg
        self._out_dir = Path(out_dir)
        self._stages = list(stages) if stages is not None else None
        self._ablation = ablation
        self._engine: PipelineEngine | None = None
        self._cancelled = False

    # ------------------------------------------------------------------ #
    def cancel(self) -> None:
        self._cancelled = True
        if self._engine:
            self._engine.cancel()

    def _check_cancelled(self) -> None:
        if self._cancelled:
            raise PipelineCancelled("Pipeline cancelled by user")

    # ------------------------------------------------------------------ #
    def run(self) -> None:
        try:
            if self._ablation is not None:
                result = run_ablation(
                    self._cfg,
                    self._ablation,
                    self._out_dir,
                    log_callback=self._on_log,
                    progress_callback=self._on_progress,
                    cancel_check=self._check_cancelled,
                )
            else:
                self._engine = PipelineEngine(
                    self._cfg,
                    self._out_dir,
                    log_callback=self._on_log,
                    progress_callback=self._on_progress,
                )
                if self._cancelled:
                    self._engine.cancel()
                result = self._engine.run_pipeline(self._stages)
            self.finished_ok.emit(result)
        except PipelineCancelled:
            self.finished_error.emit("Operation cancelled.")
        except Exception as exc:  # noqa: BLE001
            self.finished_error.emit(str(exc))

    # ------------------------------------------------------------------ #
    def _on_log(self, msg: str) -> None:
        self.log.emit(msg)

    def _on_progress(self, idx: int, total: int, label: str) -> None:
        self.progress.emit(idx, total, label)
