"""
Run monitor window.

Left panel: run configs found in resources/. Right panel: stage buttons,
comparison-study launcher, phase progress and the live pipeline log.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional

from PyQt6.QtCore import Qt
from PyQt6.QtWidgets import (
    QAbstractItemView,
    QComboBox,
    QFrame,
    QHBoxLayout,
    QLabel,
    QLineEdit,
    QListWidget,
    QListWidgetItem,
    QMainWindow,
    QProgressBar,
    QPushButton,
    QSizePolicy,
    QTextEdit,
    QVBoxLayout,
    QWidget,
)

from .degaa_core.ablation import AblationReport
from .degaa_core.config import ALL_STAGES, AblationName, RunConfig, parse_config
from .degaa_core.engine import STAGE_LABELS, PipelineResult
from .pipeline_worker import PipelineWorker


def _resources_dir() -> Path:
    return Path(__file__).parent / "resources"


_PANEL_STYLE = "QFrame#panel { background: #14161f; border: 1px solid #2a2e3d; border-radius: 12px; }"

_LIST_STYLE = """
QListWidget { background: transparent; border: none; outline: none; color: white; font-size: 13px; }
QListWidget::item { padding: 8px 12px; border-radius: 8px; }
QListWidget::item:selected { background: #1f4a66; color: #7fe3ff; }
"""

_LOG_STYLE = """
QTextEdit {
    background: #0b0c12;
    color: #9fe6a0;
    border: 1px solid #2a2e3d;
    border-radius: 8px;
    font-family: 'Menlo', 'Courier New', monospace;
    font-size: 12px;
}
"""

_BUTTON_STYLE = """
QPushButton {
    background: #1d2130; color: white; border: 1px solid #3a4157;
    border-radius: 8px; padding: 6px 14px;
}
QPushButton:hover { border-color: #7fe3ff; }
QPushButton:disabled { color: #5a6075; }
"""

_PROGRESS_STYLE = """
QProgressBar { background: #1d2130; border: 1px solid #2a2e3d; border-radius: 6px; color: transparent; }
QProgressBar::chunk { background: #2fb8e6; border-radius: 6px; }
"""

_LABEL_STYLE = "color: white; font-size: %spx; font-weight: %s;"
_SUBTLE_LABEL = "color: #8a90a6; font-size: 11px;"


class DegaaWindow(QMainWindow):
    def __init__(self):
        super().__init__()
        self.setWindowTitle("DEGAA Run Monitor")
        self.resize(1180, 760)
        self.setStyleSheet("QMainWindow { background: #0e1017; }")

        self._config_paths: List[Path] = []
        self._selected: Optional[RunConfig] = None
        self._selected_path: Optional[Path] = None
        self._worker: PipelineWorker | None = None

        central = QWidget()
        self.setCentralWidget(central)
        body_row = QHBoxLayout(central)
        body_row.setContentsMargins(20, 20, 20, 20)
        body_row.setSpacing(16)

        # Left: configs
        left_panel = self._panel()
        left_panel.setFixedWidth(260)
        left_vbox = QVBoxLayout(left_panel)
        header = QLabel("Run configs")
        header.setStyleSheet(_LABEL_STYLE % ("15", "bold"))
        left_vbox.addWidget(header)
        self.config_list = QListWidget()
        self.config_list.setStyleSheet(_LIST_STYLE)
        self.config_list.setSelectionMode(QAbstractItemView.SelectionMode.SingleSelection)
        self.config_list.currentRowChanged.connect(self._on_config_changed)
        left_vbox.addWidget(self.config_list)
        body_row.addWidget(left_panel)

        # Right: operations
        right_panel = self._panel()
        right_panel.setSizePolicy(QSizePolicy.Policy.Expanding, QSizePolicy.Policy.Expanding)
        right_vbox = QVBoxLayout(right_panel)
        right_vbox.setContentsMargins(20, 18, 20, 18)
        right_vbox.setSpacing(12)

        self.title_lbl = QLabel("Select a run config")
        self.title_lbl.setStyleSheet(_LABEL_STYLE % ("18", "bold"))
        self.detail_lbl = QLabel("")
        self.detail_lbl.setStyleSheet(_SUBTLE_LABEL)
        right_vbox.addWidget(self.title_lbl)
        right_vbox.addWidget(self.detail_lbl)

        out_row = QHBoxLayout()
        out_lbl = QLabel("Output:")
        out_lbl.setStyleSheet(_SUBTLE_LABEL)
        self.out_edit = QLineEdit("runs/default")
        out_row.addWidget(out_lbl)
        out_row.addWidget(self.out_edit)
        right_vbox.addLayout(out_row)

        stage_row = QHBoxLayout()
        self.stage_buttons: List[QPushButton] = []
        for stage in ALL_STAGES:
            btn = QPushButton(STAGE_LABELS[stage])
            btn.setStyleSheet(_BUTTON_STYLE)
            btn.clicked.connect(lambda _checked=False, s=stage: self._start_operation([s]))
            stage_row.addWidget(btn)
            self.stage_buttons.append(btn)
        self.btn_all = QPushButton("Run all")
        self.btn_all.setStyleSheet(_BUTTON_STYLE)
        self.btn_all.clicked.connect(lambda: self._start_operation(list(ALL_STAGES)))
        stage_row.addStretch()
        stage_row.addWidget(self.btn_all)
        right_vbox.addLayout(stage_row)

        ablate_row = QHBoxLayout()
        self.ablation_combo = QComboBox()
        for name in AblationName:
            self.ablation_combo.addItem(name.value, userData=name)
        self.btn_ablate = QPushButton("Run study")
        self.btn_ablate.setStyleSheet(_BUTTON_STYLE)
        self.btn_ablate.clicked.connect(self._start_ablation)
        self.btn_cancel = QPushButton("Cancel")
        self.btn_cancel.setStyleSheet(_BUTTON_STYLE)
        self.btn_cancel.setEnabled(False)
        self.btn_cancel.clicked.connect(self._cancel_operation)
        ablate_row.addWidget(self.ablation_combo)
        ablate_row.addWidget(self.btn_ablate)
        ablate_row.addStretch()
        ablate_row.addWidget(self.btn_cancel)
        right_vbox.addLayout(ablate_row)

        progress_row = QHBoxLayout()
        self.progress_bar = QProgressBar()
        self.progress_bar.setStyleSheet(_PROGRESS_STYLE)
        self.progress_bar.setRange(0, 100)
        self.progress_bar.setFixedHeight(12)
        self.progress_label = QLabel("Idle")
        self.progress_label.setStyleSheet(_SUBTLE_LABEL)
        self.progress_label.setFixedWidth(220)
        progress_row.addWidget(self.progress_bar)
        progress_row.addWidget(self.progress_label)
        right_vbox.addLayout(progress_row)

        self.log_output = QTextEdit()
        self.log_output.setReadOnly(True)
        self.log_output.setStyleSheet(_LOG_STYLE)
        right_vbox.addWidget(self.log_output)

        self.status_lbl = QLabel("Ready")
        self.status_lbl.setStyleSheet(_SUBTLE_LABEL)
        right_vbox.addWidget(self.status_lbl)

        body_row.addWidget(right_panel)
        self._load_configs()

    def _panel(self) -> QFrame:
        frame = QFrame()
        frame.setObjectName("panel")
        frame.setStyleSheet(_PANEL_STYLE)
        return frame

    # ---------------------------------------------------------------------- #
    # Config loading
    # ---------------------------------------------------------------------- #
    def _load_configs(self) -> None:
        self._config_paths = sorted(_resources_dir().glob("*.json"))
        self.config_list.clear()
        for path in self._config_paths:
            item = QListWidgetItem(path.stem)
            item.setData(Qt.ItemDataRole.UserRole, str(path))
            self.config_list.addItem(item)
        if not self._config_paths:
            self._log_line("No run configs found in app/resources/")

    def _on_config_changed(self, row: int) -> None:
        if row < 0 or row >= len(self._config_paths):
            return
        path = self._config_paths[row]
        try:
            cfg = parse_config(path)
        except Exception as exc:  # noqa: BLE001
            self._selected = None
            self._log_line(f"Config error: {exc}")
            return
        self._selected, self._selected_path = cfg, path
        data = cfg.data
        self.title_lbl.setText(path.stem)
        self.detail_lbl.setText(
            f"{data.n_sources}S{data.n_targets}T  ·  {data.shared_classes}+{data.private_classes} classes"
            f"  ·  seed {cfg.seed}"
        )
        self.out_edit.setText(f"runs/{path.stem}")

    # ---------------------------------------------------------------------- #
    # Operations
    # ---------------------------------------------------------------------- #
    def _can_start(self) -> bool:
        if self._selected is None:
            self._log_line("Select a run config first.")
            return False
        if self._worker and self._worker.isRunning():
            self._log_line("An operation is already running.")
            return False
        return True

    def _start_operation(self, stages: List[str]) -> None:
        if not self._can_start():
            return
        self._launch(PipelineWorker(self._selected, Path(self.out_edit.text()), stages=stages, parent=self),
                     f"stages {', '.join(stages)}")

    def _start_ablation(self) -> None:
        if not self._can_start():
            return
        which: AblationName = self.ablation_combo.currentData()
        self._launch(PipelineWorker(self._selected, Path(self.out_edit.text()), ablation=which, parent=self),
                     f"study {which.value}")

    def _launch(self, worker: PipelineWorker, label: str) -> None:
        self.log_output.clear()
        self._log_line(f"Starting {label}  ·  {self._selected_path.stem if self._selected_path else ''}")
        self._set_busy(True)
        self.progress_bar.setValue(0)
        self.progress_label.setText("Starting...")
        self._worker = worker
        worker.log.connect(self._log_line)
        worker.progress.connect(self._on_progress)
        worker.finished_ok.connect(self._on_finished_ok)
        worker.finished_error.connect(self._on_finished_error)
        worker.start()

    def _cancel_operation(self) -> None:
        if self._worker:
            self._worker.cancel()
            self._log_line("Cancel requested...")

    # ---------------------------------------------------------------------- #
    # Worker callbacks
    # ---------------------------------------------------------------------- #
    def _log_line(self, msg: str) -> None:
        self.log_output.append(msg)

    def _on_progress(self, idx: int, total: int, label: str) -> None:
        pct = int((idx / total) * 100) if total else 0
        self.progress_bar.setValue(pct)
        self.progress_label.setText(f"{label}  ({idx}/{total})")

    def _on_finished_ok(self, result) -> None:
        self._set_busy(False)
        self.progress_bar.setValue(100)
        self.progress_label.setText("Done")
        if isinstance(result, AblationReport):
            self._log_line(f"Study {result.which.value}: {len(result.rows)} variants, report {result.report_path}")
            self.status_lbl.setText(f"Last study: {result.which.value}")
            return
        if isinstance(result, PipelineResult):
            self._log_line(f"Completed {len(result.stages)} stages  ·  {len(result.created_files)} files  ·  "
                           f"{result.duration_seconds or 0.0:.1f}s")
            if result.metrics:
                self.status_lbl.setText(
                    f"OS {result.metrics['os']:.4f}  ·  OS* {result.metrics['os_star']:.4f}"
                )
            else:
                self.status_lbl.setText("Last run finished")

    def _on_finished_error(self, msg: str) -> None:
        self._set_busy(False)
        self.progress_bar.setValue(0)
        self.progress_label.setText("Error")
        self._log_line(f"Error: {msg}")
        self.status_lbl.setText("Error during operation")

    def _set_busy(self, busy: bool) -> None:
        for btn in self.stage_buttons:
            btn.setEnabled(not busy)
        self.btn_all.setEnabled(not busy)
        self.btn_ablate.setEnabled(not busy)
        self.ablation_combo.setEnabled(not busy)
        self.btn_cancel.setEnabled(busy)
        self.config_list.setEnabled(not busy)
        self.out_edit.setEnabled(not busy)
