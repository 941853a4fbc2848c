"""
Run directory I/O.

Every file carries the config hash and seed: JSON documents as top-level
keys, CSV logs as a leading ``# config_hash=...,seed=...`` line. Writes go
to a temp file in the same directory and are moved into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .errors import ArtifactIOError, MissingPrerequisiteError

BUNDLE = "bundle.csv"
EMBEDDING_NET = "embedding_net.json"
EMBEDDING_TABLE = "embedding_table.json"
EMBED_LOG = "embed_log.csv"
BACKBONE = "backbone.json"
WARMUP_LOG = "warmup_log.csv"
ADAPTED_BACKBONE = "adapted_backbone.json"
GAA = "gaa.json"
ADAPT_LOG = "adapt_log.csv"
REFRESH_LOG = "refresh_log.csv"
METRICS = "metrics.json"

# artifact -> stage that writes it
PRODUCER: Dict[str, str] = {
    BUNDLE: "gen",
    EMBEDDING_NET: "embed",
    EMBEDDING_TABLE: "embed",
    EMBED_LOG: "embed",
    BACKBONE: "warmup",
    WARMUP_LOG: "warmup",
    ADAPTED_BACKBONE: "adapt",
    GAA: "adapt",
    ADAPT_LOG: "adapt",
    REFRESH_LOG: "adapt",
    METRICS: "eval",
}

PREREQUISITES: Dict[str, List[str]] = {
    "gen": [],
    "embed": [BUNDLE],
    "warmup": [BUNDLE, EMBEDDING_TABLE],
    "adapt": [BUNDLE, EMBEDDING_TABLE, BACKBONE],
    "eval": [BUNDLE, EMBEDDING_TABLE, ADAPTED_BACKBONE, GAA],
}


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ArtifactIOError(f"could not write {path}: {exc}") from exc


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ArtifactStore:
    """One run directory, stamped with a config hash and seed."""
    root: Path
    config_hash: str
    seed: int

    def path(self, name: str) -> Path:
        return self.root / name

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    @property
    def stamp(self) -> Dict[str, Any]:
        return {"config_hash": self.config_hash, "seed": self.seed}

    def stamp_line(self) -> str:
        return f"# config_hash={self.config_hash},seed={self.seed}\n"

    # ------------------------------------------------------------------ #
    def require(self, stage: str) -> None:
        """Raise if an input of ``stage`` is missing, naming the stage that writes it."""
        for name in PREREQUISITES[stage]:
            if not self.exists(name):
                raise MissingPrerequisiteError(
                    f"stage '{stage}' needs {name} in {self.root}; run '{PRODUCER[name]}' first"
                )

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        atomic_write_text(path, text)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        doc = {**self.stamp, **payload}
        return self.write_text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def read_json(self, name: str) -> Dict[str, Any]:
        path = self.path(name)
        if not path.is_file():
            raise MissingPrerequisiteError(f"{name} not found in {self.root}; run '{PRODUCER.get(name, '?')}' first")
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ArtifactIOError(f"{path} is not valid JSON (line {exc.lineno})") from exc

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        buf = io.StringIO()
        buf.write(self.stamp_line())
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(columns))
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        return self.write_text(name, buf.getvalue())

    def read_csv(self, name: str) -> List[Dict[str, str]]:
        path = self.path(name)
        if not path.is_file():
            raise MissingPrerequisiteError(f"{name} not found in {self.root}; run '{PRODUCER.get(name, '?')}' first")
        lines = path.read_text(encoding="utf-8").splitlines()
        body = [line for line in lines if not line.startswith("#")]
        return list(csv.DictReader(body))


def read_stamp(path: Path) -> Optional[Dict[str, str]]:
    """Config hash and seed recorded in an artifact, or None when absent."""
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        if "config_hash" not in doc:
            return None
        return {"config_hash": str(doc["config_hash"]), "seed": str(doc["seed"])}
    first = text.splitlines()[0] if text else ""
    if first.startswith("# config_hash="):
        pairs = dict(part.split("=", 1) for part in first[2:].split(","))
        return {"config_hash": pairs["config_hash"], "seed": pairs["seed"]}
    if first.startswith("# {"):
        header = json.loads(first[2:])
        if "config_hash" in header:
            return {"config_hash": str(header["config_hash"]), "seed": str(header["seed"])}
    return None
