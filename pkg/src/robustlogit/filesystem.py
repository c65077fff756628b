"""
Run output directories on pyfilesystem2 and the manifest written into each of them.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Mapping, Optional, Sequence

import fs
import pandas as pd
from fs.base import FS

from robustlogit.serialization import csv_writer, json_writer

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def sha256_file(path: str, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(chunk_size), b""):
            digest.update(block)
    return digest.hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    version: str
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    started: str = field(default_factory=utc_now)
    finished: Optional[str] = None
    """ `running` until the command finishes, then `ok` or `failed` """
    status: str = "running"
    error: Optional[str] = None

    def add_inputs(self, paths: Sequence[str]) -> None:
        for path in paths:
            self.inputs[path] = sha256_file(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "version": self.version,
            "inputs": dict(self.inputs),
            "outputs": list(self.outputs),
            "started": self.started,
            "finished": self.finished,
            "status": self.status,
            "error": self.error,
        }


class RunDirectory:
    """
    An output directory; any pyfilesystem2 URL (`mem://`, `osfs://...`) or a plain path.

    Every artifact written through it is listed in the manifest written by `finish`.
    """

    def __init__(self, target: FS, manifest: RunManifest):
        self.fs = target
        self.manifest = manifest

    @classmethod
    def open(cls, url: str, manifest: RunManifest) -> RunDirectory:
        target = fs.open_fs(url, writeable=True, create=True)
        return cls(target, manifest)

    def _track(self, name: str) -> None:
        if name == MANIFEST_NAME:
            raise ValueError(f"`{MANIFEST_NAME}` is reserved for the run manifest")
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)

    def write_text(self, name: str, text: str) -> None:
        self._track(name)
        with self.fs.open(name, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)

    def write_bytes(self, name: str, data: bytes) -> None:
        self._track(name)
        self.fs.writebytes(name, data)

    def write_table(self, name: str, table: pd.DataFrame) -> None:
        self.write_text(name, csv_writer.dumps(table))

    def write_json(self, name: str, payload: Mapping[str, Any]) -> None:
        self.write_text(name, json_writer.dumps(payload))

    def _write_manifest(self) -> None:
        self.manifest.finished = utc_now()
        with self.fs.open(MANIFEST_NAME, "w", encoding="utf-8", newline="") as handle:
            handle.write(json_writer.dumps(self.manifest.to_dict()))

    def finish(self) -> None:
        self.manifest.status = "ok"
        self._write_manifest()
        logger.info("Wrote %d artifacts and %s", len(self.manifest.outputs), MANIFEST_NAME)

    def fail(self, error: BaseException) -> None:
        """
        Record a failed run: partial artifacts stay listed under `outputs`.
        """
        self.manifest.status = "failed"
        self.manifest.error = f"{type(error).__name__}: {error}"
        self._write_manifest()
        logger.warning("Run failed after %d artifacts", len(self.manifest.outputs))

    def close(self) -> None:
        self.fs.close()

    def __enter__(self) -> RunDirectory:
        return self

    def __exit__(self, _type: Any, error: Optional[BaseException], _tb: Any) -> None:
        try:
            if error is not None and self.manifest.status == "running":
                self.fail(error)
        finally:
            self.close()


__all__ = [
    "MANIFEST_NAME",
    "sha256_file",
    "utc_now",
    "RunManifest",
    "RunDirectory",
]
