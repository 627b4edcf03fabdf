"""On-disk cache of measurement matrices keyed by content hashes."""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from .model import BoundaryLayout, MaterialField, Mesh

log = logging.getLogger(__name__)

CACHE_FORMAT_VERSION = 1


def forward_cache_key(mesh: Mesh, layout: BoundaryLayout, field: MaterialField,
                      omega: float, load_mode: str) -> str:
    """Content hash of everything the measurement matrix depends on."""
    h = hashlib.sha256()
    h.update(f"v{CACHE_FORMAT_VERSION}|".encode())
    h.update(mesh.signature())
    h.update(layout.signature())
    h.update(field.signature())
    h.update(np.float64(omega).tobytes())
    h.update(load_mode.encode())
    return h.hexdigest()


class NtdCache:
    """Measurement-matrix store; a None directory disables it."""

    def __init__(self, directory: Optional[str | Path]):
        self.directory = None if directory is None else Path(directory)

    def _path(self, key: str) -> Optional[Path]:
        if self.directory is None:
            return None
        return self.directory / f"ntd-{key}.npz"

    def load(self, key: str) -> Optional[np.ndarray]:
        path = self._path(key)
        if path is None or not path.exists():
            return None
        with np.load(path) as data:
            if int(data["format_version"]) != CACHE_FORMAT_VERSION:
                return None
            matrix = data["matrix"]
        log.info("ntd cache hit: %s", path.name)
        return matrix

    def store(self, key: str, matrix: np.ndarray) -> None:
        path = self._path(key)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp",
                                   suffix=".npz")
        os.close(fd)
        try:
            np.savez(tmp, matrix=matrix,
                     format_version=np.int64(CACHE_FORMAT_VERSION))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        log.info("ntd cache store: %s", path.name)
