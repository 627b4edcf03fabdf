"""Result artifacts: canonical serialization and atomic writes.

All writers produce byte-identical output for identical inputs (sorted keys,
repr-exact floats, no timestamps), so re-running a scenario reproduces its
artifacts bitwise.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .cache import NtdCache, forward_cache_key  # re-exported for convenience
from .model import VoxelGrid
from .recon import ReconResult, SweepReport

__all__ = ["atomic_write_bytes", "atomic_write_text", "canonical_json",
           "write_recon_json", "write_counts_csv", "write_sweep_csv",
           "write_vtk_voxels", "scenario_hash", "NtdCache", "forward_cache_key"]


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _FloatReprEncoder(json.JSONEncoder):
    def default(self, obj):
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().default(obj)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, cls=_FloatReprEncoder) + "\n"


def write_recon_json(result: ReconResult, path: Path) -> None:
    atomic_write_text(path, canonical_json(result.to_json_dict()))


def write_counts_csv(result: ReconResult, grid: VoxelGrid, path: Path) -> None:
    """Per-voxel eigenvalue counts, one row per voxel."""
    lines = ["voxel,ix,iy,iz,count,accepted,filled"]
    accepted = set(result.accepted)
    filled = set(result.filled)
    for v in range(grid.n_voxels):
        ix, iy, iz = grid.voxel_index(v)
        lines.append(f"{v},{ix},{iy},{iz},{result.counts[v]},"
                     f"{'true' if v in accepted else 'false'},"
                     f"{'true' if v in filled else 'false'}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_sweep_csv(report: SweepReport, path: Path) -> None:
    atomic_write_text(path, report.to_csv())


def write_vtk_voxels(result: ReconResult, extent, path: Path) -> None:
    """Legacy ASCII VTK structured-points file of the filled voxel mask."""
    rx, ry, rz = result.grid_resolution
    filled = np.zeros(rx * ry * rz, dtype=np.int64)
    filled[list(result.filled)] = 1
    accepted = np.zeros_like(filled)
    accepted[list(result.accepted)] = 1
    sx, sy, sz = (e / r for e, r in zip(extent, (rx, ry, rz)))
    lines = [
        "# vtk DataFile Version 3.0",
        "voxel reconstruction",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {rx + 1} {ry + 1} {rz + 1}",
        "ORIGIN 0 0 0",
        f"SPACING {sx!r} {sy!r} {sz!r}",
        f"CELL_DATA {rx * ry * rz}",
        "SCALARS filled int 1",
        "LOOKUP_TABLE default",
    ]
    # VTK cell order is x-fastest, matching the voxel id convention.
    lines.extend(str(v) for v in filled)
    lines.append("SCALARS accepted int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(str(v) for v in accepted)
    atomic_write_text(path, "\n".join(lines) + "\n")


def scenario_hash(doc: dict) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()
