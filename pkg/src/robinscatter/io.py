"""Artifact formats: binary field container, CSV datasets, JSON reports and manifests.

Field container layout (little-endian):

    magic  b"RSCF"         4 bytes
    version                u32
    nx, ny, ncomp          3 x u32
    origin, extent         4 x f64
    epsilon                f64
    seed                   i64 (-1 when absent)
    data                   nx * ny * ncomp f64, row-major [i, j, comp]

A JSON sidecar (same stem, ``.json``) repeats the header and adds free-form
metadata and the SHA-256 of the binary file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError
from .grid import GridSpec2D

MAGIC = b"RSCF"
VERSION = 1
_HEADER = struct.Struct("<4sI3I4ddq")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items()})
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# field container


def write_field(path, grid: GridSpec2D, values: np.ndarray, epsilon: float = float("nan"),
                seed: int | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    v = np.asarray(values, dtype="<f8")
    if v.shape[:2] != grid.shape or v.ndim not in (2, 3):
        raise ConfigurationError("values must have shape (nx, ny) or (nx, ny, ncomp)")
    ncomp = 1 if v.ndim == 2 else v.shape[2]
    head = _HEADER.pack(MAGIC, VERSION, grid.shape[0], grid.shape[1], ncomp, *grid.origin,
                        *grid.extent, float(epsilon), -1 if seed is None else int(seed))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(v).tobytes(order="C"))
    side = {"format": "RSCF", "version": VERSION, "grid": grid.to_dict(), "ncomp": ncomp,
            "epsilon": epsilon, "seed": seed, "sha256": sha256_file(path), "meta": meta or {}}
    write_json(path.with_suffix(".json"), side)
    return path


def read_field(path) -> tuple[GridSpec2D, np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ContractError(f"{path}: truncated header")
    magic, ver, nx, ny, nc, ox, oy, ex, ey, eps, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContractError(f"{path}: not a field container")
    if ver != VERSION:
        raise ContractError(f"{path}: unsupported version {ver}")
    n = nx * ny * nc
    data = np.frombuffer(raw, dtype="<f8", count=n, offset=_HEADER.size)
    if data.size != n:
        raise ContractError(f"{path}: truncated data")
    grid = GridSpec2D((ox, oy), (ex, ey), (nx, ny))
    vals = data.reshape((nx, ny) if nc == 1 else (nx, ny, nc)).astype(float)
    side = path.with_suffix(".json")
    meta = read_json(side) if side.exists() else {}
    meta.update({"epsilon": eps, "seed": None if seed == -1 else seed})
    return grid, vals, meta


# ---------------------------------------------------------------------------
# backscatter datasets


def write_dataset(path, points: np.ndarray, n0: np.ndarray, stderr: np.ndarray,
                  meta: dict | None = None) -> Path:
    """CSV with columns x1, x2, x3, n0, stderr plus a JSON metadata sidecar."""
    path = Path(path)
    rows = [{"x1": float(p[0]), "x2": float(p[1]), "x3": float(p[2]), "n0": float(v),
             "stderr": float(s)} for p, v, s in zip(np.asarray(points), n0, stderr)]
    write_csv(path, rows, ["x1", "x2", "x3", "n0", "stderr"])
    write_json(path.with_suffix(".json"), {"sha256": sha256_file(path), "meta": meta or {}})
    return path


def read_dataset(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
    rows = read_csv(path)
    pts = np.array([[float(r["x1"]), float(r["x2"]), float(r["x3"])] for r in rows]).reshape(-1, 3)
    n0 = np.array([float(r["n0"]) for r in rows])
    se = np.array([float(r["stderr"]) for r in rows])
    side = Path(path).with_suffix(".json")
    return pts, n0, se, (read_json(side) if side.exists() else {})


# ---------------------------------------------------------------------------
# manifest


@dataclass
class Manifest:
    """Artifacts written by a run, keyed by name, with content hashes."""

    entries: dict = field(default_factory=dict)

    def add(self, name: str, path, stage: str) -> None:
        path = Path(path)
        self.entries[name] = {"path": path.name, "stage": stage, "sha256": sha256_file(path),
                              "bytes": path.stat().st_size}

    def hashes(self) -> dict:
        return {k: v["sha256"] for k, v in sorted(self.entries.items())}

    def to_dict(self) -> dict:
        return {"artifacts": dict(sorted(self.entries.items()))}

    def write(self, path) -> Path:
        return write_json(path, self.to_dict())
