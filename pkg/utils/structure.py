#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Run-directory layout and atomic file writes.

Every training run writes into one output directory:

    <out>/
        ├─ run.json              (config, variant, dataset, schema version)
        ├─ metrics.csv           (append-only training log)
        ├─ checkpoints/
        │   ├─ best.ckpt         (best running reconstruction loss)
        │   ├─ latest.ckpt
        │   └─ ckpt_<iter>.ckpt  (periodic)
        └─ samples/
            └─ samples_<iter>.ppm (fixed-code sample grids)
"""

from __future__ import annotations

import json
import os
import pathlib
import re
import tempfile
from typing import Any, Dict, List, Optional

SCHEMA_VERSION = "1.0"

_CKPT_PATTERN = re.compile(r"^ckpt_(\d+)\.ckpt$")


def create_run_dir(out_dir: pathlib.Path) -> pathlib.Path:
    """
    Create the run directory tree (idempotent).

    Args:
        out_dir: Root of the run

    Returns:
        The resolved run directory
    """
    out_dir = out_dir.resolve()
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)
    return out_dir


def metrics_path(run_dir: pathlib.Path) -> pathlib.Path:
    return run_dir / "metrics.csv"


def best_checkpoint_path(run_dir: pathlib.Path) -> pathlib.Path:
    return run_dir / "checkpoints" / "best.ckpt"


def latest_checkpoint_path(run_dir: pathlib.Path) -> pathlib.Path:
    return run_dir / "checkpoints" / "latest.ckpt"


def periodic_checkpoint_path(run_dir: pathlib.Path, iteration: int) -> pathlib.Path:
    return run_dir / "checkpoints" / f"ckpt_{iteration:08d}.ckpt"


def sample_grid_path(run_dir: pathlib.Path, iteration: int) -> pathlib.Path:
    return run_dir / "samples" / f"samples_{iteration:08d}.ppm"


def list_checkpoints(run_dir: pathlib.Path) -> List[pathlib.Path]:
    """
    List periodic checkpoints of a run, oldest first.

    best.ckpt and latest.ckpt are not included.
    """
    ckpt_dir = run_dir / "checkpoints"
    if not ckpt_dir.exists():
        return []
    found = [p for p in ckpt_dir.iterdir() if p.is_file() and _CKPT_PATTERN.match(p.name)]
    return sorted(found, key=lambda p: int(_CKPT_PATTERN.match(p.name).group(1)))


def find_latest_checkpoint(run_dir: pathlib.Path) -> Optional[pathlib.Path]:
    """Most recent checkpoint of a run: latest.ckpt, else the newest periodic one."""
    latest = latest_checkpoint_path(run_dir)
    if latest.exists():
        return latest
    periodic = list_checkpoints(run_dir)
    return periodic[-1] if periodic else None


def save_run_info(run_dir: pathlib.Path, info: Dict[str, Any]) -> None:
    """Save run metadata atomically, stamping the schema version."""
    info = dict(info)
    info["schema_version"] = SCHEMA_VERSION
    atomic_write_json(run_dir / "run.json", info)


def load_run_info(run_dir: pathlib.Path) -> Dict[str, Any]:
    run_json = run_dir / "run.json"
    if run_json.exists():
        return json.loads(run_json.read_text())
    return {}


def atomic_write_json(path: pathlib.Path, data: Dict[str, Any]) -> None:
    """Write JSON data atomically using temp file + rename pattern."""
    atomic_write_bytes(path, json.dumps(data, indent=2).encode('utf-8'))


def atomic_write_bytes(path: pathlib.Path, payload: bytes) -> None:
    """Write bytes atomically using temp file + rename pattern."""
    temp_fd = None
    temp_path = None
    try:
        temp_fd, temp_path_str = tempfile.mkstemp(
            dir=path.parent,
            prefix=f".{path.stem}_",
            suffix=".tmp"
        )
        temp_path = pathlib.Path(temp_path_str)

        with os.fdopen(temp_fd, 'wb') as f:
            temp_fd = None
            f.write(payload)

        temp_path.replace(path)
    finally:
        if temp_fd is not None:
            os.close(temp_fd)
        if temp_path and temp_path.exists():
            temp_path.unlink()
