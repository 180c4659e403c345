# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
wngan utilities package.
"""

from .error_handling import (
    WNGANError,
    ShapeError,
    DivisionByZeroError,
    NonFiniteError,
    BuildError,
    TransformError,
    ConfigError,
    DatasetError,
    CheckpointError,
    ErrorHandler,
    ProgressReporter,
    error_handler,
    get_logger,
    initialize_error_handling,
)
from .structure import (
    create_run_dir,
    metrics_path,
    best_checkpoint_path,
    latest_checkpoint_path,
    periodic_checkpoint_path,
    sample_grid_path,
    list_checkpoints,
    find_latest_checkpoint,
    save_run_info,
    load_run_info,
    atomic_write_json,
    atomic_write_bytes,
    SCHEMA_VERSION,
)

__all__ = [
    "WNGANError",
    "ShapeError",
    "DivisionByZeroError",
    "NonFiniteError",
    "BuildError",
    "TransformError",
    "ConfigError",
    "DatasetError",
    "CheckpointError",
    "ErrorHandler",
    "ProgressReporter",
    "error_handler",
    "get_logger",
    "initialize_error_handling",
    "create_run_dir",
    "metrics_path",
    "best_checkpoint_path",
    "latest_checkpoint_path",
    "periodic_checkpoint_path",
    "sample_grid_path",
    "list_checkpoints",
    "find_latest_checkpoint",
    "save_run_info",
    "load_run_info",
    "atomic_write_json",
    "atomic_write_bytes",
    "SCHEMA_VERSION",
]
