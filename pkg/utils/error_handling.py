#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Error Handling and Logging Utilities
Provides the exception taxonomy, user-friendly error explanations,
and the logging setup shared by the library modules and the CLI.
"""

import functools
import logging
import pathlib
import sys
import traceback
from datetime import datetime
from typing import Any, Callable, Dict, Optional


# ── exception taxonomy ─────────────────────────────────────────────

class WNGANError(Exception):
    """Base class for every error raised by this project."""


class ShapeError(WNGANError, ValueError):
    """Operand shapes do not conform for an operation."""


class DivisionByZeroError(WNGANError, ZeroDivisionError):
    """A divisor tensor contains an exact zero."""


class NonFiniteError(WNGANError, FloatingPointError):
    """A value, loss or gradient became NaN or infinite."""


class BuildError(WNGANError, ValueError):
    """A network specification cannot be constructed."""


class TransformError(WNGANError, ValueError):
    """A parameter transformation between network forms is undefined."""


class ConfigError(WNGANError, ValueError):
    """A configuration file or value is invalid."""


class DatasetError(WNGANError, ValueError):
    """A dataset cannot be loaded or split."""


class CheckpointError(WNGANError, OSError):
    """A checkpoint cannot be written or read."""


# ── logging ────────────────────────────────────────────────────────

class WNGANLogger:
    """Centralized logging system for the wngan logger hierarchy"""

    def __init__(self, log_dir: Optional[pathlib.Path] = None, console: bool = True):
        self.log_dir = log_dir
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.setup_logging(console)

    def setup_logging(self, console: bool = True):
        """Configure logging system"""
        root_logger = logging.getLogger('wngan')
        root_logger.setLevel(logging.DEBUG)
        # Re-initialization replaces handlers instead of stacking them
        for handler in list(root_logger.handlers):
            root_logger.removeHandler(handler)
            handler.close()

        if self.log_dir is not None:
            log_file = self.log_dir / f"wngan_{datetime.now().strftime('%Y%m%d')}.log"
            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
            )
            file_handler = logging.FileHandler(log_file)
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)

        if console:
            console_handler = logging.StreamHandler(sys.stdout)
            console_handler.setLevel(logging.INFO)
            console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
            root_logger.addHandler(console_handler)

    def get_logger(self, name: str) -> logging.Logger:
        """Get a logger instance"""
        return logging.getLogger(f'wngan.{name}')


def get_logger(name: str) -> logging.Logger:
    """Logger for a library module; handlers are attached by the CLI only."""
    return logging.getLogger(f'wngan.{name}')


class ErrorCategories:
    """Categorizes different types of errors with user-friendly messages"""

    SHAPE_ERROR = "shape_error"
    NUMERICAL_ERROR = "numerical_error"
    BUILD_ERROR = "build_error"
    TRANSFORM_ERROR = "transform_error"
    CONFIG_ERROR = "config_error"
    DATASET_ERROR = "dataset_error"
    CHECKPOINT_ERROR = "checkpoint_error"
    FILE_NOT_FOUND = "file_not_found"
    PERMISSION_ERROR = "permission_error"
    UNKNOWN_ERROR = "unknown_error"

    ERROR_MESSAGES = {
        SHAPE_ERROR: {
            "title": "Shape Mismatch",
            "message": "Two tensors with incompatible shapes met in an operation.",
            "suggestions": [
                "Check image_size and min_spatial against the network layout",
                "Check that the latent_dim of the config matches the checkpoint",
            ]
        },
        NUMERICAL_ERROR: {
            "title": "Numerical Failure",
            "message": "A loss, value or gradient became NaN or infinite.",
            "suggestions": [
                "Lower the learning rate (the vanilla model often fails at 2e-4)",
                "Resume from the last good checkpoint",
                "Run 'wngan.py gradcheck' to rule out a gradient bug",
            ]
        },
        BUILD_ERROR: {
            "title": "Invalid Network",
            "message": "The requested network cannot be built.",
            "suggestions": [
                "Use an image size that halves down to min_spatial exactly",
                "Use a non-empty feature plan",
            ]
        },
        TRANSFORM_ERROR: {
            "title": "Transformation Undefined",
            "message": "The parameters cannot be converted between the plain and weight-normalized forms.",
            "suggestions": [
                "Make sure no weight row has zero norm",
                "Make sure the stack alternates linear and rectifier layers",
            ]
        },
        CONFIG_ERROR: {
            "title": "Invalid Configuration",
            "message": "The configuration is invalid or incomplete.",
            "suggestions": [
                "Remove keys that are not part of the documented schema",
                "Check that all counts and rates are positive",
            ]
        },
        DATASET_ERROR: {
            "title": "Dataset Error",
            "message": "The dataset could not be loaded.",
            "suggestions": [
                "Use a builtin name: gauss2d-mixture, rings, synthetic-shapes-8x8",
                "Make sure an image directory holds readable PPM/PGM files",
            ]
        },
        CHECKPOINT_ERROR: {
            "title": "Checkpoint Error",
            "message": "A checkpoint could not be written or read.",
            "suggestions": [
                "Check free disk space and permissions of the output directory",
                "Verify the file was written by this tool (magic WNGAN1)",
            ]
        },
        FILE_NOT_FOUND: {
            "title": "File Not Found",
            "message": "The required file could not be found.",
            "suggestions": [
                "Verify the file path is correct",
                "Check if the file was moved or deleted",
            ]
        },
        PERMISSION_ERROR: {
            "title": "Permission Denied",
            "message": "Access to the file or directory was denied.",
            "suggestions": [
                "Check file and directory permissions",
                "Ensure the disk is not write-protected",
            ]
        },
        UNKNOWN_ERROR: {
            "title": "Unexpected Error",
            "message": "An unexpected error occurred.",
            "suggestions": [
                "Check the log files for more details",
                "Report this issue if it persists",
            ]
        }
    }


class ErrorHandler:
    """Handles errors with appropriate user feedback and logging"""

    def __init__(self, logger_name: str = "error_handler"):
        self.logger = get_logger(logger_name)

    def categorize_error(self, error: Exception) -> str:
        """Categorize an error based on its type"""
        if isinstance(error, ShapeError):
            return ErrorCategories.SHAPE_ERROR
        if isinstance(error, (NonFiniteError, DivisionByZeroError)):
            return ErrorCategories.NUMERICAL_ERROR
        if isinstance(error, BuildError):
            return ErrorCategories.BUILD_ERROR
        if isinstance(error, TransformError):
            return ErrorCategories.TRANSFORM_ERROR
        if isinstance(error, ConfigError):
            return ErrorCategories.CONFIG_ERROR
        if isinstance(error, DatasetError):
            return ErrorCategories.DATASET_ERROR
        if isinstance(error, CheckpointError):
            return ErrorCategories.CHECKPOINT_ERROR
        if isinstance(error, FileNotFoundError):
            return ErrorCategories.FILE_NOT_FOUND
        if isinstance(error, PermissionError):
            return ErrorCategories.PERMISSION_ERROR
        return ErrorCategories.UNKNOWN_ERROR

    def handle_error(self, error: Exception, context: str = "", show_details: bool = True) -> str:
        """Handle an error with logging and a console explanation; returns the category"""
        self.logger.error(f"Error in {context}: {type(error).__name__}: {error}")
        self.logger.debug(f"Full traceback:\n{traceback.format_exc()}")

        category = self.categorize_error(error)
        if show_details:
            self.show_error_details(ErrorCategories.ERROR_MESSAGES[category], str(error), context)
        return category

    def show_error_details(self, error_info: Dict, technical_details: str, context: str):
        """Print a user-friendly explanation to stderr"""
        message = f"ERROR: {error_info['title']}: {error_info['message']}"
        if context:
            message += f"\n  Context: {context}"
        message += "\n  Suggestions:"
        for suggestion in error_info["suggestions"]:
            message += f"\n    • {suggestion}"
        message += f"\n  Technical details: {technical_details}"
        print(message, file=sys.stderr)

    def log_operation_start(self, operation: str, details: Dict[str, Any] = None):
        """Log the start of an operation"""
        message = f"Starting operation: {operation}"
        if details:
            message += f" with details: {details}"
        self.logger.info(message)

    def log_operation_success(self, operation: str, result: Any = None):
        """Log successful completion of an operation"""
        message = f"Operation completed successfully: {operation}"
        if result:
            message += f" with result: {result}"
        self.logger.info(message)


def error_handler(context: str = "", show_details: bool = True,
                  logger_name: str = "decorator", reraise: bool = False):
    """Decorator for automatic error handling"""
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            handler = ErrorHandler(logger_name)
            operation_context = context or f"{func.__module__}.{func.__name__}"

            try:
                handler.log_operation_start(operation_context, {
                    "args": str(args)[:200],  # Limit log length
                    "kwargs": str(kwargs)[:200]
                })

                result = func(*args, **kwargs)

                handler.log_operation_success(operation_context)
                return result

            except Exception as e:
                handler.handle_error(e, operation_context, show_details)
                if reraise:
                    raise
                return None

        return wrapper
    return decorator


class ProgressReporter:
    """Reports progress of long-running operations"""

    def __init__(self, total_steps: int, operation_name: str = "Operation",
                 report_every: int = 1):
        self.total_steps = max(int(total_steps), 1)
        self.current_step = 0
        self.operation_name = operation_name
        self.report_every = max(int(report_every), 1)
        self.logger = get_logger("progress")
        self.start_time = datetime.now()

    def update(self, step_name: str = "", increment: int = 1) -> bool:
        """Update progress and return True if operation should continue"""
        self.current_step += increment
        if self.current_step % self.report_every and self.current_step != self.total_steps:
            return True
        progress_percent = (self.current_step / self.total_steps) * 100

        if step_name:
            self.logger.info(f"{self.operation_name}: {step_name} ({progress_percent:.1f}%)")
        else:
            self.logger.info(f"{self.operation_name}: {progress_percent:.1f}% complete")
        return True

    def complete(self):
        """Mark operation as complete"""
        elapsed = datetime.now() - self.start_time
        self.logger.info(f"{self.operation_name} completed in {elapsed.total_seconds():.2f} seconds")


def get_system_info() -> Dict[str, str]:
    """Get system information for debugging"""
    import platform

    info = {
        "platform": platform.platform(),
        "python_version": platform.python_version(),
        "working_directory": str(pathlib.Path.cwd()),
    }

    for module_name in ("numpy", "PIL", "cv2", "yaml", "matplotlib"):
        try:
            module = __import__(module_name)
            info[module_name] = getattr(module, "__version__", "available")
        except ImportError:
            info[module_name] = "Not installed"

    return info


# Global logger instance, created by initialize_error_handling()
logger_instance: Optional[WNGANLogger] = None


def initialize_error_handling(log_dir: Optional[pathlib.Path] = None, console: bool = True):
    """Initialize the error handling system"""
    global logger_instance
    logger_instance = WNGANLogger(log_dir, console=console)

    logger = logger_instance.get_logger("init")
    logger.debug("wngan error handling system initialized")

    for key, value in get_system_info().items():
        logger.debug(f"System info - {key}: {value}")
    return logger_instance
