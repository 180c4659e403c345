# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Version of the toolkit and of the checkpoint format it writes (``wngan.py --version``)."""

__version__ = "0.1.0"
PROJECT_NAME = "wngan"

# Stored in every checkpoint's state; bump when the binary layout changes.
CHECKPOINT_FORMAT_VERSION = 1
