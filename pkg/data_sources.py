#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Datasets: builtin generators and PPM/PGM image directories.

Every dataset is a read-only float64 array [N, *sample_shape] with values in
[0, 1], matching the generator's sigmoid output range.

Builtins:
    gauss2d-mixture        8 Gaussian modes on a circle of radius 2 (std 0.02)
    rings                  3 concentric noisy circles
    synthetic-shapes-8x8   colored squares, disks, crosses and bars on black
    image-dir              a directory of .ppm/.pgm files, center-cropped to
                           square and area-resized to image_size

Usage:
    ds = load_dataset("gauss2d-mixture", n_samples=2000, seed=0)
    split = ds.split(test_size=200, seed=0)
"""

from __future__ import annotations

import dataclasses
import pathlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Tuple

import cv2
import numpy as np

from image_io import PNM_SUFFIXES, center_crop_resize, read_pnm
from utils.error_handling import DatasetError, get_logger

logger = get_logger("data")

BUILTIN_DATASETS = ("gauss2d-mixture", "rings", "synthetic-shapes-8x8", "image-dir")

# RNG streams, so the data and the split never share random draws
_DATA_STREAM = 11
_SPLIT_STREAM = 12


@dataclasses.dataclass(frozen=True)
class DatasetSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int
    test_size: int

    def to_dict(self) -> Dict[str, Any]:
        return {"seed": self.seed, "test_size": self.test_size}


def make_split(n: int, test_size: int, seed: int) -> DatasetSplit:
    """Seeded disjoint train/test index sets; the test set has ``test_size`` samples."""
    if not 1 <= test_size < n:
        raise DatasetError(f"test_size must lie in [1, {n - 1}] for {n} samples, got {test_size}")
    perm = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n)
    test = np.sort(perm[:test_size])
    train = np.sort(perm[test_size:])
    for arr in (train, test):
        arr.flags.writeable = False
    return DatasetSplit(train, test, seed, test_size)


class Dataset:
    """Immutable sample array plus its name."""

    def __init__(self, name: str, data: np.ndarray):
        data = np.array(data, dtype=np.float64)
        if data.ndim < 2 or len(data) == 0:
            raise DatasetError(f"Dataset '{name}' is empty or has no sample axis: shape {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise DatasetError(f"Dataset '{name}' values must be finite and lie in [0, 1]")
        data.flags.writeable = False
        self.name = name
        self.data = data

    def __len__(self) -> int:
        return len(self.data)

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return self.data.shape[1:]

    @property
    def is_image(self) -> bool:
        return self.data.ndim == 4

    def take(self, indices) -> np.ndarray:
        batch = self.data[np.asarray(indices)]
        batch.flags.writeable = False
        return batch

    def split(self, test_size: int, seed: int) -> DatasetSplit:
        return make_split(len(self), test_size, seed)

    def __repr__(self) -> str:
        return f"Dataset({self.name!r}, n={len(self)}, sample_shape={self.sample_shape})"


# ── builtin generators ─────────────────────────────────────────────

def _point_range(outer_radius: float, std: float) -> float:
    return outer_radius + 6.0 * std


def gaussian_mixture_2d(n: int, seed: int, modes: int = 8, radius: float = 2.0,
                        std: float = 0.02) -> np.ndarray:
    """Points around ``modes`` centers on a circle, mapped from [-R, R]^2 to [0, 1]^2 with R = radius + 6 std."""
    rng = np.random.default_rng([seed, _DATA_STREAM])
    angles = 2.0 * np.pi * np.arange(modes) / modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    points = centers[rng.integers(0, modes, size=n)] + std * rng.normal(size=(n, 2))
    bound = _point_range(radius, std)
    return np.clip((points + bound) / (2.0 * bound), 0.0, 1.0)


def mixture_centers(modes: int = 8, radius: float = 2.0, std: float = 0.02) -> np.ndarray:
    """Mode centers of gaussian_mixture_2d in the normalized [0, 1]^2 frame."""
    angles = 2.0 * np.pi * np.arange(modes) / modes
    centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    bound = _point_range(radius, std)
    return (centers + bound) / (2.0 * bound)


def rings_2d(n: int, seed: int, radii: Tuple[float, ...] = (0.5, 1.0, 1.5),
             std: float = 0.02) -> np.ndarray:
    rng = np.random.default_rng([seed, _DATA_STREAM])
    r = np.asarray(radii)[rng.integers(0, len(radii), size=n)] + std * rng.normal(size=n)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    points = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    bound = _point_range(max(radii), std)
    return np.clip((points + bound) / (2.0 * bound), 0.0, 1.0)


SHAPES = ("square", "disk", "cross", "bar")


def synthetic_shapes(n: int, seed: int, size: int = 8) -> np.ndarray:
    """Random colored shapes on a black background, [n, 3, size, size]."""
    rng = np.random.default_rng([seed, _DATA_STREAM])
    images = np.zeros((n, 3, size, size))
    for i in range(n):
        canvas = np.zeros((size, size, 3), dtype=np.uint8)
        color = tuple(int(c) for c in rng.integers(80, 256, size=3))
        shape = SHAPES[rng.integers(0, len(SHAPES))]
        cx, cy = (int(v) for v in rng.integers(2, size - 2, size=2))
        if shape == "square":
            half = int(rng.integers(1, 3))
            cv2.rectangle(canvas, (cx - half, cy - half), (cx + half, cy + half), color, thickness=-1)
        elif shape == "disk":
            cv2.circle(canvas, (cx, cy), int(rng.integers(1, 3)), color, thickness=-1)
        elif shape == "cross":
            cv2.line(canvas, (cx - 2, cy), (cx + 2, cy), color, thickness=1)
            cv2.line(canvas, (cx, cy - 2), (cx, cy + 2), color, thickness=1)
        elif rng.integers(0, 2):
            cv2.line(canvas, (0, cy), (size - 1, cy), color, thickness=1)
        else:
            cv2.line(canvas, (cx, 0), (cx, size - 1), color, thickness=1)
        images[i] = canvas.transpose(2, 0, 1) / 255.0
    return images


# ── image directories ──────────────────────────────────────────────

def load_image_dir(directory: pathlib.Path, image_size: Optional[int] = None,
                   workers: int = 4) -> np.ndarray:
    """Load every PPM/PGM file in a directory as [N, 3, S, S].

    Files are read in a thread pool. Unreadable files, and (without
    image_size) files whose cropped size differs from the majority, are
    reported together in one DatasetError.
    """
    directory = pathlib.Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"Image directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in PNM_SUFFIXES)
    if not files:
        raise DatasetError(f"No .ppm/.pgm files in {directory}")

    def load(path: pathlib.Path) -> np.ndarray:
        return center_crop_resize(read_pnm(path), image_size)

    images: Dict[pathlib.Path, np.ndarray] = {}
    unreadable: List[str] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        futures = {path: ex.submit(load, path) for path in files}
        for path, fut in futures.items():
            try:
                images[path] = fut.result()
            except DatasetError:
                unreadable.append(path.name)
    if unreadable:
        raise DatasetError(f"Unreadable image files in {directory}: {', '.join(unreadable)}")

    sizes = Counter(img.shape for img in images.values())
    if len(sizes) > 1:
        common = sizes.most_common(1)[0][0]
        offenders = [f"{p.name} {img.shape[1]}x{img.shape[2]}" for p, img in images.items() if img.shape != common]
        raise DatasetError(f"Inconsistent image sizes (expected {common[1]}x{common[2]}): {', '.join(offenders)}")
    logger.info(f"Loaded {len(files)} images from {directory}")
    return np.stack([images[p] for p in files])


def load_dataset(source: str, n_samples: int = 2000, seed: int = 0,
                 image_size: Optional[int] = None, workers: int = 4) -> Dataset:
    """Load a builtin dataset by name, or an image directory (``image-dir:<path>`` or a path)."""
    if source == "gauss2d-mixture":
        return Dataset(source, gaussian_mixture_2d(n_samples, seed))
    if source == "rings":
        return Dataset(source, rings_2d(n_samples, seed))
    if source == "synthetic-shapes-8x8":
        return Dataset(source, synthetic_shapes(n_samples, seed, size=8))
    if source.startswith("image-dir:"):
        path = pathlib.Path(source.split(":", 1)[1])
        return Dataset(str(path), load_image_dir(path, image_size, workers))
    if source == "image-dir":
        raise DatasetError("image-dir needs a directory: use image-dir:<path> or pass the path itself")
    path = pathlib.Path(source)
    if path.is_dir():
        return Dataset(str(path), load_image_dir(path, image_size, workers))
    raise DatasetError(f"Unknown dataset '{source}'; expected one of {BUILTIN_DATASETS} or a directory")
