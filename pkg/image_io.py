# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
PPM/PGM reading and writing, sample grids and point rasterization.

Pixel values are floats in [0, 1] in CHW layout. Writing clamps to [0, 1]
and maps 0.0 -> 0, 1.0 -> 255 with round-half-to-even.
"""

from __future__ import annotations

import io
import math
import pathlib
from typing import Optional

import cv2
import numpy as np
from PIL import Image, UnidentifiedImageError

from utils.error_handling import DatasetError, ShapeError
from utils.structure import atomic_write_bytes

PNM_SUFFIXES = (".ppm", ".pgm", ".pnm")


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_pnm(path: pathlib.Path) -> np.ndarray:
    """Read a PPM or PGM file as float RGB [3, H, W] in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(f"Could not read image {path}: {e}") from e
    return rgb.transpose(2, 0, 1)


def center_crop_resize(image: np.ndarray, size: Optional[int]) -> np.ndarray:
    """Crop a [C, H, W] image to its central square, then area-resize to size x size."""
    _, h, w = image.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    cropped = image[:, top:top + side, left:left + side]
    if size is None or size == side:
        return np.ascontiguousarray(cropped)
    hwc = np.ascontiguousarray(cropped.transpose(1, 2, 0))
    resized = cv2.resize(hwc, (size, size), interpolation=cv2.INTER_AREA)
    if resized.ndim == 2:
        resized = resized[:, :, None]
    return np.clip(resized.transpose(2, 0, 1), 0.0, 1.0)


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary PPM bytes for a [3, H, W] or [H, W] float image."""
    if image.ndim == 2:
        image = np.stack([image] * 3)
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise ShapeError(f"Expected a [C, H, W] image with 1 or 3 channels, got {image.shape}")
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    buf = io.BytesIO()
    Image.fromarray(to_uint8(image.transpose(1, 2, 0))).save(buf, format="PPM")
    return buf.getvalue()


def write_ppm(path: pathlib.Path, image: np.ndarray) -> None:
    atomic_write_bytes(path, encode_ppm(image))


def make_grid(images: np.ndarray, cols: Optional[int] = None, pad: int = 1) -> np.ndarray:
    """Tile [N, C, H, W] images into one [C, rows*(H+pad)+pad, cols*(W+pad)+pad] image."""
    if images.ndim != 4 or len(images) == 0:
        raise ShapeError(f"Expected a non-empty [N, C, H, W] batch, got {images.shape}")
    n, c, h, w = images.shape
    cols = cols or int(math.ceil(math.sqrt(n)))
    rows = int(math.ceil(n / cols))
    grid = np.zeros((c, rows * (h + pad) + pad, cols * (w + pad) + pad))
    for i in range(n):
        r, col = divmod(i, cols)
        y, x = pad + r * (h + pad), pad + col * (w + pad)
        grid[:, y:y + h, x:x + w] = images[i]
    return grid


def rasterize_points(points: np.ndarray, size: int = 64, radius: int = 1) -> np.ndarray:
    """Scatter plot of 2-D points in [0, 1]^2 as a [3, size, size] image (white on black)."""
    if points.ndim != 2 or points.shape[1] != 2:
        raise ShapeError(f"Expected [N, 2] points, got {points.shape}")
    canvas = np.zeros((size, size), dtype=np.uint8)
    pix = np.rint(np.clip(points, 0.0, 1.0) * (size - 1)).astype(int)
    for x, y in pix:
        cv2.circle(canvas, (int(x), int(size - 1 - y)), radius, 255, thickness=-1)
    return np.stack([canvas.astype(np.float64) / 255.0] * 3)


def write_sample_grid(path: pathlib.Path, samples: np.ndarray, cols: Optional[int] = None) -> None:
    """Write generated samples: image batches as a tiled grid, 2-D points as a scatter plot."""
    if samples.ndim == 2 and samples.shape[1] == 2:
        write_ppm(path, rasterize_points(samples))
    elif samples.ndim == 4:
        write_ppm(path, make_grid(samples, cols))
    else:
        raise ShapeError(f"Cannot render samples of shape {samples.shape}")
