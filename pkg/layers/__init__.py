# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Layer registry.

Build a layer from a spec by its kind::

    from layers import build_layer
    layer = build_layer(spec, rng)        # spec.kind == "wn_conv" -> WNConv2d
    y = layer(x)
"""

from __future__ import annotations

import numpy as np

from utils.error_handling import BuildError

from .base import Layer
from .dense import Conv2d, ConvTranspose2d, Linear
from .weightnorm import (
    WNAdd,
    WNConv2d,
    WNConvTranspose2d,
    WNFullyConnected,
    WNLinear,
    affine_wn_forward,
    strict_wn_forward,
    wn_add,
    wn_conv_forward,
    wn_fc_first_layer,
)
from .activations import PReLU, Sigmoid, TPReLU, trelu_forward
from .normalization import BatchNorm, batchnorm_forward
from .structural import AvgPool, Flatten, Reshape, Upsample
from .resblock import ResBlock

# Ordered list – this order is used when listing kinds
_LAYER_CLASSES: list[type[Layer]] = [
    Linear,
    Conv2d,
    ConvTranspose2d,
    WNLinear,
    WNFullyConnected,
    WNConv2d,
    WNConvTranspose2d,
    PReLU,
    TPReLU,
    Sigmoid,
    BatchNorm,
    Flatten,
    Reshape,
    AvgPool,
    Upsample,
    ResBlock,
]

LAYER_CLASSES: dict[str, type[Layer]] = {cls.kind: cls for cls in _LAYER_CLASSES}

# Layers that carry a weight matrix or kernel (counted as network depth)
WEIGHT_LAYER_KINDS = ("linear", "conv", "conv_t", "wn_linear", "wn_fc", "wn_conv", "wn_conv_t")


def get_layer_class(kind: str) -> type[Layer]:
    """Return the layer class registered for a kind."""
    try:
        return LAYER_CLASSES[kind]
    except KeyError:
        raise BuildError(f"Unknown layer kind '{kind}'; known kinds: {', '.join(LAYER_CLASSES)}") from None


def build_layer(spec, rng: np.random.Generator) -> Layer:
    """Instantiate and initialize the layer described by ``spec``."""
    return get_layer_class(spec.kind).from_spec(spec, rng)


def list_layer_kinds() -> list[str]:
    return list(LAYER_CLASSES)


__all__ = [
    "Layer",
    "Linear",
    "Conv2d",
    "ConvTranspose2d",
    "WNLinear",
    "WNFullyConnected",
    "WNConv2d",
    "WNConvTranspose2d",
    "WNAdd",
    "PReLU",
    "TPReLU",
    "Sigmoid",
    "BatchNorm",
    "Flatten",
    "Reshape",
    "AvgPool",
    "Upsample",
    "ResBlock",
    "strict_wn_forward",
    "affine_wn_forward",
    "wn_conv_forward",
    "wn_fc_first_layer",
    "wn_add",
    "trelu_forward",
    "batchnorm_forward",
    "LAYER_CLASSES",
    "WEIGHT_LAYER_KINDS",
    "get_layer_class",
    "build_layer",
    "list_layer_kinds",
]
