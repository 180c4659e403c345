# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Batch normalization, full and mean-only.

Statistics are per channel over the batch (and spatial axes for image
tensors). In train mode the output is built from differentiable mean and
variance nodes so gradients propagate through the batch statistics; the
running estimates are plain buffers updated with momentum.
"""

from __future__ import annotations

import numpy as np

from constants import BN_EPS, BN_MOMENTUM
from tensor_autodiff import Node, broadcast_to, constant, reduce_mean, sqrt, square
from utils.error_handling import ShapeError

from .base import Layer, channel_axes, channel_broadcast


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, channels: int, mean_only: bool = False,
                 momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        super().__init__()
        self.channels = channels
        self.mean_only = mean_only
        self.momentum = momentum
        self.eps = eps
        if not mean_only:
            self.gamma = self.add_param("gamma", np.ones(channels))
        self.beta = self.add_param("beta", np.zeros(channels))
        self.buffers["running_mean"] = np.zeros(channels)
        if not mean_only:
            self.buffers["running_var"] = np.ones(channels)

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_out, mean_only=spec.mean_only)

    @property
    def display_name(self) -> str:
        return "MeanOnlyBN" if self.mean_only else "BN"

    def forward(self, x: Node) -> Node:
        return batchnorm_forward(self, x, "train" if self.training else "inference")


def _channel_constant(values: np.ndarray, x_shape) -> Node:
    shape = (1, values.shape[0]) + (1,) * (len(x_shape) - 2)
    return constant(np.broadcast_to(values.reshape(shape), x_shape))


def batchnorm_forward(layer: BatchNorm, x: Node, mode: str) -> Node:
    if x.value.ndim not in (2, 4) or x.shape[1] != layer.channels:
        raise ShapeError(f"BatchNorm({layer.channels}): got input {x.shape}")
    if mode not in ("train", "inference"):
        raise ValueError(f"BatchNorm mode must be 'train' or 'inference', got '{mode}'")

    if mode == "inference":
        centered = x - _channel_constant(layer.buffers["running_mean"], x.shape)
        if layer.mean_only:
            return centered + channel_broadcast(layer.beta, x.shape)
        inv_std = 1.0 / np.sqrt(layer.buffers["running_var"] + layer.eps)
        x_hat = centered * _channel_constant(inv_std, x.shape)
        return x_hat * channel_broadcast(layer.gamma, x.shape) + channel_broadcast(layer.beta, x.shape)

    if x.shape[0] < 2:
        raise ShapeError(f"BatchNorm: train mode needs a batch of at least 2, got {x.shape[0]}")
    axes = channel_axes(x.shape)
    mu = reduce_mean(x, axis=axes, keepdims=True)
    centered = x - broadcast_to(mu, x.shape)
    count = x.value.size // layer.channels
    m = layer.momentum
    layer.buffers["running_mean"] = (1.0 - m) * layer.buffers["running_mean"] + m * mu.value.reshape(-1)

    if layer.mean_only:
        return centered + channel_broadcast(layer.beta, x.shape)

    var = reduce_mean(square(centered), axis=axes, keepdims=True)
    unbiased = var.value.reshape(-1) * count / (count - 1)
    layer.buffers["running_var"] = (1.0 - m) * layer.buffers["running_var"] + m * unbiased
    x_hat = centered / broadcast_to(sqrt(var + layer.eps), x.shape)
    return x_hat * channel_broadcast(layer.gamma, x.shape) + channel_broadcast(layer.beta, x.shape)
