# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Rectifiers and the output sigmoid.

TPReLU is a PReLU translated by a learned per-channel threshold alpha:

    y = x                          for x >= alpha
    y = slope * (x - alpha) + alpha  for x < alpha

With slope = 0 it reduces to max(x, alpha). Slopes are kept in [0, 1] by
the optimizer's post-step clipping, not inside the layer.
"""

from __future__ import annotations

import numpy as np

from constants import PRELU_SLOPE_INIT, TRELU_ALPHA_INIT
from tensor_autodiff import Node, maximum, sigmoid

from .base import Layer, channel_broadcast


class PReLU(Layer):
    kind = "prelu"
    display_name = "PReLU"

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.slope = self.add_param("slope", np.full(channels, PRELU_SLOPE_INIT))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_out)

    def forward(self, x: Node) -> Node:
        r = maximum(x, 0.0)
        return r + channel_broadcast(self.slope, x.shape) * (x - r)


class TPReLU(Layer):
    kind = "tprelu"
    display_name = "TPReLU"

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.alpha = self.add_param("alpha", np.full(channels, TRELU_ALPHA_INIT))
        self.slope = self.add_param("slope", np.full(channels, PRELU_SLOPE_INIT))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_out)

    def forward(self, x: Node) -> Node:
        return trelu_forward(self, x)


def trelu_forward(layer: TPReLU, x: Node) -> Node:
    a = channel_broadcast(layer.alpha, x.shape)
    z = x - a
    r = maximum(z, 0.0)
    return r + channel_broadcast(layer.slope, x.shape) * (z - r) + a


class Sigmoid(Layer):
    kind = "sigmoid"
    display_name = "Sigmoid"

    @classmethod
    def from_spec(cls, spec, rng):
        return cls()

    def forward(self, x: Node) -> Node:
        return sigmoid(x)
