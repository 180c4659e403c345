# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Plain affine layers with bias, used by the vanilla and BN variants."""

from __future__ import annotations

import numpy as np

from tensor_autodiff import Node, broadcast_to, conv2d, conv2d_transposed, matmul, reshape, transpose
from utils.error_handling import ShapeError

from .base import Layer, channel_broadcast, uniform_init


class Linear(Layer):
    kind = "linear"
    display_name = "Linear"

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, first: bool = False):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.weight = self.add_param("weight", uniform_init(rng, (c_out, c_in), c_in, first))
        self.bias = self.add_param("bias", np.zeros(c_out))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_in, spec.c_out, rng, first=spec.first)

    def forward(self, x: Node) -> Node:
        if x.value.ndim != 2 or x.shape[1] != self.c_in:
            raise ShapeError(f"Linear({self.c_in}->{self.c_out}): got input {x.shape}")
        y = matmul(x, transpose(self.weight))
        return y + broadcast_to(reshape(self.bias, (1, self.c_out)), y.shape)


class Conv2d(Layer):
    kind = "conv"
    display_name = "Conv"

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int,
                 rng: np.random.Generator, first: bool = False):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = c_in * kernel * kernel
        self.weight = self.add_param("weight", uniform_init(rng, self.weight_shape(), fan_in, first))
        self.bias = self.add_param("bias", np.zeros(c_out))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_in, spec.c_out, spec.kernel, spec.stride, spec.padding, rng, first=spec.first)

    def weight_shape(self):
        return (self.c_out, self.c_in, self.kernel, self.kernel)

    def _apply(self, x: Node, w: Node) -> Node:
        return conv2d(x, w, self.stride, self.padding)

    def forward(self, x: Node) -> Node:
        y = self._apply(x, self.weight)
        return y + channel_broadcast(self.bias, y.shape)


class ConvTranspose2d(Conv2d):
    kind = "conv_t"
    display_name = "Conv"

    def weight_shape(self):
        return (self.c_in, self.c_out, self.kernel, self.kernel)

    def _apply(self, x: Node, w: Node) -> Node:
        return conv2d_transposed(x, w, self.stride, self.padding)
