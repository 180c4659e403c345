# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Parameter-free layers that only move or resample values."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from tensor_autodiff import Node, avg_pool2d, reshape, upsample_nearest

from .base import Layer


class Flatten(Layer):
    kind = "flatten"
    display_name = "Flatten"

    @classmethod
    def from_spec(cls, spec, rng):
        return cls()

    def forward(self, x: Node) -> Node:
        return reshape(x, (x.shape[0], int(np.prod(x.shape[1:]))))


class Reshape(Layer):
    kind = "reshape"
    display_name = "Reshape"

    def __init__(self, shape: Tuple[int, ...]):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.shape)

    def forward(self, x: Node) -> Node:
        return reshape(x, (x.shape[0],) + self.shape)


class AvgPool(Layer):
    kind = "avgpool"
    display_name = "AvgPool"

    def __init__(self, factor: int = 2):
        super().__init__()
        self.factor = factor

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.factor or 2)

    def forward(self, x: Node) -> Node:
        return avg_pool2d(x, self.factor)


class Upsample(Layer):
    kind = "upsample"
    display_name = "Upsample"

    def __init__(self, factor: int = 2):
        super().__init__()
        self.factor = factor

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.factor or 2)

    def forward(self, x: Node) -> Node:
        return upsample_nearest(x, self.factor)
