# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Base class and shared helpers for network layers."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Dict, Iterator, List, Tuple

import numpy as np

from constants import FIRST_LAYER_INIT_SCALE
from tensor_autodiff import Node, broadcast_to, parameter, reshape
from utils.error_handling import ShapeError


# ── shared parameter utilities ─────────────────────────────────────

def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int,
                 first: bool = False) -> np.ndarray:
    """Uniform weights on [-b, b] with b = 1/sqrt(fan_in), or 0.01/sqrt(fan_in) for the first generator layer."""
    bound = (FIRST_LAYER_INIT_SCALE if first else 1.0) / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def channel_broadcast(p: Node, x_shape: Tuple[int, ...]) -> Node:
    """Broadcast a per-channel vector [C] against x of shape [C], [N, C] or [N, C, H, W]."""
    if x_shape == p.shape:
        return p
    if len(x_shape) < 2 or x_shape[1] != p.shape[0]:
        raise ShapeError(f"per-channel parameter of length {p.shape[0]} does not match input {x_shape}")
    target = (1, p.shape[0]) + (1,) * (len(x_shape) - 2)
    return broadcast_to(reshape(p, target), x_shape)


def channel_axes(x_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Axes reduced for per-channel statistics: all but axis 1."""
    return (0,) + tuple(range(2, len(x_shape)))


# ── abstract base ──────────────────────────────────────────────────

class Layer(ABC):
    """Abstract base for network layers.

    Parameters are kept in insertion order, which is also the order used by
    the optimizer and the checkpoint writer.
    """

    kind: str           # registry key, e.g. "wn_conv"
    display_name: str   # name used in layer tables, e.g. "SWNConv"

    def __init__(self):
        self.params: Dict[str, Node] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.training = True

    # ── abstract methods that each layer MUST implement ──

    @abstractmethod
    def forward(self, x: Node) -> Node:
        """Map an input node to an output node."""

    # ── shared behaviour ──

    def __call__(self, x: Node) -> Node:
        return self.forward(x)

    def add_param(self, name: str, value: np.ndarray) -> Node:
        node = parameter(value, name=name)
        self.params[name] = node
        return node

    def children(self) -> List[Tuple[str, "Layer"]]:
        return []

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Node]]:
        for name, node in self.params.items():
            yield prefix + name, node
        for child_name, child in self.children():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, "Layer", str]]:
        """Yield (qualified name, owning layer, local name) for every buffer."""
        for name in self.buffers:
            yield prefix + name, self, name
        for child_name, child in self.children():
            yield from child.named_buffers(f"{prefix}{child_name}.")

    def train(self, mode: bool = True) -> "Layer":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Layer":
        return self.train(False)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(kind={self.kind!r})"
