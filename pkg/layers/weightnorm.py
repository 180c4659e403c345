# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Weight-normalized layers.

A strict layer projects its input onto unit-norm weight rows and has no
bias, scale or shift:

    y_i = w_i . x / sqrt(|w_i|^2 + eps)

An affine layer follows the strict projection with a learned per-output
scale gamma and shift beta. Convolutions normalize each output channel's
kernel and, for stride d > 1, divide the norm by sqrt(d_w * d_h) so that a
strided output still sees roughly unit gain.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np

from constants import WN_EPS, WNADD_RESIDUE_INIT, WNADD_SHORTCUT_INIT
from tensor_autodiff import (
    Node,
    broadcast_to,
    conv2d,
    conv2d_transposed,
    matmul,
    reduce_sum,
    reshape,
    sqrt,
    square,
    transpose,
)
from utils.error_handling import ShapeError

from .base import Layer, channel_broadcast, uniform_init

WN_MODES = ("strict", "affine")


def _check_mode(mode: str) -> str:
    if mode not in WN_MODES:
        raise ValueError(f"Unknown weight-norm mode '{mode}', expected one of {WN_MODES}")
    return mode


def weight_norm(w: Node, out_axis: int = 0) -> Node:
    """sqrt(sum of squares + eps) per output unit, reducing every other axis."""
    axes = tuple(a for a in range(w.value.ndim) if a != out_axis)
    return sqrt(reduce_sum(square(w), axis=axes) + WN_EPS)


def normalized_kernel(w: Node, out_axis: int, stride: int = 1) -> Node:
    divisor = weight_norm(w, out_axis)
    if stride > 1:
        divisor = divisor * (1.0 / math.sqrt(stride * stride))
    shape = [1] * w.value.ndim
    shape[out_axis] = w.shape[out_axis]
    return w / broadcast_to(reshape(divisor, shape), w.shape)


def _apply_affine(layer: "WNLinear", y: Node) -> Node:
    if y.value.ndim == 1:
        return y * layer.gamma + layer.beta
    return y * channel_broadcast(layer.gamma, y.shape) + channel_broadcast(layer.beta, y.shape)


# ── linear ─────────────────────────────────────────────────────────

class WNLinear(Layer):
    kind = "wn_linear"

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, mode: str = "strict",
                 first: bool = False, affine_size: int = 0):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.mode = _check_mode(mode)
        self.weight = self.add_param("weight", uniform_init(rng, (c_out, c_in), c_in, first))
        if self.mode == "affine":
            size = affine_size or c_out
            self.gamma = self.add_param("gamma", np.ones(size))
            self.beta = self.add_param("beta", np.zeros(size))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_in, spec.c_out, rng, mode=spec.mode or "strict", first=spec.first)

    @property
    def display_name(self) -> str:
        return "AWNLinear" if self.mode == "affine" else "SWNLinear"

    def forward(self, x: Node) -> Node:
        if self.mode == "affine":
            return affine_wn_forward(self, x)
        return strict_wn_forward(self, x)


def strict_wn_forward(layer: WNLinear, x: Node) -> Node:
    """y_i = w_i . x / sqrt(|w_i|^2 + eps); gradients flow through the norm."""
    if x.value.ndim not in (1, 2) or x.shape[-1] != layer.c_in:
        raise ShapeError(f"{layer.display_name}({layer.c_in}->{layer.c_out}): got input {x.shape}")
    y = matmul(x, transpose(layer.weight))
    norms = weight_norm(layer.weight)
    if y.value.ndim == 1:
        return y / norms
    return y / broadcast_to(reshape(norms, (1, layer.c_out)), y.shape)


def affine_wn_forward(layer: WNLinear, x: Node) -> Node:
    if layer.mode != "affine":
        raise ValueError(f"{layer.display_name} has no affine parameters")
    return _apply_affine(layer, strict_wn_forward(layer, x))


class WNFullyConnected(WNLinear):
    """First generator layer: fully connected from the latent code, reshaped to [c, s, s].

    Each of the c*s*s outputs is normalized over the latent inputs only;
    affine parameters, when present, are per output channel.
    """

    kind = "wn_fc"

    def __init__(self, latent_dim: int, out_shape: Tuple[int, int, int], rng: np.random.Generator,
                 mode: str = "strict", first: bool = True):
        c, h, w = out_shape
        self.out_shape = (int(c), int(h), int(w))
        super().__init__(latent_dim, c * h * w, rng, mode=mode, first=first, affine_size=c)

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_in, tuple(spec.shape), rng, mode=spec.mode or "strict", first=spec.first)

    @property
    def display_name(self) -> str:
        return "AWNConv" if self.mode == "affine" else "SWNConv"

    def forward(self, z: Node) -> Node:
        return wn_fc_first_layer(self, z)


def wn_fc_first_layer(layer: WNFullyConnected, z: Node) -> Node:
    if z.value.ndim != 2 or z.shape[1] != layer.c_in:
        raise ShapeError(f"{layer.display_name}: latent code must be [N, {layer.c_in}], got {z.shape}")
    y = reshape(strict_wn_forward(layer, z), (z.shape[0],) + layer.out_shape)
    if layer.mode == "affine":
        y = _apply_affine(layer, y)
    return y


# ── convolutions ───────────────────────────────────────────────────

class WNConv2d(Layer):
    kind = "wn_conv"
    out_axis = 0

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int,
                 rng: np.random.Generator, mode: str = "strict", first: bool = False):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.mode = _check_mode(mode)
        fan_in = c_in * kernel * kernel
        self.weight = self.add_param("weight", uniform_init(rng, self.weight_shape(), fan_in, first))
        if self.mode == "affine":
            self.gamma = self.add_param("gamma", np.ones(c_out))
            self.beta = self.add_param("beta", np.zeros(c_out))

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.c_in, spec.c_out, spec.kernel, spec.stride, spec.padding, rng,
                   mode=spec.mode or "strict", first=spec.first)

    @property
    def display_name(self) -> str:
        return "AWNConv" if self.mode == "affine" else "SWNConv"

    def weight_shape(self):
        return (self.c_out, self.c_in, self.kernel, self.kernel)

    def _apply(self, x: Node, w: Node) -> Node:
        return conv2d(x, w, self.stride, self.padding)

    def forward(self, x: Node) -> Node:
        return wn_conv_forward(self, x)


class WNConvTranspose2d(WNConv2d):
    kind = "wn_conv_t"
    out_axis = 1

    def weight_shape(self):
        return (self.c_in, self.c_out, self.kernel, self.kernel)

    def _apply(self, x: Node, w: Node) -> Node:
        return conv2d_transposed(x, w, self.stride, self.padding)


def wn_conv_forward(layer: WNConv2d, x: Node) -> Node:
    """Convolve with the stride-corrected, per-output-channel normalized kernel."""
    w_hat = normalized_kernel(layer.weight, layer.out_axis, layer.stride)
    y = layer._apply(x, w_hat)
    if layer.mode == "affine":
        y = _apply_affine(layer, y)
    return y


# ── addition ───────────────────────────────────────────────────────

class WNAdd(Layer):
    """Per-channel (w1*x1 + w2*x2) / sqrt(w1^2 + w2^2 + eps).

    Starts as a pure shortcut: w1 = 1 on the first input, w2 = 0 on the second.
    """

    kind = "wn_add"
    display_name = "WNAdd"

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.w1 = self.add_param("shortcut_weight", np.full(channels, WNADD_SHORTCUT_INIT))
        self.w2 = self.add_param("residue_weight", np.full(channels, WNADD_RESIDUE_INIT))

    def forward(self, x1: Node, x2: Node = None) -> Node:
        if x2 is None:
            raise TypeError("WNAdd takes two inputs")
        return wn_add(self, x1, x2)

    def __call__(self, x1: Node, x2: Node = None) -> Node:
        return self.forward(x1, x2)


def wn_add(layer: WNAdd, x1: Node, x2: Node) -> Node:
    if x1.shape != x2.shape:
        raise ShapeError(f"WNAdd: branch shapes {x1.shape} and {x2.shape} differ")
    norm = sqrt(square(layer.w1) + square(layer.w2) + WN_EPS)
    c1 = channel_broadcast(layer.w1 / norm, x1.shape)
    c2 = channel_broadcast(layer.w2 / norm, x2.shape)
    return x1 * c1 + x2 * c2
