# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Residual block with an optional resampling shortcut.

    residue:   Conv - [BN] - act - Conv - [BN]
    shortcut:  [avg-pool | nearest upsample] - [1x1 conv]
    output:    shortcut + residue   (WNAdd for weight-normalized variants)

The shortcut resamples only for stride 2 and projects only when the channel
count changes. Upsampling blocks (generator side) use transposed
convolutions in the residue branch.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from constants import VARIANTS
from tensor_autodiff import Node
from utils.error_handling import BuildError

from .activations import PReLU, TPReLU
from .base import Layer
from .dense import Conv2d, ConvTranspose2d
from .normalization import BatchNorm
from .structural import AvgPool, Upsample
from .weightnorm import WNAdd, WNConv2d, WNConvTranspose2d


class ResBlock(Layer):
    kind = "resblock"
    display_name = "ResBlock"

    def __init__(self, stride: int, c_in: int, c_out: int, variant: str,
                 rng: np.random.Generator, upsample: bool = False):
        super().__init__()
        if variant not in VARIANTS:
            raise BuildError(f"Unknown variant '{variant}'")
        if stride not in (1, 2):
            raise BuildError(f"ResBlock stride must be 1 or 2, got {stride}")
        self.stride, self.c_in, self.c_out = stride, c_in, c_out
        self.variant, self.upsample = variant, upsample
        weight_normed = variant in ("wn", "affine_wn")

        def conv(ci, co, k, s, p, transposed):
            if weight_normed:
                cls = WNConvTranspose2d if transposed else WNConv2d
                mode = "affine" if variant == "affine_wn" else "strict"
                return cls(ci, co, k, s, p, rng, mode=mode)
            cls = ConvTranspose2d if transposed else Conv2d
            return cls(ci, co, k, s, p, rng)

        if upsample and stride == 2:
            first = conv(c_in, c_out, 4, 2, 1, True)
        else:
            first = conv(c_in, c_out, 3, stride, 1, upsample)
        second = conv(c_out, c_out, 3, 1, 1, upsample)
        act = TPReLU(c_out) if variant == "wn" else PReLU(c_out)

        self.residue: List[Layer] = [first]
        if variant == "bn":
            self.residue.append(BatchNorm(c_out))
        self.residue += [act, second]
        if variant == "bn":
            self.residue.append(BatchNorm(c_out))

        self.shortcut: List[Layer] = []
        if stride == 2:
            self.shortcut.append(Upsample(2) if upsample else AvgPool(2))
        if c_in != c_out:
            if weight_normed:
                self.shortcut.append(WNConv2d(c_in, c_out, 1, 1, 0, rng,
                                              mode="affine" if variant == "affine_wn" else "strict"))
            else:
                self.shortcut.append(Conv2d(c_in, c_out, 1, 1, 0, rng))

        self.combine = WNAdd(c_out) if weight_normed else None

    @classmethod
    def from_spec(cls, spec, rng):
        return cls(spec.stride, spec.c_in, spec.c_out, spec.variant, rng, upsample=spec.upsample)

    def children(self) -> List[Tuple[str, Layer]]:
        named = [(f"residue.{i}", layer) for i, layer in enumerate(self.residue)]
        named += [(f"shortcut.{i}", layer) for i, layer in enumerate(self.shortcut)]
        if self.combine is not None:
            named.append(("add", self.combine))
        return named

    @property
    def has_identity_shortcut(self) -> bool:
        return not self.shortcut

    def forward(self, x: Node) -> Node:
        r = x
        for layer in self.residue:
            r = layer(r)
        s = x
        for layer in self.shortcut:
            s = layer(s)
        if self.combine is not None:
            return self.combine(s, r)
        return s + r
