#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Lipschitz checks for weight-normalized critics.

A strict WN layer with fan-in n satisfies

    sum_i |dL/dx_i| <= sqrt(n) * sum_j |dL/dy_j|

since each unit-norm row has L1 norm at most sqrt(n). A strict WN conv has
fan-in c_i*k_w*k_h; its stride correction scales each kernel by
sqrt(d_w*d_h), so the conv factor used here is sqrt(c_i*k_w*k_h)*sqrt(d_w*d_h).
PReLU/TPReLU with slopes in [0, 1] have factor 1. The eps term in the norm
only shrinks rows, so it never breaks the bound.

Chaining the per-layer bounds gives sum_i |df/dx_i| <= K for a scalar critic
f, hence |f(x1) - f(x2)| <= K * max_i |x1_i - x2_i|. The pairwise probe uses
exactly that max-coordinate distance.

Usage:
    critic = make_critic(disc_spec)
    budget = budget_for(critic)
    report = empirical_lipschitz(instantiate(critic), budget.K, pairs=10_000)
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from constants import BOUND_SLACK
from layers import Layer, PReLU, TPReLU, WNConv2d, WNConvTranspose2d, WNLinear
from netbuild import LayerSpec, Network, NetworkSpec, ResBlockSpec
from tensor_autodiff import backward, constant, parameter, reduce_sum
from utils.error_handling import BuildError, get_logger

logger = get_logger("lipschitz")

_UNIT_KINDS = ("prelu", "tprelu", "flatten", "reshape")


@dataclasses.dataclass
class LipschitzBudget:
    factors: List[Tuple[str, float]]

    @property
    def K(self) -> float:
        return math.prod(f for _, f in self.factors)

    def to_dict(self) -> Dict[str, Any]:
        return {"factors": [[name, f] for name, f in self.factors], "K": self.K}


def layer_factor(block: LayerSpec) -> float:
    """Gradient-sum amplification of one critic layer."""
    if block.kind in _UNIT_KINDS:
        return 1.0
    if block.kind in ("wn_linear", "wn_conv") and block.mode == "affine":
        raise BuildError(f"Affine {block.kind} has an unbounded learned scale; no Lipschitz factor")
    if block.kind == "wn_linear":
        return math.sqrt(block.c_in)
    if block.kind == "wn_conv":
        return math.sqrt(block.c_in * block.kernel * block.kernel) * math.sqrt(block.stride * block.stride)
    raise BuildError(f"Layer kind '{block.kind}' has no Lipschitz factor in a WN critic")


def budget_for(spec: NetworkSpec) -> LipschitzBudget:
    factors = []
    for i, block in enumerate(spec.blocks):
        if isinstance(block, ResBlockSpec):
            raise BuildError("Residual critics are not supported by the Lipschitz budget")
        factors.append((f"{i}.{block.kind}", layer_factor(block)))
    return LipschitzBudget(factors)


def make_critic(disc_spec: NetworkSpec) -> NetworkSpec:
    """Turn a WN discriminator into a critic: drop the sigmoid and make the final layer strict."""
    if disc_spec.role != "discriminator":
        raise BuildError(f"make_critic needs a discriminator spec, got a {disc_spec.role}")
    if disc_spec.variant not in ("wn", "affine_wn"):
        raise BuildError(f"make_critic needs a weight-normalized discriminator, got variant '{disc_spec.variant}'")
    blocks = list(disc_spec.blocks)
    if any(isinstance(b, ResBlockSpec) for b in blocks):
        raise BuildError("make_critic does not support residual discriminators")
    if blocks and blocks[-1].kind == "sigmoid":
        blocks.pop()
    critic = [dataclasses.replace(b, mode="strict") if b.kind.startswith("wn_") else b for b in blocks]
    return dataclasses.replace(disc_spec, blocks=tuple(critic))


# ── per-layer gradient bound ───────────────────────────────────────

@dataclasses.dataclass
class GradientBoundReport:
    layer: str
    factor: float
    trials: int
    max_ratio: float
    violations: int
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def instance_factor(layer: Layer) -> float:
    """layer_factor for an instantiated layer."""
    if isinstance(layer, (PReLU, TPReLU)):
        if np.any(layer.slope.value < 0.0) or np.any(layer.slope.value > 1.0):
            raise BuildError(f"{layer.display_name} slopes must lie in [0, 1] for the bound to hold")
        return 1.0
    if isinstance(layer, WNConvTranspose2d):
        raise BuildError("Transposed convolutions are not critic layers")
    if getattr(layer, "mode", None) == "affine":
        raise BuildError(f"{layer.display_name} has a learned scale; no Lipschitz factor")
    if isinstance(layer, WNConv2d):
        return math.sqrt(layer.c_in * layer.kernel * layer.kernel) * layer.stride
    if isinstance(layer, WNLinear):
        return math.sqrt(layer.c_in)
    raise BuildError(f"No gradient bound for layer kind '{layer.kind}'")


def _random_input(layer: Layer, rng: np.random.Generator) -> np.ndarray:
    if isinstance(layer, WNConv2d):
        size = max(layer.kernel, 2 * layer.stride) + 2
        return rng.normal(size=(1, layer.c_in, size, size))
    if isinstance(layer, WNLinear):
        return rng.normal(size=(1, layer.c_in))
    return rng.normal(size=(1, layer.channels, 3, 3))


def check_gradient_bound(layer: Layer, trials: int = 1000, seed: int = 0,
                         name: Optional[str] = None) -> GradientBoundReport:
    """Check sum|dL/dx| <= factor * sum|dL/dy| on random (input, upstream gradient) pairs."""
    factor = instance_factor(layer)
    rng = np.random.default_rng(seed)
    max_ratio, violations = 0.0, 0
    params = [node for _, node in layer.named_parameters()]
    saved = [node.requires_grad for node in params]
    for node in params:
        node.requires_grad = False
    try:
        for _ in range(trials):
            x = parameter(_random_input(layer, rng))
            y = layer(x)
            g = rng.normal(size=y.shape)
            backward(reduce_sum(y * constant(g)))
            lhs = float(np.abs(x.grad).sum())
            g_sum = float(np.abs(g).sum())
            rhs = factor * g_sum
            max_ratio = max(max_ratio, lhs / g_sum)
            if lhs > rhs + BOUND_SLACK * max(1.0, rhs):
                violations += 1
    finally:
        for node, flag in zip(params, saved):
            node.requires_grad = flag
    label = name or layer.display_name
    report = GradientBoundReport(label, factor, trials, max_ratio, violations, violations == 0)
    logger.debug(f"{label}: max ratio {max_ratio:.6f} vs factor {factor:.6f}, {violations} violations")
    return report


def check_network_bounds(critic: Network, trials: int = 1000, seed: int = 0) -> List[GradientBoundReport]:
    """Per-layer bound check for every weight and rectifier layer of a critic."""
    reports = []
    for i, layer in enumerate(critic.layers):
        if layer.kind in ("flatten", "reshape"):
            continue
        reports.append(check_gradient_bound(layer, trials, seed + i, name=f"{i}.{layer.display_name}"))
    return reports


# ── whole-critic probes ────────────────────────────────────────────

@dataclasses.dataclass
class LipschitzReport:
    pairs: int
    skipped: int
    max_ratio: float
    max_gradient_l1: float
    budget: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _critic_values(critic: Network, x: np.ndarray, chunk: int) -> np.ndarray:
    out = [critic(constant(x[i:i + chunk])).value.reshape(len(x[i:i + chunk]), -1)[:, 0]
           for i in range(0, len(x), chunk)]
    return np.concatenate(out)


def _critic_gradient_l1(critic: Network, x: np.ndarray, chunk: int) -> np.ndarray:
    norms = []
    for i in range(0, len(x), chunk):
        xs = parameter(x[i:i + chunk])
        backward(reduce_sum(critic(xs)))
        norms.append(np.abs(xs.grad).reshape(len(xs.value), -1).sum(axis=1))
    return np.concatenate(norms)


def empirical_lipschitz(critic: Network, budget: float, pairs: int = 10_000, seed: int = 0,
                        chunk: int = 1000) -> LipschitzReport:
    """Largest |f(x1) - f(x2)| / max|x1 - x2| over random pairs in [0, 1], plus max sum|df/dx|.

    Half the pairs are independent points, half are small perturbations
    of the first point. Coincident pairs are skipped.
    """
    rng = np.random.default_rng(seed)
    shape = critic.spec.sample_shape
    x1 = rng.uniform(0.0, 1.0, size=(pairs,) + shape)
    x2 = rng.uniform(0.0, 1.0, size=(pairs,) + shape)
    local = np.arange(pairs) % 2 == 1
    x2[local] = np.clip(x1[local] + 1e-3 * rng.choice([-1.0, 1.0], size=(int(local.sum()),) + shape), 0.0, 1.0)

    was_training = critic.training
    critic.eval()
    try:
        with critic.frozen():
            f1 = _critic_values(critic, x1, chunk)
            f2 = _critic_values(critic, x2, chunk)
            grad_l1 = _critic_gradient_l1(critic, x1, chunk)
    finally:
        critic.train(was_training)

    dist = np.abs(x1 - x2).reshape(pairs, -1).max(axis=1)
    keep = dist > 0.0
    ratios = np.abs(f1 - f2)[keep] / dist[keep]
    max_ratio = float(ratios.max()) if ratios.size else 0.0
    max_grad = float(grad_l1.max())
    limit = budget + BOUND_SLACK * max(1.0, budget)
    report = LipschitzReport(pairs, int((~keep).sum()), max_ratio, max_grad, budget,
                             max_ratio <= limit and max_grad <= limit)
    logger.info(f"Empirical Lipschitz ratio {max_ratio:.6f}, gradient L1 {max_grad:.6f}, budget {budget:.6f}")
    return report


def inflate_final_layer(critic: Network, gain: float) -> Network:
    """Negative control: the same critic with its last weight layer's output scaled by ``gain``."""
    blocks = list(critic.spec.blocks)
    last = max(i for i, b in enumerate(blocks) if isinstance(b, LayerSpec) and b.kind.startswith("wn_"))
    blocks[last] = dataclasses.replace(blocks[last], mode="affine")
    inflated = Network(dataclasses.replace(critic.spec, blocks=tuple(blocks)), np.random.default_rng(0))
    state = critic.state_dict()
    for name, node in inflated.named_parameters():
        if name in state:
            node.value = state[name].copy()
        elif name.endswith(".gamma"):
            node.value = np.full(node.shape, float(gain))
        else:
            node.value = np.zeros(node.shape)
    return inflated
