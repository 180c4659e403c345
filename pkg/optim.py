# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
RMSProp and the slope-clipping post-step hook.

Update rule, elementwise:

    s <- alpha * s + (1 - alpha) * g^2
    p <- p - lr * g / (sqrt(s) + eps)

Every gradient is checked for NaN/Inf before any parameter moves, so a bad
step leaves parameters and state untouched.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from constants import LEARNING_RATE, RMSPROP_ALPHA, RMSPROP_EPS, SLOPE_MAX, SLOPE_MIN
from tensor_autodiff import Node, zero_grad
from utils.error_handling import NonFiniteError, ShapeError


@dataclasses.dataclass
class RMSPropState:
    """Running average of squared gradients, one array per parameter name."""

    square_avg: Dict[str, np.ndarray] = dataclasses.field(default_factory=dict)
    steps: int = 0


def rmsprop_step(state: RMSPropState, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
                 lr: float = LEARNING_RATE, alpha: float = RMSPROP_ALPHA,
                 eps: float = RMSPROP_EPS) -> Dict[str, np.ndarray]:
    """Apply one update to every named parameter; returns the new values and updates ``state``."""
    for name, p in params.items():
        g = grads.get(name)
        if g is None or np.shape(g) != np.shape(p):
            raise ShapeError(f"rmsprop_step: gradient for {name} missing or shaped "
                             f"{None if g is None else np.shape(g)} instead of {np.shape(p)}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"rmsprop_step: non-finite gradient for {name}; step aborted")

    updated: Dict[str, np.ndarray] = {}
    new_avg: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        s = state.square_avg.get(name)
        s = (1.0 - alpha) * g * g if s is None else alpha * s + (1.0 - alpha) * g * g
        denom = np.sqrt(s) + eps
        step = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
        updated[name] = np.asarray(p, dtype=np.float64) - lr * step
        new_avg[name] = s
    state.square_avg.update(new_avg)
    state.steps += 1
    return updated


PostStepHook = Callable[[Sequence[Tuple[str, Node]]], None]


def clip_slopes(named_params: Sequence[Tuple[str, Node]]) -> None:
    """Clip every PReLU/TPReLU slope into [0, 1]."""
    for name, node in named_params:
        if name.endswith(".slope"):
            node.value = np.clip(node.value, SLOPE_MIN, SLOPE_MAX)


class RMSProp:
    """RMSProp over the named parameter nodes of a network.

    Post-step hooks run after every update with the full parameter list.
    """

    def __init__(self, named_params: Iterable[Tuple[str, Node]], lr: float = LEARNING_RATE,
                 alpha: float = RMSPROP_ALPHA, eps: float = RMSPROP_EPS,
                 post_step: Sequence[PostStepHook] = ()):
        self.named_params: List[Tuple[str, Node]] = list(named_params)
        self.lr, self.alpha, self.eps = lr, alpha, eps
        self.state = RMSPropState()
        self.post_step = list(post_step)

    def zero_grad(self) -> None:
        zero_grad(node for _, node in self.named_params)

    def step(self) -> None:
        params = {name: node.value for name, node in self.named_params}
        grads = {name: node.grad for name, node in self.named_params}
        updated = rmsprop_step(self.state, params, grads, self.lr, self.alpha, self.eps)
        for name, node in self.named_params:
            node.value = updated[name]
        for hook in self.post_step:
            hook(self.named_params)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: np.array(self.state.square_avg[name])
                for name, _ in self.named_params if name in self.state.square_avg}

    def load_state_dict(self, square_avg: Dict[str, np.ndarray], steps: int = 0) -> None:
        known = {name for name, _ in self.named_params}
        unknown = sorted(set(square_avg) - known)
        if unknown:
            raise ShapeError(f"Optimizer state has unknown parameters: {unknown}")
        self.state = RMSPropState({k: np.array(v, dtype=np.float64) for k, v in square_avg.items()}, steps)
