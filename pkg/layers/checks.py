# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Gradient suite: autodiff against central finite differences for every layer.

Each case builds a small random layer instance, projects its output onto a
random upstream gradient g (L = sum(y * g)) and compares dL/dx and dL/dp
for every parameter p with the finite-difference estimate.

Usage:
    from layers.checks import run_gradient_suite
    reports = run_gradient_suite(trials=10, seed=0)
    assert all(r.passed for r in reports)
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from constants import FD_STEP
from tensor_autodiff import (
    Node,
    as_tensor,
    backward,
    compare_gradients,
    constant,
    finite_diff_grad,
    parameter,
    reduce_sum,
)
from utils.error_handling import get_logger

from .activations import PReLU, Sigmoid, TPReLU
from .base import Layer
from .dense import Conv2d, ConvTranspose2d, Linear
from .normalization import BatchNorm
from .resblock import ResBlock
from .structural import AvgPool, Flatten, Upsample
from .weightnorm import WNAdd, WNConv2d, WNConvTranspose2d, WNFullyConnected, WNLinear

logger = get_logger("gradcheck")


@dataclasses.dataclass
class GradientReport:
    case: str
    target: str
    trial: int
    max_rel_error: float
    max_abs_error: float
    passed: bool

    def to_dict(self) -> Dict[str, object]:
        return dataclasses.asdict(self)


# ── random instances ───────────────────────────────────────────────

Case = Callable[[np.random.Generator], Tuple[Layer, List[np.ndarray]]]


def _randomize(layer: Layer, rng: np.random.Generator) -> Layer:
    """Replace every parameter with a generic random value (slopes stay in (0, 1))."""
    for name, node in layer.named_parameters():
        if name.endswith("slope"):
            node.value = rng.uniform(0.1, 0.9, size=node.shape)
        else:
            node.value = rng.normal(size=node.shape)
    return layer


def _case(factory: Callable[[np.random.Generator], Layer], *input_shapes) -> Case:
    def build(rng):
        layer = _randomize(factory(rng), rng)
        return layer, [rng.normal(size=shape) for shape in input_shapes]
    return build


GRADIENT_CASES: Dict[str, Case] = {
    "linear": _case(lambda r: Linear(3, 4, r), (2, 3)),
    "conv": _case(lambda r: Conv2d(2, 3, 3, 1, 1, r), (2, 2, 4, 4)),
    "conv_t": _case(lambda r: ConvTranspose2d(2, 3, 4, 2, 1, r), (2, 2, 3, 3)),
    "wn_linear": _case(lambda r: WNLinear(3, 4, r), (2, 3)),
    "wn_linear_affine": _case(lambda r: WNLinear(3, 4, r, mode="affine"), (2, 3)),
    "wn_fc": _case(lambda r: WNFullyConnected(3, (2, 2, 2), r), (2, 3)),
    "wn_fc_affine": _case(lambda r: WNFullyConnected(3, (2, 2, 2), r, mode="affine"), (2, 3)),
    "wn_conv": _case(lambda r: WNConv2d(2, 3, 4, 2, 1, r), (2, 2, 4, 4)),
    "wn_conv_affine": _case(lambda r: WNConv2d(2, 3, 3, 1, 1, r, mode="affine"), (2, 2, 4, 4)),
    "wn_conv_t": _case(lambda r: WNConvTranspose2d(2, 3, 4, 2, 1, r), (2, 2, 3, 3)),
    "wn_conv_t_affine": _case(lambda r: WNConvTranspose2d(2, 3, 3, 1, 1, r, mode="affine"), (2, 2, 3, 3)),
    "prelu": _case(lambda r: PReLU(3), (2, 3, 2, 2)),
    "tprelu": _case(lambda r: TPReLU(3), (2, 3, 2, 2)),
    "sigmoid": _case(lambda r: Sigmoid(), (2, 5)),
    "batchnorm": _case(lambda r: BatchNorm(3), (4, 3)),
    "batchnorm_4d": _case(lambda r: BatchNorm(2), (3, 2, 2, 2)),
    "batchnorm_mean_only": _case(lambda r: BatchNorm(3, mean_only=True), (4, 3)),
    "wn_add": _case(lambda r: WNAdd(3), (2, 3, 2, 2), (2, 3, 2, 2)),
    "avgpool": _case(lambda r: AvgPool(2), (2, 2, 4, 4)),
    "upsample": _case(lambda r: Upsample(2), (2, 2, 2, 2)),
    "flatten": _case(lambda r: Flatten(), (2, 2, 2, 2)),
    "resblock_vanilla": _case(lambda r: ResBlock(2, 1, 2, "vanilla", r), (2, 1, 4, 4)),
    "resblock_bn": _case(lambda r: ResBlock(1, 2, 2, "bn", r), (3, 2, 3, 3)),
    "resblock_wn": _case(lambda r: ResBlock(2, 1, 2, "wn", r), (2, 1, 4, 4)),
    "resblock_wn_up": _case(lambda r: ResBlock(2, 2, 1, "wn", r, upsample=True), (2, 2, 2, 2)),
}


def select_cases(layer: Optional[str] = None) -> List[str]:
    """Case names matching a layer name: exact, or every variant of that kind."""
    if layer is None:
        return list(GRADIENT_CASES)
    return [name for name in GRADIENT_CASES if name == layer or name.startswith(layer + "_")]


# ── checking ───────────────────────────────────────────────────────

def _forward(layer: Layer, inputs: Sequence[Node]) -> Node:
    return layer(*inputs)


def check_layer_gradients(layer: Layer, inputs: Sequence[np.ndarray], rng: np.random.Generator,
                          case: str = "", trial: int = 0, h: float = FD_STEP) -> List[GradientReport]:
    """Compare autodiff and finite-difference gradients for every input and every parameter.

    Inputs are reported as "input", "input1", ... in call order.
    """
    inputs = [as_tensor(x) for x in inputs]
    probe = _forward(layer, [constant(x) for x in inputs]).value
    upstream = constant(rng.normal(size=probe.shape))

    def loss(node_inputs: Sequence[Node]) -> Node:
        return reduce_sum(_forward(layer, node_inputs) * upstream)

    params = list(layer.named_parameters())
    for _, node in params:
        node.zero_grad()
    input_nodes = [parameter(x, name=f"input{i}") for i, x in enumerate(inputs)]
    backward(loss(input_nodes))

    reports: List[GradientReport] = []

    def record(target: str, analytic: np.ndarray, numeric: np.ndarray) -> None:
        cmp = compare_gradients(analytic, numeric)
        reports.append(GradientReport(case, target, trial, cmp.max_rel_error, cmp.max_abs_error, cmp.passed))

    for i, x_node in enumerate(input_nodes):
        def f(v, i=i):
            return loss([constant(v) if j == i else constant(x) for j, x in enumerate(inputs)]).item()

        record("input" if i == 0 else f"input{i}", x_node.grad, finite_diff_grad(f, inputs[i], h))

    frozen_inputs = [constant(x) for x in inputs]
    for name, node in params:
        original = node.value

        def f(v, node=node):
            node.value = v
            return loss(frozen_inputs).item()

        try:
            numeric = finite_diff_grad(f, original, h)
        finally:
            node.value = original
        record(name, node.grad, numeric)
    return reports


def run_gradient_suite(trials: int = 1, layer: Optional[str] = None, seed: int = 0) -> List[GradientReport]:
    """Run every selected case ``trials`` times at independent random points."""
    names = select_cases(layer)
    if not names:
        raise ValueError(f"No gradient cases match layer '{layer}'; known: {', '.join(GRADIENT_CASES)}")
    rng = np.random.default_rng(seed)
    reports: List[GradientReport] = []
    for name in names:
        for trial in range(trials):
            layer_obj, inputs = GRADIENT_CASES[name](rng)
            reports.extend(check_layer_gradients(layer_obj, inputs, rng, case=name, trial=trial))
        worst = max(r.max_rel_error for r in reports if r.case == name)
        logger.debug(f"gradcheck {name}: {trials} trials, worst relative error {worst:.2e}")
    return reports
