#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Declarative network construction and the vanilla <-> weight-normalized transform.

Builders return a (discriminator, generator) pair of NetworkSpec values; the
generator is the mirror image of the discriminator. Specs are plain data and
serialize to canonical JSON, so the same arguments always give the same bytes.

Variants:
    vanilla    Conv + bias, PReLU
    bn         vanilla plus batch normalization (not on the first
               discriminator layer, not on either final layer)
    wn         strict WN layers with TPReLU; affine WN on both final layers;
               first generator layer is a WN fully connected layer
    affine_wn  every WN layer affine, PReLU instead of TPReLU

Usage:
    disc, gen = build_dcgan("wn", 160, 64, 256, 5)
    print(format_layer_table(layer_table(disc)))
    net = instantiate(gen, seed=0)
"""

from __future__ import annotations

import contextlib
import dataclasses
import json
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from constants import ARCHITECTURES, VARIANTS
from layers import WEIGHT_LAYER_KINDS, Layer, Sigmoid, build_layer
from tensor_autodiff import Node
from utils.error_handling import BuildError, TransformError, get_logger

logger = get_logger("netbuild")

ROLES = ("discriminator", "generator")


# ── spec types ─────────────────────────────────────────────────────

@dataclasses.dataclass(frozen=True)
class LayerSpec:
    kind: str
    c_in: int = 0
    c_out: int = 0
    kernel: int = 0
    stride: int = 1
    padding: int = 0
    mode: str = ""
    shape: Tuple[int, ...] = ()
    factor: int = 0
    mean_only: bool = False
    first: bool = False


@dataclasses.dataclass(frozen=True)
class ResBlockSpec:
    stride: int
    c_in: int
    c_out: int
    variant: str
    upsample: bool = False
    kind: str = "resblock"


BlockSpec = Union[LayerSpec, ResBlockSpec]


@dataclasses.dataclass(frozen=True)
class NetworkSpec:
    role: str
    variant: str
    architecture: str
    image_size: Tuple[int, int, int]   # (w, h, channels); mlp uses (data_dim, 1, 1)
    base_features: int
    latent_dim: int
    blocks: Tuple[BlockSpec, ...]

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        """Per-sample shape of the data side: (C, H, W), or (D,) for mlp."""
        w, h, c = self.image_size
        if self.architecture == "mlp":
            return (w,)
        return (c, h, w)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.sample_shape if self.role == "discriminator" else (self.latent_dim,)


def _block_to_dict(block: BlockSpec) -> Dict[str, Any]:
    data = dataclasses.asdict(block)
    if isinstance(block, LayerSpec):
        data["shape"] = list(block.shape)
    return data


def _block_from_dict(data: Dict[str, Any]) -> BlockSpec:
    if data.get("kind") == "resblock":
        return ResBlockSpec(**data)
    data = dict(data)
    data["shape"] = tuple(data.get("shape", ()))
    return LayerSpec(**data)


def spec_to_dict(spec: NetworkSpec) -> Dict[str, Any]:
    return {
        "role": spec.role,
        "variant": spec.variant,
        "architecture": spec.architecture,
        "image_size": list(spec.image_size),
        "base_features": spec.base_features,
        "latent_dim": spec.latent_dim,
        "blocks": [_block_to_dict(b) for b in spec.blocks],
    }


def spec_from_dict(data: Dict[str, Any]) -> NetworkSpec:
    try:
        return NetworkSpec(
            role=data["role"],
            variant=data["variant"],
            architecture=data["architecture"],
            image_size=tuple(data["image_size"]),
            base_features=int(data["base_features"]),
            latent_dim=int(data["latent_dim"]),
            blocks=tuple(_block_from_dict(b) for b in data["blocks"]),
        )
    except (KeyError, TypeError) as e:
        raise BuildError(f"Malformed network spec: {e}") from e


def spec_to_json(spec: NetworkSpec) -> str:
    """Canonical JSON: fixed field order, no whitespace."""
    return json.dumps(spec_to_dict(spec), separators=(",", ":"))


def spec_from_json(text: str) -> NetworkSpec:
    return spec_from_dict(json.loads(text))


# ── shared builder pieces ──────────────────────────────────────────

def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise BuildError(f"Unknown variant '{variant}'; expected one of {VARIANTS}")


def _weight_layer(variant: str, transposed: bool, c_in: int, c_out: int, k: int, s: int, p: int,
                  final: bool = False, first: bool = False) -> LayerSpec:
    if variant in ("vanilla", "bn"):
        kind = "conv_t" if transposed else "conv"
        return LayerSpec(kind, c_in, c_out, k, s, p, first=first)
    kind = "wn_conv_t" if transposed else "wn_conv"
    mode = "affine" if final or variant == "affine_wn" else "strict"
    return LayerSpec(kind, c_in, c_out, k, s, p, mode=mode, first=first)


def _linear_layer(variant: str, c_in: int, c_out: int, final: bool = False, first: bool = False) -> LayerSpec:
    if variant in ("vanilla", "bn"):
        return LayerSpec("linear", c_in, c_out, first=first)
    mode = "affine" if final or variant == "affine_wn" else "strict"
    return LayerSpec("wn_linear", c_in, c_out, mode=mode, first=first)


def _activation(variant: str, channels: int) -> LayerSpec:
    return LayerSpec("tprelu" if variant == "wn" else "prelu", c_out=channels)


def _latent_layer(variant: str, latent_dim: int, channels: int, size: int) -> List[LayerSpec]:
    """First generator layer: latent code -> [channels, size, size]."""
    if variant in ("vanilla", "bn"):
        return [LayerSpec("reshape", shape=(latent_dim, 1, 1)),
                LayerSpec("conv_t", latent_dim, channels, size, 1, 0, first=True)]
    mode = "affine" if variant == "affine_wn" else "strict"
    return [LayerSpec("wn_fc", latent_dim, channels * size * size, mode=mode,
                      shape=(channels, size, size), first=True)]


def _image_dims(image_size: Union[int, Sequence[int]], channels: int) -> Tuple[int, int, int]:
    if isinstance(image_size, (int, np.integer)):
        return int(image_size), int(image_size), channels
    dims = tuple(int(v) for v in image_size)
    if len(dims) == 2:
        dims = dims + (channels,)
    if len(dims) != 3:
        raise BuildError(f"image_size must be an int, (w, h) or (w, h, c), got {image_size}")
    return dims


# ── DCGAN ──────────────────────────────────────────────────────────

def halving_plan(size: int, base_features: int, min_spatial: int) -> Tuple[List[int], int]:
    """Feature counts of the stride-2 layers and the spatial size left for the final conv."""
    if size < 1 or min_spatial < 1 or base_features < 1:
        raise BuildError(f"Sizes must be positive: size={size}, min_spatial={min_spatial}, "
                         f"base_features={base_features}")
    features: List[int] = []
    s, f = size, base_features
    while s > min_spatial:
        if s % 2:
            raise BuildError(f"Image size {size} is not reducible to {min_spatial} by halving "
                             f"(reached odd size {s})")
        features.append(f)
        s //= 2
        f *= 2
    if not features:
        raise BuildError(f"Image size {size} must exceed min_spatial {min_spatial}")
    return features, s


def build_dcgan(variant: str, image_size: Union[int, Sequence[int]], base_features: int,
                latent_dim: int, min_spatial: int, channels: int = 3) -> Tuple[NetworkSpec, NetworkSpec]:
    """DCGAN discriminator/generator pair.

    The discriminator stacks k4 s2 p1 convolutions, doubling features from
    base_features, until the spatial size is at most min_spatial; a final
    conv with kernel equal to the remaining size produces one logit.
    """
    _check_variant(variant)
    w, h, c = _image_dims(image_size, channels)
    if w != h:
        raise BuildError(f"DCGAN builder needs square images, got {w}x{h}")
    plan, final_size = halving_plan(w, base_features, min_spatial)

    disc: List[BlockSpec] = []
    prev = c
    for i, f in enumerate(plan):
        disc.append(_weight_layer(variant, False, prev, f, 4, 2, 1))
        if variant == "bn" and i > 0:
            disc.append(LayerSpec("batchnorm", c_out=f))
        disc.append(_activation(variant, f))
        prev = f
    disc.append(_weight_layer(variant, False, prev, 1, final_size, 1, 0, final=True))
    disc += [LayerSpec("flatten"), LayerSpec("sigmoid")]

    gen: List[BlockSpec] = _latent_layer(variant, latent_dim, plan[-1], final_size)
    if variant == "bn":
        gen.append(LayerSpec("batchnorm", c_out=plan[-1]))
    gen.append(_activation(variant, plan[-1]))
    for f_in, f_out in zip(plan[::-1], plan[::-1][1:]):
        gen.append(_weight_layer(variant, True, f_in, f_out, 4, 2, 1))
        if variant == "bn":
            gen.append(LayerSpec("batchnorm", c_out=f_out))
        gen.append(_activation(variant, f_out))
    gen.append(_weight_layer(variant, True, plan[0], c, 4, 2, 1, final=True))
    gen.append(LayerSpec("sigmoid"))

    common = dict(variant=variant, architecture="dcgan", image_size=(w, h, c),
                  base_features=base_features, latent_dim=latent_dim)
    logger.debug(f"dcgan {variant}: features {plan}, final kernel {final_size}")
    return (NetworkSpec(role="discriminator", blocks=tuple(disc), **common),
            NetworkSpec(role="generator", blocks=tuple(gen), **common))


# ── MLP (2-D toy data) ─────────────────────────────────────────────

def build_mlp_gan(variant: str, data_dim: int = 2, hidden: int = 64, latent_dim: int = 8,
                  depth: int = 2) -> Tuple[NetworkSpec, NetworkSpec]:
    """Fully connected pair with ``depth`` weight layers each, same placement rules as DCGAN."""
    _check_variant(variant)
    if depth < 2 or hidden < 1 or data_dim < 1 or latent_dim < 1:
        raise BuildError(f"Invalid MLP shape: depth={depth}, hidden={hidden}, "
                         f"data_dim={data_dim}, latent_dim={latent_dim}")
    disc: List[BlockSpec] = []
    prev = data_dim
    for i in range(depth - 1):
        disc.append(_linear_layer(variant, prev, hidden))
        if variant == "bn" and i > 0:
            disc.append(LayerSpec("batchnorm", c_out=hidden))
        disc.append(_activation(variant, hidden))
        prev = hidden
    disc += [_linear_layer(variant, prev, 1, final=True), LayerSpec("sigmoid")]

    gen: List[BlockSpec] = []
    prev = latent_dim
    for i in range(depth - 1):
        gen.append(_linear_layer(variant, prev, hidden, first=(i == 0)))
        if variant == "bn":
            gen.append(LayerSpec("batchnorm", c_out=hidden))
        gen.append(_activation(variant, hidden))
        prev = hidden
    gen += [_linear_layer(variant, prev, data_dim, final=True), LayerSpec("sigmoid")]

    common = dict(variant=variant, architecture="mlp", image_size=(data_dim, 1, 1),
                  base_features=hidden, latent_dim=latent_dim)
    return (NetworkSpec(role="discriminator", blocks=tuple(disc), **common),
            NetworkSpec(role="generator", blocks=tuple(gen), **common))


# ── ResNet ─────────────────────────────────────────────────────────

def build_resnet_gan(variant: str, feature_plan: Sequence[int], latent_dim: int,
                     image_size: Optional[int] = None, channels: int = 3,
                     final_kernel: int = 5) -> Tuple[NetworkSpec, NetworkSpec]:
    """Residual pair: each level is a stride-2 block followed by a stride-1 block.

    The discriminator ends with a conv whose kernel covers the remaining
    spatial extent (5 for the default 160-pixel input of a 5-level plan).
    The generator mirrors it with upsampling blocks and ends with an affine
    k3 conv to the image channels.
    """
    _check_variant(variant)
    plan = [int(f) for f in feature_plan]
    if not plan or any(f < 1 for f in plan):
        raise BuildError(f"Invalid feature plan {list(feature_plan)}")
    levels = len(plan)
    if image_size is None:
        image_size = final_kernel * 2 ** levels
    if image_size % (2 ** levels) or image_size // (2 ** levels) < 1:
        raise BuildError(f"Image size {image_size} is not divisible by 2^{levels}")
    final_size = image_size // (2 ** levels)

    disc: List[BlockSpec] = []
    prev = channels
    for f in plan:
        disc.append(ResBlockSpec(2, prev, f, variant))
        disc.append(ResBlockSpec(1, f, f, variant))
        prev = f
    disc.append(_weight_layer(variant, False, prev, 1, final_size, 1, 0, final=True))
    disc += [LayerSpec("flatten"), LayerSpec("sigmoid")]

    gen: List[BlockSpec] = _latent_layer(variant, latent_dim, plan[-1], final_size)
    if variant == "bn":
        gen.append(LayerSpec("batchnorm", c_out=plan[-1]))
    gen.append(_activation(variant, plan[-1]))
    rev = plan[::-1]
    for i, f in enumerate(rev):
        nxt = rev[i + 1] if i + 1 < levels else f
        gen.append(ResBlockSpec(1, f, f, variant, upsample=True))
        gen.append(ResBlockSpec(2, f, nxt, variant, upsample=True))
    gen.append(_weight_layer(variant, False, plan[0], channels, 3, 1, 1, final=True))
    gen.append(LayerSpec("sigmoid"))

    common = dict(variant=variant, architecture="resnet", image_size=(image_size, image_size, channels),
                  base_features=plan[0], latent_dim=latent_dim)
    return (NetworkSpec(role="discriminator", blocks=tuple(disc), **common),
            NetworkSpec(role="generator", blocks=tuple(gen), **common))


def build_pair(architecture: str, variant: str, **kwargs) -> Tuple[NetworkSpec, NetworkSpec]:
    """Dispatch to the builder for an architecture name."""
    if architecture not in ARCHITECTURES:
        raise BuildError(f"Unknown architecture '{architecture}'; expected one of {ARCHITECTURES}")
    if architecture == "dcgan":
        return build_dcgan(variant, kwargs["image_size"], kwargs["base_features"],
                           kwargs["latent_dim"], kwargs["min_spatial"], kwargs.get("channels", 3))
    if architecture == "mlp":
        return build_mlp_gan(variant, kwargs.get("data_dim", 2), kwargs.get("hidden", 64),
                             kwargs["latent_dim"], kwargs.get("depth", 2))
    return build_resnet_gan(variant, kwargs["feature_plan"], kwargs["latent_dim"],
                            kwargs.get("image_size"), kwargs.get("channels", 3))


# ── spec inspection ────────────────────────────────────────────────

def _count_block(block: BlockSpec) -> int:
    if isinstance(block, ResBlockSpec):
        return _count_resblock(block)
    k2 = block.kernel * block.kernel
    affine = block.mode == "affine"
    if block.kind == "linear":
        return block.c_in * block.c_out + block.c_out
    if block.kind in ("conv", "conv_t"):
        return block.c_in * block.c_out * k2 + block.c_out
    if block.kind == "wn_linear":
        return block.c_in * block.c_out + (2 * block.c_out if affine else 0)
    if block.kind == "wn_fc":
        return block.c_in * int(np.prod(block.shape)) + (2 * block.shape[0] if affine else 0)
    if block.kind in ("wn_conv", "wn_conv_t"):
        return block.c_in * block.c_out * k2 + (2 * block.c_out if affine else 0)
    if block.kind == "prelu":
        return block.c_out
    if block.kind == "tprelu":
        return 2 * block.c_out
    if block.kind == "batchnorm":
        return block.c_out if block.mean_only else 2 * block.c_out
    return 0


def _count_resblock(block: ResBlockSpec) -> int:
    ci, co, v = block.c_in, block.c_out, block.variant
    k1 = 4 if block.upsample and block.stride == 2 else 3
    per_conv_extra = {"vanilla": co, "bn": co, "wn": 0, "affine_wn": 2 * co}[v]
    total = ci * co * k1 * k1 + co * co * 9 + 2 * per_conv_extra
    total += 2 * co if v == "wn" else co            # activation
    if v == "bn":
        total += 2 * 2 * co
    if ci != co:
        total += ci * co + per_conv_extra
    if v in ("wn", "affine_wn"):
        total += 2 * co                               # WNAdd weights
    return total


def count_parameters(spec: NetworkSpec) -> int:
    """Closed-form trainable parameter count of a spec."""
    return sum(_count_block(b) for b in spec.blocks)


def count_weight_layers(spec: NetworkSpec) -> int:
    """Depth in weight layers; a residual block counts its two residue convolutions."""
    total = 0
    for block in spec.blocks:
        if isinstance(block, ResBlockSpec):
            total += 2
        elif block.kind in WEIGHT_LAYER_KINDS:
            total += 1
    return total


def _describe_block(block: BlockSpec) -> Optional[Dict[str, Any]]:
    if isinstance(block, ResBlockSpec):
        return {"name": "ResBlock", "s": block.stride, "c": block.c_out}
    wn_name = "AWNConv" if block.mode == "affine" else "SWNConv"
    if block.kind in ("conv", "conv_t"):
        return {"name": "Conv", "k": block.kernel, "s": block.stride, "p": block.padding, "c": block.c_out}
    if block.kind in ("wn_conv", "wn_conv_t"):
        return {"name": wn_name, "k": block.kernel, "s": block.stride, "p": block.padding, "c": block.c_out}
    if block.kind == "wn_fc":
        c, s, _ = block.shape
        return {"name": wn_name, "k": s, "s": 1, "p": 0, "c": c}
    if block.kind == "linear":
        return {"name": "Linear", "c": block.c_out}
    if block.kind == "wn_linear":
        return {"name": "AWNLinear" if block.mode == "affine" else "SWNLinear", "c": block.c_out}
    if block.kind == "batchnorm":
        return {"name": "MeanOnlyBN" if block.mean_only else "BN"}
    if block.kind in ("prelu", "tprelu", "sigmoid"):
        return {"name": {"prelu": "PReLU", "tprelu": "TPReLU", "sigmoid": "Sigmoid"}[block.kind]}
    return None


def layer_table(spec: NetworkSpec) -> List[Dict[str, Any]]:
    """Table rows (name, kernel, stride, padding, output channels) in layer order."""
    return [row for row in (_describe_block(b) for b in spec.blocks) if row is not None]


def format_layer_table(rows: List[Dict[str, Any]]) -> str:
    lines = [f"{'layer':<12} {'k, s, p, c':<16}"]
    for row in rows:
        if "k" in row:
            geometry = f"{row['k']}, {row['s']}, {row['p']}, {row['c']}"
        elif "c" in row:
            geometry = str(row["c"])
        else:
            geometry = ""
        lines.append(f"{row['name']:<12} {geometry:<16}")
    return "\n".join(lines)


def mirror_signature(spec: NetworkSpec) -> List[Tuple[Any, ...]]:
    """Weight-layer geometry read from the data side to the latent side.

    Each entry is (family, k, s, p, data-side channels, latent-side
    channels); the latent end is marked "latent". A DCGAN or MLP generator
    built as the mirror of its discriminator has the same signature.
    Strict/affine mode is left out: the final layers of the two networks differ in it.
    """
    entries = []
    for block in spec.blocks:
        if isinstance(block, ResBlockSpec):
            family, geom = "resblock", (block.stride,)
            ends = (block.c_in, block.c_out)
        elif block.kind in WEIGHT_LAYER_KINDS:
            family = "wn" if block.kind.startswith("wn") else "plain"
            if block.kind == "wn_fc":
                c, s, _ = block.shape
                geom, ends = (s, 1, 0), (block.c_in, c)
            else:
                geom, ends = (block.kernel, block.stride, block.padding), (block.c_in, block.c_out)
        else:
            continue
        if spec.role == "generator":
            ends = ends[::-1]
        entries.append([family, *geom, *ends])
    if spec.role == "generator":
        entries.reverse()
    if entries:
        entries[-1][-1] = "latent"
    return [tuple(e) for e in entries]


# ── instantiated networks ──────────────────────────────────────────

class Network:
    """Layers built from a NetworkSpec, applied in order.

    Counts forward calls and their batch sizes so callers can verify how
    batches were fed (for example real and fake batches kept separate).
    """

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        self.layers: List[Layer] = [build_layer(block, rng) for block in spec.blocks]
        self.forward_calls = 0
        self.forward_batch_sizes: List[int] = []

    def __call__(self, x: Node, return_logits: bool = False) -> Node:
        return self.forward(x, return_logits)

    def forward(self, x: Node, return_logits: bool = False) -> Node:
        self.forward_calls += 1
        self.forward_batch_sizes.append(int(x.shape[0]))
        layers = self.layers
        if return_logits and layers and isinstance(layers[-1], Sigmoid):
            layers = layers[:-1]
        for layer in layers:
            x = layer(x)
        return x

    def reset_counters(self) -> None:
        self.forward_calls = 0
        self.forward_batch_sizes = []

    def named_parameters(self) -> Iterator[Tuple[str, Node]]:
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{i}.")

    def parameters(self) -> List[Node]:
        return [node for _, node in self.named_parameters()]

    def named_buffers(self) -> Iterator[Tuple[str, Layer, str]]:
        for i, layer in enumerate(self.layers):
            yield from layer.named_buffers(f"{i}.")

    def slope_parameters(self) -> List[Node]:
        return [node for name, node in self.named_parameters() if name.endswith(".slope")]

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Parameters then buffers, in traversal order."""
        state = {name: np.array(node.value) for name, node in self.named_parameters()}
        for name, layer, key in self.named_buffers():
            state[name] = np.array(layer.buffers[key])
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        expected = [name for name, _ in self.named_parameters()] + [n for n, _, _ in self.named_buffers()]
        missing = [name for name in expected if name not in state]
        extra = [name for name in state if name not in expected]
        if missing or extra:
            raise BuildError(f"State does not match network: missing {missing}, unexpected {extra}")
        for name, node in self.named_parameters():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != node.shape:
                raise BuildError(f"Parameter {name}: expected shape {node.shape}, got {value.shape}")
            node.value = value.copy()
        for name, layer, key in self.named_buffers():
            layer.buffers[key] = np.asarray(state[name], dtype=np.float64).copy()

    def train(self, mode: bool = True) -> "Network":
        for layer in self.layers:
            layer.train(mode)
        return self

    def eval(self) -> "Network":
        return self.train(False)

    @property
    def training(self) -> bool:
        return all(layer.training for layer in self.layers)

    def num_parameters(self) -> int:
        return sum(node.value.size for node in self.parameters())

    @property
    def latent_dim(self) -> int:
        return self.spec.latent_dim

    @contextlib.contextmanager
    def frozen(self):
        """Treat every parameter as a constant inside the block (no gradient bookkeeping)."""
        params = self.parameters()
        for node in params:
            node.requires_grad = False
        try:
            yield self
        finally:
            for node in params:
                node.requires_grad = True


def instantiate(spec: NetworkSpec, seed: int = 0) -> Network:
    """Build and initialize a network; the same (spec, seed) gives the same weights."""
    return Network(spec, np.random.default_rng(seed))


# ── vanilla <-> weight-normalized transform ───────────────────────

def unit_to_wn(w: np.ndarray, alpha: float, gamma: float, beta: float
                      ) -> Tuple[np.ndarray, float, float, float]:
    """Map a unit gamma * act(w.x + alpha) + beta to gamma' * tact(w_hat.x; alpha') + beta'.

    w' = w, alpha' = -alpha/|w|, beta' = beta + alpha*gamma, gamma' = |w|*gamma.
    The identity holds for either sign of gamma because gamma stays outside
    the rectifier.
    """
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise TransformError("Weight row has zero norm; the transform is undefined")
    return w.copy(), -alpha / norm, beta + alpha * gamma, norm * gamma


def unit_from_wn(w: np.ndarray, alpha: float, gamma: float, beta: float
                      ) -> Tuple[np.ndarray, float, float, float]:
    """Inverse of unit_to_wn: alpha = -|w'|alpha', beta = beta' + alpha'gamma', gamma = gamma'/|w'|."""
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise TransformError("Weight row has zero norm; the transform is undefined")
    return w.copy(), -norm * alpha, beta + alpha * gamma, gamma / norm


def _prelu(z: np.ndarray, slope: np.ndarray) -> np.ndarray:
    return np.where(z >= 0.0, z, slope * z)


def _tprelu(u: np.ndarray, alpha: np.ndarray, slope: np.ndarray) -> np.ndarray:
    return np.where(u >= alpha, u, slope * (u - alpha) + alpha)


def _row_norms(w: np.ndarray, layer: int) -> np.ndarray:
    norms = np.linalg.norm(w, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise TransformError(f"Layer {layer}: rows {zero.tolist()} have zero norm; transform undefined")
    return norms


@dataclasses.dataclass
class VanillaStack:
    """Linear - act - ... - linear; slopes of zero give plain ReLU."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    slopes: List[np.ndarray]

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, b, a in zip(self.weights[:-1], self.biases[:-1], self.slopes):
            h = _prelu(h @ w.T + b, a)
        return h @ self.weights[-1].T + self.biases[-1]


@dataclasses.dataclass
class WNStack:
    """Strict WN - TPReLU - ... - affine WN, with exact unit-norm rows."""

    weights: List[np.ndarray]
    alphas: List[np.ndarray]
    slopes: List[np.ndarray]
    gamma: np.ndarray
    beta: np.ndarray

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=np.float64)
        for w, alpha, a in zip(self.weights[:-1], self.alphas, self.slopes):
            w_hat = w / np.linalg.norm(w, axis=1, keepdims=True)
            h = _tprelu(h @ w_hat.T, alpha, a)
        w_hat = self.weights[-1] / np.linalg.norm(self.weights[-1], axis=1, keepdims=True)
        return self.gamma * (h @ w_hat.T) + self.beta


def random_vanilla_stack(n: int, width: int, rng: np.random.Generator, d_in: Optional[int] = None,
                         d_out: Optional[int] = None, prelu: bool = False) -> VanillaStack:
    """Random (2n+1)-layer stack: n hidden linear+act pairs and a final linear layer."""
    if n < 0 or width < 1:
        raise BuildError(f"Invalid stack shape n={n}, width={width}")
    d_in = d_in or width
    d_out = d_out or width
    dims = [d_in] + [width] * n + [d_out]
    weights = [rng.normal(size=(dims[i + 1], dims[i])) / np.sqrt(dims[i]) for i in range(n + 1)]
    biases = [0.5 * rng.normal(size=dims[i + 1]) for i in range(n + 1)]
    slopes = [rng.uniform(0.0, 1.0, size=width) if prelu else np.zeros(width) for _ in range(n)]
    return VanillaStack(weights, biases, slopes)


def vanilla_to_wn(stack: VanillaStack) -> WNStack:
    """Equivalent WN stack, applying the unit map layer by layer.

    Each hidden unit becomes gamma' * TPReLU + beta'; that per-unit affine
    is then folded into the next layer's weights and bias before the next
    unit is mapped. The last layer keeps its affine as (gamma', beta').
    """
    n = len(stack.slopes)
    g = np.ones(stack.weights[0].shape[1])
    c = np.zeros(stack.weights[0].shape[1])
    weights, alphas = [], []
    for i in range(n + 1):
        w = stack.weights[i] * g[None, :]
        b = stack.weights[i] @ c + stack.biases[i]
        _row_norms(w, i)
        mapped = [unit_to_wn(w[j], b[j], 1.0, 0.0) for j in range(w.shape[0])]
        weights.append(np.stack([m[0] for m in mapped]))
        alpha = np.array([m[1] for m in mapped])
        g = np.array([m[3] for m in mapped])
        c = np.array([m[2] for m in mapped])
        if i < n:
            alphas.append(alpha)
    return WNStack(weights, alphas, [np.array(a) for a in stack.slopes], gamma=g, beta=c)


def wn_to_vanilla(stack: WNStack) -> VanillaStack:
    """Inverse of vanilla_to_wn: fold each TPReLU threshold back into a bias."""
    n = len(stack.slopes)
    weights, biases = [], []
    prev_norms = np.ones(stack.weights[0].shape[1])
    prev_alpha = np.zeros(stack.weights[0].shape[1])
    for i in range(n):
        w_prime = stack.weights[i]
        norms = _row_norms(w_prime, i)
        weights.append(w_prime / prev_norms[None, :])
        biases.append(w_prime @ prev_alpha - norms * stack.alphas[i])
        prev_norms, prev_alpha = norms, stack.alphas[i]
    w_prime = stack.weights[n]
    scale = stack.gamma / _row_norms(w_prime, n)
    weights.append(scale[:, None] * w_prime / prev_norms[None, :])
    biases.append(scale * (w_prime @ prev_alpha) + stack.beta)
    return VanillaStack(weights, biases, [np.array(a) for a in stack.slopes])


@dataclasses.dataclass
class EquivalenceReport:
    depth: int
    width: int
    trials: int
    max_output_discrepancy: float
    max_roundtrip_error: float
    max_inverse_discrepancy: float
    passed: bool
    tolerance: float
    roundtrip_tolerance: float

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def check_equivalence(depth: int, width: int, trials: int, seed: int = 0, n_inputs: int = 1000,
                      prelu: bool = True, tolerance: float = 1e-9,
                      roundtrip_tolerance: float = 1e-12) -> EquivalenceReport:
    """Random stacks with ``depth`` hidden pairs: forward agreement and parameter round trip.

    Parameters are compared relative to their magnitude (max(1, |p|)).
    """
    rng = np.random.default_rng(seed)
    out_err = round_err = inv_err = 0.0
    for _ in range(trials):
        vanilla = random_vanilla_stack(depth, width, rng, prelu=prelu)
        x = rng.normal(size=(n_inputs, vanilla.weights[0].shape[1]))
        wn = vanilla_to_wn(vanilla)
        y = vanilla.forward(x)
        out_err = max(out_err, float(np.max(np.abs(wn.forward(x) - y))))
        back = wn_to_vanilla(wn)
        inv_err = max(inv_err, float(np.max(np.abs(back.forward(x) - y))))
        for a, b in zip(vanilla.weights + vanilla.biases, back.weights + back.biases):
            rel = np.abs(a - b) / np.maximum(1.0, np.abs(a))
            round_err = max(round_err, float(rel.max()))
    passed = out_err < tolerance and inv_err < tolerance and round_err < roundtrip_tolerance
    return EquivalenceReport(depth, width, trials, out_err, round_err, inv_err, passed,
                             tolerance, roundtrip_tolerance)
