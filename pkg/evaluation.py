#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Reconstruction-loss evaluation of a generator.

For each test sample x the latent code z starts at the all-zero vector and
is optimized with RMSProp to minimize |G(z) - x|^2 while the generator's
parameters stay frozen. The reported loss is per pixel and channel:
|G(z*) - x|^2 divided by the number of elements in one sample (3*w*h for
an RGB image).

Samples never interact (batch normalization runs in inference mode), so all
codes are optimized together as one batch; the numbers match a sample-by-
sample run. If the batch hits a non-finite value, samples are retried one
at a time and the failures are skipped and flagged in the report.

Usage:
    report = final_eval(gen, test_images, EvalConfig(steps=2000))
    report.write_json(out / "report.json")
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import pathlib
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import EvalConfig
from tensor_autodiff import backward, constant, parameter, reduce_sum, square
from optim import RMSPropState, rmsprop_step
from utils.error_handling import DatasetError, NonFiniteError, ShapeError, get_logger
from utils.structure import atomic_write_bytes, atomic_write_json

logger = get_logger("evaluation")


@dataclasses.dataclass
class Reconstruction:
    z: np.ndarray                   # [N, latent_dim]
    losses: np.ndarray              # per-sample, per-pixel loss at z
    initial_losses: np.ndarray      # per-sample loss of G(0)
    curve: List[Dict[str, float]]   # [{"step", "mean_loss"}] when recording


@dataclasses.dataclass
class EvalReport:
    per_sample_loss: List[float]
    sample_indices: List[int]
    initial_loss: List[float]
    mean_loss: float
    steps: int
    lr: float
    checkpoint_id: str
    wall_time_s: float
    failed_indices: List[int] = dataclasses.field(default_factory=list)
    curve: List[Dict[str, float]] = dataclasses.field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return len(self.failed_indices)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["n_samples"] = len(self.per_sample_loss)
        data["n_failed"] = self.n_failed
        return data

    def write_json(self, path: pathlib.Path) -> None:
        atomic_write_json(pathlib.Path(path), self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        known = {f.name for f in dataclasses.fields(cls)}
        try:
            return cls(**{k: v for k, v in data.items() if k in known})
        except TypeError as e:
            raise DatasetError(f"Not an evaluation report: {e}") from e

    @classmethod
    def read_json(cls, path: pathlib.Path) -> "EvalReport":
        path = pathlib.Path(path)
        if not path.is_file():
            raise DatasetError(f"Evaluation report not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise DatasetError(f"Could not parse evaluation report {path}: {e}") from e
        if not isinstance(data, dict):
            raise DatasetError(f"Evaluation report {path} is not a JSON object")
        return cls.from_dict(data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "initial_loss", "loss"])
        for idx, init, loss in zip(self.sample_indices, self.initial_loss, self.per_sample_loss):
            writer.writerow([idx, repr(init), repr(loss)])
        return buf.getvalue()

    def write_csv(self, path: pathlib.Path) -> None:
        atomic_write_bytes(pathlib.Path(path), self.to_csv().encode("utf-8"))


# ── latent inversion ───────────────────────────────────────────────

def _per_sample_loss(output: np.ndarray, targets: np.ndarray) -> np.ndarray:
    n = len(targets)
    diff = (output - targets).reshape(n, -1)
    return np.sum(diff * diff, axis=1) / diff.shape[1]


def reconstruct(gen, targets: np.ndarray, config: EvalConfig) -> Reconstruction:
    """Optimize one latent code per target from z = 0; returns codes and per-pixel losses.

    Raises NonFiniteError naming the step when the loss or its gradient
    stops being finite.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim < 2 or len(targets) == 0:
        raise ShapeError(f"reconstruct expects a non-empty [N, ...] batch, got {targets.shape}")
    n = len(targets)
    target_node = constant(targets)
    z = np.zeros((n, gen.latent_dim))
    state = RMSPropState()
    curve: List[Dict[str, float]] = []
    was_training = gen.training
    gen.train(False)
    try:
        with gen.frozen():
            initial = None
            for step in range(config.steps + 1):
                z_node = parameter(z, name="z")
                try:
                    out = gen(z_node)
                    if out.shape != targets.shape:
                        raise ShapeError(f"Generator output {out.shape} does not match targets {targets.shape}")
                    losses = _per_sample_loss(out.value, targets)
                    if not np.all(np.isfinite(losses)):
                        raise NonFiniteError("non-finite reconstruction loss")
                    if initial is None:
                        initial = losses
                    if config.record_every and step % config.record_every == 0:
                        curve.append({"step": step, "mean_loss": float(losses.mean())})
                    if step == config.steps:
                        break
                    objective = reduce_sum(square(out - target_node))
                    backward(objective)
                    z = rmsprop_step(state, {"z": z}, {"z": z_node.grad}, config.lr,
                                     config.rmsprop_alpha, config.rmsprop_eps)["z"]
                except NonFiniteError as e:
                    raise NonFiniteError(f"Reconstruction diverged at step {step}: {e}") from e
    finally:
        gen.train(was_training)
    return Reconstruction(z=z, losses=losses, initial_losses=initial, curve=curve)


def _reconstruct_with_fallback(gen, targets: np.ndarray, config: EvalConfig
                               ) -> Tuple[Reconstruction, List[int], List[int]]:
    """Batched reconstruction, falling back to one sample at a time; returns (result, kept, failed)."""
    try:
        return reconstruct(gen, targets, config), list(range(len(targets))), []
    except NonFiniteError as e:
        logger.warning(f"Batched reconstruction failed ({e}); retrying samples one at a time")
    results, failed = [], []
    for i in range(len(targets)):
        try:
            results.append((i, reconstruct(gen, targets[i:i + 1], config)))
        except NonFiniteError as e:
            logger.warning(f"Sample {i} skipped: {e}")
            failed.append(i)
    if not results:
        raise NonFiniteError("Reconstruction failed for every sample")
    keep = [i for i, _ in results]
    merged = Reconstruction(
        z=np.concatenate([r.z for _, r in results]),
        losses=np.concatenate([r.losses for _, r in results]),
        initial_losses=np.concatenate([r.initial_losses for _, r in results]),
        curve=[],
    )
    return merged, keep, failed


def evaluate(gen, samples: np.ndarray, config: EvalConfig,
             indices: Optional[Sequence[int]] = None, checkpoint_id: str = "") -> EvalReport:
    """Reconstruction report over ``samples`` (labelled by ``indices``)."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) == 0:
        raise DatasetError("Evaluation needs at least one test sample")
    indices = list(range(len(samples))) if indices is None else [int(i) for i in indices]
    if len(indices) != len(samples):
        raise ShapeError(f"{len(indices)} indices for {len(samples)} samples")
    start = time.perf_counter()
    recon, kept, failed_pos = _reconstruct_with_fallback(gen, samples, config)
    losses = [float(v) for v in recon.losses]
    report = EvalReport(
        per_sample_loss=losses,
        sample_indices=[indices[i] for i in kept],
        initial_loss=[float(v) for v in recon.initial_losses],
        mean_loss=float(np.mean(losses)),
        steps=config.steps,
        lr=config.lr,
        checkpoint_id=checkpoint_id,
        wall_time_s=time.perf_counter() - start,
        failed_indices=[indices[i] for i in failed_pos],
        curve=recon.curve,
    )
    logger.info(f"Reconstruction loss {report.mean_loss:.6f} over {len(losses)} samples "
                f"({config.steps} steps, lr {config.lr}, {report.n_failed} failed)")
    return report


def select_subset(n_available: int, n_samples: Optional[int], seed: int) -> np.ndarray:
    """Seeded, sorted subset of positions; everything when n_samples is None or too large."""
    if n_samples is None or n_samples >= n_available:
        return np.arange(n_available)
    rng = np.random.default_rng([seed, 21])
    return np.sort(rng.choice(n_available, size=n_samples, replace=False))


def running_eval(gen, test_subset: np.ndarray, config: EvalConfig,
                 indices: Optional[Sequence[int]] = None, checkpoint_id: str = "") -> EvalReport:
    """Low-budget evaluation on a fixed subset; used to pick the best checkpoint."""
    return evaluate(gen, test_subset, config, indices, checkpoint_id)


def final_eval(gen, test_set: np.ndarray, config: EvalConfig,
               indices: Optional[Sequence[int]] = None, checkpoint_id: str = "") -> EvalReport:
    """High-budget evaluation on the held-out set (optionally a seeded subset of it)."""
    test_set = np.asarray(test_set, dtype=np.float64)
    if len(test_set) == 0:
        raise DatasetError("Final evaluation needs a non-empty test set")
    indices = list(range(len(test_set))) if indices is None else list(indices)
    pick = select_subset(len(test_set), config.n_samples, config.seed)
    return evaluate(gen, test_set[pick], config, [indices[i] for i in pick], checkpoint_id)


# ── comparisons ────────────────────────────────────────────────────

def budget_exceptions(small: EvalReport, large: EvalReport) -> List[int]:
    """Samples whose larger-budget loss exceeds their smaller-budget loss."""
    small_loss = dict(zip(small.sample_indices, small.per_sample_loss))
    return [idx for idx, loss in zip(large.sample_indices, large.per_sample_loss)
            if idx in small_loss and loss > small_loss[idx]]


EXPECTED_ORDER = ("wn", "vanilla", "bn")


def ordering_summary(final_losses: Dict[str, float]) -> Dict[str, Any]:
    """Compare final losses per variant with the expected order wn <= vanilla and wn < bn."""
    wn = final_losses.get("wn")
    vanilla = final_losses.get("vanilla")
    bn = final_losses.get("bn")
    ranked = sorted(final_losses, key=final_losses.get)
    return {
        "losses": dict(final_losses),
        "ranked": ranked,
        "wn_le_vanilla": None if wn is None or vanilla is None else bool(wn <= vanilla),
        "wn_lt_bn": None if wn is None or bn is None else bool(wn < bn),
        "expected_order": list(EXPECTED_ORDER),
        "matches_expected": [v for v in ranked if v in EXPECTED_ORDER] == [
            v for v in EXPECTED_ORDER if v in final_losses],
    }
