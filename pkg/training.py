#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
GAN training loop.

Each iteration does one discriminator update followed by one generator
update, both with RMSProp and the standard non-saturating GAN loss on
logits:

    loss_d = BCE(D(x), 1) + BCE(D(G(z)), 0)    real and fake as separate batches
    loss_g = BCE(D(G(z')), 1)                  fresh codes z'

After every update all PReLU/TPReLU slopes are clipped to [0, 1]. Every
eval_every iterations a running reconstruction loss is measured on a fixed
test subset; the best one is kept as checkpoints/best.ckpt and a sample
grid is drawn from one fixed latent batch.

All randomness after initialization comes from a counter-based generator
keyed by (seed, stream) with the iteration as counter, so a resumed run
reproduces the same metrics as an uninterrupted one.

Usage:
    result = train_loop(cfg, load_dataset("gauss2d-mixture"), pathlib.Path("runs/wn"))
    print(result.best_loss, result.best_checkpoint)
"""

from __future__ import annotations

import csv
import dataclasses
import math
import pathlib
import queue
import threading
import time
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from config import EvalConfig, TrainConfig
from data_sources import Dataset, DatasetSplit
from evaluation import running_eval
from image_io import write_sample_grid
from netbuild import (
    Network,
    NetworkSpec,
    build_dcgan,
    build_mlp_gan,
    build_resnet_gan,
    spec_to_json,
)
from optim import RMSProp, RMSPropState, clip_slopes, rmsprop_step
from tensor_autodiff import backward, bce_with_logits, constant
from utils.error_handling import (
    CheckpointError,
    ConfigError,
    NonFiniteError,
    ProgressReporter,
    ShapeError,
    get_logger,
)
from utils.structure import (
    best_checkpoint_path,
    create_run_dir,
    latest_checkpoint_path,
    metrics_path,
    periodic_checkpoint_path,
    sample_grid_path,
    save_run_info,
)

__all__ = [
    "RMSProp",
    "RMSPropState",
    "rmsprop_step",
    "clip_slopes",
    "CounterRNG",
    "BatchPrefetcher",
    "MetricsLogger",
    "StepMetrics",
    "TrainResult",
    "GANTrainer",
    "build_specs",
    "train_step",
    "train_loop",
]

logger = get_logger("training")

# Counter-RNG streams
STREAM_INIT_D = 1
STREAM_INIT_G = 2
STREAM_BATCH = 3
STREAM_LATENT_D = 4
STREAM_LATENT_G = 5
STREAM_EVAL_SUBSET = 6
STREAM_GRID = 7

METRICS_HEADER = ("iter", "loss_d", "loss_g", "running_rec_loss", "wall_ms")


class CounterRNG:
    """Philox generators keyed by (seed, stream); the iteration is the counter.

    generator(s, i) depends only on (seed, s, i), never on what was drawn
    before, so any iteration can be replayed in isolation.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)

    def generator(self, stream: int, iteration: int = 0) -> np.random.Generator:
        key = (int(stream) << 64) | self.seed
        # iteration sits in the third counter word so one draw never runs into the next iteration
        bit_gen = np.random.Philox(key=key, counter=int(iteration) << 128)
        return np.random.Generator(bit_gen)

    def latent(self, stream: int, iteration: int, n: int, latent_dim: int) -> np.ndarray:
        return self.generator(stream, iteration).standard_normal((n, latent_dim))


# ── data feed ──────────────────────────────────────────────────────

class BatchPrefetcher:
    """Produce read-only training batches on a worker thread through a bounded queue."""

    def __init__(self, dataset: Dataset, train_indices: np.ndarray, batch_size: int, rng: CounterRNG,
                 start: int, stop: int, depth: int = 4):
        if len(train_indices) == 0:
            raise ShapeError("No training samples to draw batches from")
        self.dataset = dataset
        self.train_indices = np.asarray(train_indices)
        self.batch_size = batch_size
        self.rng = rng
        self.start, self.stop = start, stop
        self._queue: "queue.Queue[Tuple[Optional[int], Any]]" = queue.Queue(maxsize=max(1, depth))
        self._halt = threading.Event()
        self._thread = threading.Thread(target=self._produce, name="batch-prefetch", daemon=True)

    def batch_for(self, iteration: int) -> np.ndarray:
        pick = self.rng.generator(STREAM_BATCH, iteration).integers(0, len(self.train_indices),
                                                                    size=self.batch_size)
        return self.dataset.take(self.train_indices[pick])

    def _put(self, item) -> bool:
        while not self._halt.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for it in range(self.start, self.stop + 1):
                if not self._put((it, self.batch_for(it))):
                    return
        except Exception as e:          # handed to the consumer
            self._put((None, e))

    def __enter__(self) -> "BatchPrefetcher":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._halt.set()
        self._thread.join(timeout=5.0)

    def __iter__(self) -> Iterator[Tuple[int, np.ndarray]]:
        for _ in range(self.start, self.stop + 1):
            it, item = self._queue.get()
            if it is None:
                raise item
            yield it, item


class MetricsLogger:
    """Append-only CSV log; the header is written once, when the file is new."""

    def __init__(self, path: pathlib.Path):
        self.path = pathlib.Path(path)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(METRICS_HEADER)

    def append(self, iteration: int, loss_d: float, loss_g: float,
               running_rec_loss: Optional[float], wall_ms: float) -> None:
        row = [iteration, repr(float(loss_d)), repr(float(loss_g)),
               "" if running_rec_loss is None else repr(float(running_rec_loss)), f"{wall_ms:.1f}"]
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow(row)


def read_metrics(path: pathlib.Path) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ── networks ───────────────────────────────────────────────────────

def build_specs(cfg: TrainConfig, sample_shape: Tuple[int, ...]) -> Tuple[NetworkSpec, NetworkSpec]:
    """Discriminator/generator specs for the config's architecture and a dataset's sample shape."""
    if cfg.architecture == "mlp":
        if len(sample_shape) != 1:
            raise ConfigError(f"mlp architecture needs vector samples, dataset has shape {sample_shape}")
        return build_mlp_gan(cfg.variant, sample_shape[0], cfg.hidden, cfg.latent_dim, cfg.depth)
    if len(sample_shape) != 3:
        raise ConfigError(f"{cfg.architecture} architecture needs [C, H, W] images, "
                          f"dataset has shape {sample_shape}")
    c, h, w = sample_shape
    if cfg.image_size is not None and cfg.image_size != w:
        raise ConfigError(f"config image_size {cfg.image_size} does not match dataset images {w}x{h}")
    if cfg.architecture == "dcgan":
        return build_dcgan(cfg.variant, (w, h, c), cfg.base_features, cfg.latent_dim,
                           cfg.min_spatial, channels=c)
    return build_resnet_gan(cfg.variant, cfg.feature_plan, cfg.latent_dim, image_size=w, channels=c)


@dataclasses.dataclass
class StepMetrics:
    iteration: int
    loss_d: float
    loss_g: float


def train_step(disc: Network, gen: Network, opt_d: RMSProp, opt_g: RMSProp, real_batch: np.ndarray,
               cfg: TrainConfig, rng: CounterRNG, iteration: int) -> StepMetrics:
    """One discriminator update then one generator update."""
    n = len(real_batch)
    if n != cfg.batch_size:
        raise ShapeError(f"Real batch has {n} samples, config batch_size is {cfg.batch_size}")
    try:
        with gen.frozen():
            fake = gen(constant(rng.latent(STREAM_LATENT_D, iteration, n, cfg.latent_dim))).value
        opt_d.zero_grad()
        # real and fake go through D as two batches so batch statistics never mix
        d_real = disc(constant(real_batch), return_logits=True)
        d_fake = disc(constant(fake), return_logits=True)
        loss_d = bce_with_logits(d_real, 1.0) + bce_with_logits(d_fake, 0.0)
        backward(loss_d)
        opt_d.step()

        opt_g.zero_grad()
        with disc.frozen():
            fake_g = gen(constant(rng.latent(STREAM_LATENT_G, iteration, n, cfg.latent_dim)))
            loss_g = bce_with_logits(disc(fake_g, return_logits=True), 1.0)
        backward(loss_g)
        opt_g.step()
    except NonFiniteError as e:
        raise NonFiniteError(f"Iteration {iteration}: {e}") from e
    return StepMetrics(iteration, loss_d.item(), loss_g.item())


# ── loop ───────────────────────────────────────────────────────────

@dataclasses.dataclass
class TrainResult:
    run_dir: pathlib.Path
    iterations: int
    baseline_loss: float
    best_loss: Optional[float]
    best_iteration: Optional[int]
    running_losses: List[Tuple[int, float]]
    best_checkpoint: Optional[pathlib.Path]
    latest_checkpoint: pathlib.Path
    metrics_path: pathlib.Path

    @property
    def final_running_loss(self) -> Optional[float]:
        return self.running_losses[-1][1] if self.running_losses else None

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        for key in ("run_dir", "best_checkpoint", "latest_checkpoint", "metrics_path"):
            data[key] = None if data[key] is None else str(data[key])
        data["running_losses"] = [list(p) for p in self.running_losses]
        data["final_running_loss"] = self.final_running_loss
        return data


class GANTrainer:
    """Networks, optimizers and bookkeeping for one training run."""

    def __init__(self, cfg: TrainConfig, dataset: Dataset, split: Optional[DatasetSplit] = None):
        self.cfg = cfg
        self.dataset = dataset
        self.split = split or dataset.split(cfg.test_size, cfg.seed)
        self.rng = CounterRNG(cfg.seed)
        disc_spec, gen_spec = build_specs(cfg, dataset.sample_shape)
        self.disc = Network(disc_spec, self.rng.generator(STREAM_INIT_D))
        self.gen = Network(gen_spec, self.rng.generator(STREAM_INIT_G))
        hooks = [clip_slopes]
        self.opt_d = RMSProp(self.disc.named_parameters(), cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps, hooks)
        self.opt_g = RMSProp(self.gen.named_parameters(), cfg.lr, cfg.rmsprop_alpha, cfg.rmsprop_eps, hooks)
        self.iteration = 0
        self.baseline_loss: Optional[float] = None
        self.best_loss: Optional[float] = None
        self.best_iteration: Optional[int] = None
        self.running_losses: List[Tuple[int, float]] = []

        test = self.split.test_indices
        k = min(cfg.running_eval_samples, len(test))
        pick = self.rng.generator(STREAM_EVAL_SUBSET).choice(len(test), size=k, replace=False)
        self.eval_indices = np.sort(test[pick])
        self.grid_codes = self.rng.latent(STREAM_GRID, 0, cfg.sample_grid_count, cfg.latent_dim)
        self.eval_config = EvalConfig.running(cfg)

    # ── evaluation helpers ──

    def running_loss(self) -> float:
        report = running_eval(self.gen, self.dataset.take(self.eval_indices), self.eval_config,
                              self.eval_indices, checkpoint_id=f"iter_{self.iteration}")
        return report.mean_loss

    def sample_grid(self) -> np.ndarray:
        was_training = self.gen.training
        self.gen.eval()
        try:
            with self.gen.frozen():
                return self.gen(constant(self.grid_codes)).value
        finally:
            self.gen.train(was_training)

    # ── checkpoints ──

    def checkpoint(self) -> Checkpoint:
        optimizer = {f"disc/{k}": v for k, v in self.opt_d.state_dict().items()}
        optimizer.update({f"gen/{k}": v for k, v in self.opt_g.state_dict().items()})
        state = {
            "iteration": self.iteration,
            "seed": self.cfg.seed,
            "rng": {"kind": "philox", "seed": self.cfg.seed, "counter": "iteration"},
            "dataset": self.dataset.name,
            "split": self.split.to_dict(),
            "config": self.cfg.to_dict(),
            "baseline_loss": self.baseline_loss,
            "best_loss": self.best_loss,
            "best_iteration": self.best_iteration,
            "running_losses": [list(p) for p in self.running_losses],
            "optimizer_steps": {"disc": self.opt_d.state.steps, "gen": self.opt_g.state.steps},
        }
        return Checkpoint.from_networks(self.disc, self.gen, optimizer, state)

    def restore(self, ckpt: Checkpoint) -> None:
        for role, net in (("discriminator", self.disc), ("generator", self.gen)):
            stored = ckpt.specs.get(role)
            if stored is None or spec_to_json(stored) != spec_to_json(net.spec):
                raise CheckpointError(f"Checkpoint {role} does not match the configured network")
            net.load_state_dict(ckpt.network_state(role))
        state = ckpt.state
        steps = state.get("optimizer_steps", {})
        for prefix, opt in (("disc/", self.opt_d), ("gen/", self.opt_g)):
            avg = {k[len(prefix):]: v for k, v in ckpt.optimizer.items() if k.startswith(prefix)}
            opt.load_state_dict(avg, steps.get(prefix[:-1], 0))
        self.iteration = int(state["iteration"])
        self.baseline_loss = state.get("baseline_loss")
        self.best_loss = state.get("best_loss")
        self.best_iteration = state.get("best_iteration")
        self.running_losses = [(int(i), float(v)) for i, v in state.get("running_losses", [])]

    # ── main loop ──

    def run(self, run_dir: pathlib.Path) -> TrainResult:
        cfg = self.cfg
        run_dir = create_run_dir(pathlib.Path(run_dir))
        metrics = MetricsLogger(metrics_path(run_dir))
        save_run_info(run_dir, {"config": cfg.to_dict(), "dataset": self.dataset.name,
                                "split": self.split.to_dict(), "variant": cfg.variant})
        last_good: Optional[pathlib.Path] = None

        def save(path: pathlib.Path) -> pathlib.Path:
            nonlocal last_good
            try:
                save_checkpoint(path, self.checkpoint())
            except CheckpointError as e:
                raise CheckpointError(f"{e}; last good checkpoint: {last_good}") from e
            last_good = path
            return path

        if self.baseline_loss is None:
            self.baseline_loss = self.running_loss()
            logger.info(f"Iteration 0 running reconstruction loss {self.baseline_loss:.6f}")

        start = self.iteration + 1
        progress = ProgressReporter(cfg.total_iters - self.iteration, f"Training {cfg.variant}",
                                    report_every=cfg.log_every)
        t0 = time.perf_counter()
        with BatchPrefetcher(self.dataset, self.split.train_indices, cfg.batch_size, self.rng,
                             start, cfg.total_iters, cfg.prefetch) as batches:
            for it, real in batches:
                step = train_step(self.disc, self.gen, self.opt_d, self.opt_g, real, cfg, self.rng, it)
                self.iteration = it
                running = None
                if it % cfg.eval_every == 0:
                    running = self._evaluate(run_dir, save)
                if running is not None or it % cfg.log_every == 0 or it == cfg.total_iters:
                    try:
                        metrics.append(it, step.loss_d, step.loss_g, running,
                                       (time.perf_counter() - t0) * 1000.0)
                    except OSError as e:
                        raise CheckpointError(f"Could not append to {metrics.path}: {e}; "
                                              f"last good checkpoint: {last_good}") from e
                if it % cfg.checkpoint_every == 0:
                    save(periodic_checkpoint_path(run_dir, it))
                progress.update(f"iteration {it}, loss_d {step.loss_d:.4f}, loss_g {step.loss_g:.4f}")
        latest = save(latest_checkpoint_path(run_dir))
        progress.complete()

        best = best_checkpoint_path(run_dir)
        return TrainResult(
            run_dir=run_dir,
            iterations=self.iteration,
            baseline_loss=self.baseline_loss,
            best_loss=self.best_loss,
            best_iteration=self.best_iteration,
            running_losses=list(self.running_losses),
            best_checkpoint=best if best.exists() else None,
            latest_checkpoint=latest,
            metrics_path=metrics.path,
        )

    def _evaluate(self, run_dir: pathlib.Path, save) -> float:
        loss = self.running_loss()
        self.running_losses.append((self.iteration, loss))
        window = [v for _, v in self.running_losses[-self.cfg.stability_window:]]
        stability = float(np.std(window)) if len(window) > 1 else math.nan
        logger.info(f"Iteration {self.iteration}: running reconstruction loss {loss:.6f} "
                    f"(window std {stability:.2e})")
        if self.best_loss is None or loss < self.best_loss:
            self.best_loss, self.best_iteration = loss, self.iteration
            save(best_checkpoint_path(run_dir))
        write_sample_grid(sample_grid_path(run_dir, self.iteration), self.sample_grid())
        return loss


def train_loop(cfg: TrainConfig, dataset: Dataset, run_dir: pathlib.Path,
               resume_from: Optional[pathlib.Path] = None) -> TrainResult:
    """Train a GAN pair on ``dataset``, writing metrics, checkpoints and sample grids to run_dir."""
    trainer = GANTrainer(cfg, dataset)
    if resume_from is not None:
        trainer.restore(load_checkpoint(resume_from))
        logger.info(f"Resumed from {resume_from} at iteration {trainer.iteration}")
    if trainer.iteration >= cfg.total_iters:
        logger.warning(f"Nothing to do: checkpoint is at iteration {trainer.iteration} "
                       f"of {cfg.total_iters}")
    return trainer.run(run_dir)
