# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""Shared fixtures for the wngan test suite."""

from __future__ import annotations

import contextlib
import pathlib

import numpy as np
import pytest

from config import TrainConfig
from data_sources import Dataset, gaussian_mixture_2d, synthetic_shapes
from netbuild import build_dcgan, build_mlp_gan, instantiate


class IdentityGenerator:
    """G(z) = z: a parameter-free generator whose inversion is a convex quadratic."""

    def __init__(self, latent_dim: int):
        self.latent_dim = latent_dim
        self.training = True

    def __call__(self, z):
        return z

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    @contextlib.contextmanager
    def frozen(self):
        yield self

    def parameters(self):
        return []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def identity_generator():
    return IdentityGenerator


@pytest.fixture
def run_dir(tmp_path) -> pathlib.Path:
    return tmp_path / "run"


@pytest.fixture
def mixture_dataset() -> Dataset:
    return Dataset("gauss2d-mixture", gaussian_mixture_2d(200, seed=0))


@pytest.fixture
def shapes_dataset() -> Dataset:
    return Dataset("synthetic-shapes-8x8", synthetic_shapes(48, seed=0))


@pytest.fixture
def tiny_mlp_config() -> TrainConfig:
    """A few-second training run on 2-D points."""
    return TrainConfig(architecture="mlp", hidden=8, depth=2, latent_dim=4, batch_size=8,
                       total_iters=20, eval_every=10, checkpoint_every=10, log_every=5,
                       n_samples=200, test_size=20, running_eval_samples=10,
                       running_eval_steps=5, sample_grid_count=4, seed=3)


@pytest.fixture
def tiny_dcgan_pair():
    """WN DCGAN pair on 8x8 RGB images with 4 base features."""
    return build_dcgan("wn", 8, 4, 6, 2)


@pytest.fixture
def tiny_mlp_networks():
    disc_spec, gen_spec = build_mlp_gan("wn", 2, 6, 3, 2)
    return instantiate(disc_spec, seed=0), instantiate(gen_spec, seed=1)
