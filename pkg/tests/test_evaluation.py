# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file

import contextlib
import json

import numpy as np
import pytest

from config import EvalConfig
from evaluation import (
    EvalReport,
    budget_exceptions,
    evaluate,
    final_eval,
    ordering_summary,
    reconstruct,
    running_eval,
    select_subset,
)
from utils.error_handling import DatasetError, NonFiniteError, ShapeError


class BatchOnlyFailure:
    """Identity generator that blows up on batches larger than ``limit``."""

    def __init__(self, latent_dim, limit=1):
        self.latent_dim = latent_dim
        self.limit = limit
        self.training = True

    def __call__(self, z):
        if z.shape[0] > self.limit:
            raise NonFiniteError("forward produced non-finite values")
        return z

    def train(self, mode=True):
        self.training = mode
        return self

    def frozen(self):
        return contextlib.nullcontext(self)


class FailsAfter:
    """Identity generator whose forward pass fails from call ``n`` on."""

    def __init__(self, latent_dim, n):
        self.latent_dim = latent_dim
        self.n = n
        self.calls = 0
        self.training = True

    def __call__(self, z):
        self.calls += 1
        if self.calls > self.n:
            raise NonFiniteError("forward produced non-finite values")
        return z

    def train(self, mode=True):
        self.training = mode
        return self

    def frozen(self):
        return contextlib.nullcontext(self)


class NaNOutput(FailsAfter):
    def __call__(self, z):
        self.calls += 1
        return z * np.nan if self.calls > self.n else z


def _report(indices, losses):
    return EvalReport(per_sample_loss=list(losses), sample_indices=list(indices),
                      initial_loss=[1.0] * len(losses), mean_loss=float(np.mean(losses)),
                      steps=1, lr=0.01, checkpoint_id="", wall_time_s=0.0)


# ── latent inversion ───────────────────────────────────────────────

def test_identity_generator_converges(identity_generator, rng):
    targets = rng.uniform(0.2, 0.8, size=(5, 3))
    recon = reconstruct(identity_generator(3), targets, EvalConfig(steps=2000, lr=0.01))
    assert np.all(recon.losses < 1e-6)
    assert np.all(np.abs(recon.z - targets) < 1e-3)
    np.testing.assert_allclose(recon.initial_losses, np.mean(targets ** 2, axis=1))


def test_first_step_decreases_every_loss(identity_generator, rng):
    targets = rng.uniform(0.2, 0.8, size=(4, 2))
    recon = reconstruct(identity_generator(2), targets, EvalConfig(steps=1, lr=0.01))
    assert np.all(recon.losses < recon.initial_losses)


def test_loss_is_per_pixel(identity_generator, rng):
    small = rng.uniform(0.2, 0.8, size=(3, 4))
    tiled = np.tile(small, (1, 4))
    cfg = EvalConfig(steps=20, lr=0.01)
    a = reconstruct(identity_generator(4), small, cfg).losses
    b = reconstruct(identity_generator(16), tiled, cfg).losses
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_generator_is_left_as_found(identity_generator):
    gen = identity_generator(2)
    reconstruct(gen, np.full((1, 2), 0.5), EvalConfig(steps=2))
    assert gen.training is True


def test_reconstruct_shape_errors(identity_generator):
    with pytest.raises(ShapeError):
        reconstruct(identity_generator(2), np.zeros((0, 2)), EvalConfig(steps=1))
    with pytest.raises(ShapeError, match="does not match"):
        reconstruct(identity_generator(3), np.zeros((2, 2)), EvalConfig(steps=1))


@pytest.mark.parametrize("gen_cls", [FailsAfter, NaNOutput])
def test_forward_failure_names_the_step(gen_cls):
    gen = gen_cls(2, n=4)
    with pytest.raises(NonFiniteError, match="at step 4"):
        reconstruct(gen, np.full((2, 2), 0.5), EvalConfig(steps=10))
    assert gen.training is True


def test_loss_curve_is_recorded(identity_generator):
    recon = reconstruct(identity_generator(2), np.full((2, 2), 0.5), EvalConfig(steps=10, record_every=5))
    assert [p["step"] for p in recon.curve] == [0, 5, 10]
    assert recon.curve[0]["mean_loss"] == pytest.approx(0.25)


def test_real_generator_reconstruction_is_finite(tiny_mlp_networks, mixture_dataset):
    _, gen = tiny_mlp_networks
    recon = reconstruct(gen, mixture_dataset.take(np.arange(6)), EvalConfig(steps=5))
    assert recon.z.shape == (6, 3)
    assert np.all(np.isfinite(recon.losses))
    assert all(p.requires_grad for p in gen.parameters())


# ── reports ────────────────────────────────────────────────────────

def test_evaluate_is_deterministic(identity_generator, rng):
    samples = rng.uniform(0.0, 1.0, size=(4, 2))
    cfg = EvalConfig(steps=30)
    a = evaluate(identity_generator(2), samples, cfg, indices=[10, 11, 12, 13], checkpoint_id="ck")
    b = evaluate(identity_generator(2), samples, cfg, indices=[10, 11, 12, 13], checkpoint_id="ck")
    assert a.per_sample_loss == b.per_sample_loss
    assert a.sample_indices == [10, 11, 12, 13]
    assert a.mean_loss == pytest.approx(np.mean(a.per_sample_loss))
    assert a.steps == 30 and a.checkpoint_id == "ck"


def test_evaluate_empty_set(identity_generator):
    with pytest.raises(DatasetError):
        evaluate(identity_generator(2), np.zeros((0, 2)), EvalConfig(steps=1))
    with pytest.raises(DatasetError):
        final_eval(identity_generator(2), np.zeros((0, 2)), EvalConfig(steps=1))


def test_evaluate_index_count_mismatch(identity_generator):
    with pytest.raises(ShapeError):
        evaluate(identity_generator(2), np.zeros((2, 2)), EvalConfig(steps=1), indices=[0])


def test_batch_failure_falls_back_to_single_samples(rng):
    samples = rng.uniform(0.2, 0.8, size=(3, 2))
    report = evaluate(BatchOnlyFailure(2), samples, EvalConfig(steps=5))
    assert report.n_failed == 0
    assert report.sample_indices == [0, 1, 2]
    expected = evaluate(BatchOnlyFailure(2, limit=10), samples, EvalConfig(steps=5))
    np.testing.assert_allclose(report.per_sample_loss, expected.per_sample_loss, rtol=1e-12)


def test_every_sample_failing_raises(rng):
    with pytest.raises(NonFiniteError, match="every sample"):
        evaluate(BatchOnlyFailure(2, limit=0), rng.uniform(size=(2, 2)), EvalConfig(steps=1))


def test_report_serialization(identity_generator, tmp_path):
    report = running_eval(identity_generator(2), np.full((2, 2), 0.5), EvalConfig(steps=3), [4, 9], "iter_3")
    report.write_json(tmp_path / "report.json")
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["n_samples"] == 2 and data["n_failed"] == 0
    assert data["sample_indices"] == [4, 9]
    report.write_csv(tmp_path / "losses.csv")
    lines = (tmp_path / "losses.csv").read_text().splitlines()
    assert lines[0] == "index,initial_loss,loss"
    assert lines[1].startswith("4,")


def test_report_reloads_from_json(identity_generator, tmp_path):
    report = running_eval(identity_generator(2), np.full((2, 2), 0.5), EvalConfig(steps=3), [4, 9], "iter_3")
    report.write_json(tmp_path / "report.json")
    assert EvalReport.read_json(tmp_path / "report.json") == report
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(DatasetError, match="JSON object"):
        EvalReport.read_json(tmp_path / "list.json")
    with pytest.raises(DatasetError, match="not found"):
        EvalReport.read_json(tmp_path / "none.json")


def test_final_eval_subset(identity_generator, rng):
    test_set = rng.uniform(size=(10, 2))
    report = final_eval(identity_generator(2), test_set, EvalConfig(steps=2, n_samples=4, seed=1),
                        indices=list(range(100, 110)))
    assert len(report.per_sample_loss) == 4
    assert report.sample_indices == sorted(report.sample_indices)
    assert all(100 <= i < 110 for i in report.sample_indices)


def test_select_subset():
    np.testing.assert_array_equal(select_subset(5, None, 0), np.arange(5))
    np.testing.assert_array_equal(select_subset(5, 9, 0), np.arange(5))
    a = select_subset(100, 10, 3)
    np.testing.assert_array_equal(a, select_subset(100, 10, 3))
    assert len(a) == 10 and np.all(np.diff(a) > 0)


# ── comparisons ────────────────────────────────────────────────────

def test_budget_exceptions():
    small = _report([1, 2, 3], [0.5, 0.4, 0.3])
    large = _report([1, 2, 3], [0.2, 0.45, 0.3])
    assert budget_exceptions(small, large) == [2]


def test_ordering_summary():
    summary = ordering_summary({"wn": 0.01, "vanilla": 0.02, "bn": 0.05})
    assert summary["ranked"] == ["wn", "vanilla", "bn"]
    assert summary["wn_le_vanilla"] is True and summary["wn_lt_bn"] is True
    assert summary["matches_expected"] is True
    partial = ordering_summary({"wn": 0.03, "vanilla": 0.02})
    assert partial["wn_lt_bn"] is None
    assert partial["wn_le_vanilla"] is False
    assert partial["matches_expected"] is False
