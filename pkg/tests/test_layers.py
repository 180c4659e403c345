# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file

import numpy as np
import pytest

from constants import BN_EPS, PRELU_SLOPE_INIT, WN_EPS
from layers import (
    AvgPool,
    BatchNorm,
    Conv2d,
    PReLU,
    ResBlock,
    TPReLU,
    WNAdd,
    WNConv2d,
    WNConvTranspose2d,
    WNFullyConnected,
    WNLinear,
    affine_wn_forward,
    batchnorm_forward,
    build_layer,
    get_layer_class,
    list_layer_kinds,
    strict_wn_forward,
    trelu_forward,
    wn_add,
    wn_fc_first_layer,
)
from layers.checks import GRADIENT_CASES, check_layer_gradients, run_gradient_suite, select_cases
from layers.weightnorm import normalized_kernel
from netbuild import LayerSpec, instantiate
from tensor_autodiff import constant, reshape
from utils.error_handling import BuildError, ShapeError


def _wn_linear(weight, mode="strict"):
    weight = np.asarray(weight, dtype=np.float64)
    layer = WNLinear(weight.shape[1], weight.shape[0], np.random.default_rng(0), mode=mode)
    layer.weight.value = weight
    return layer


def _channel_batch(rng, n, channels, mean, std):
    """Batch whose per-channel population mean and std are exactly (mean, std)."""
    x = rng.normal(size=(n, channels))
    x = (x - x.mean(axis=0)) / x.std(axis=0)
    return x * std + mean


# ── strict / affine WN linear ──────────────────────────────────────

def test_strict_wn_unit_basis_row():
    y = strict_wn_forward(_wn_linear([[0.0, 1.0, 0.0]]), constant([5.0, 7.0, 9.0]))
    np.testing.assert_allclose(y.value, [7.0], rtol=1e-6)


def test_strict_wn_hand_evaluation():
    y = strict_wn_forward(_wn_linear([[3.0, 4.0]]), constant([1.0, 1.0]))
    np.testing.assert_allclose(y.value, [1.4], rtol=1e-6)


def test_strict_wn_has_no_affine_parameters(rng):
    layer = WNLinear(3, 2, rng)
    assert [name for name, _ in layer.named_parameters()] == ["weight"]


def test_strict_wn_scale_invariance(rng):
    for _ in range(100):
        w = 100.0 * rng.normal(size=(4, 6))
        x = constant(rng.normal(size=(3, 6)))
        base = strict_wn_forward(_wn_linear(w), x).value
        scaled = strict_wn_forward(_wn_linear(10.0 * w), x).value
        np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-12)


def test_strict_wn_rows_have_unit_norm(rng):
    w = rng.normal(size=(5, 7)) * 3.0
    layer = _wn_linear(w)
    effective = strict_wn_forward(layer, constant(np.eye(7))).value.T
    np.testing.assert_allclose(np.linalg.norm(effective, axis=1), np.ones(5), atol=1e-6)


def test_strict_wn_normalizes_standard_normal_inputs():
    rng = np.random.default_rng(0)
    layer = _wn_linear(rng.normal(size=(4, 8)))
    y = strict_wn_forward(layer, constant(rng.normal(size=(100_000, 8)))).value
    assert np.all(np.abs(y.mean(axis=0)) < 0.02)
    assert np.all((y.var(axis=0) > 0.95) & (y.var(axis=0) < 1.05))


def test_strict_wn_shape_error(rng):
    with pytest.raises(ShapeError):
        strict_wn_forward(WNLinear(3, 2, rng), constant(np.ones((2, 4))))


def test_affine_identity_matches_strict(rng):
    w = rng.normal(size=(3, 4))
    x = constant(rng.normal(size=(5, 4)))
    affine = _wn_linear(w, mode="affine")
    np.testing.assert_array_equal(affine_wn_forward(affine, x).value,
                                  strict_wn_forward(_wn_linear(w), x).value)


def test_affine_hand_evaluation():
    layer = _wn_linear([[3.0, 4.0]], mode="affine")
    layer.gamma.value = np.array([2.0])
    layer.beta.value = np.array([1.0])
    np.testing.assert_allclose(affine_wn_forward(layer, constant([1.0, 1.0])).value, [3.8], rtol=1e-6)


def test_affine_zero_gamma_outputs_beta(rng):
    layer = _wn_linear(rng.normal(size=(2, 3)), mode="affine")
    layer.gamma.value = np.zeros(2)
    layer.beta.value = np.array([0.5, -1.5])
    y = affine_wn_forward(layer, constant(rng.normal(size=(4, 3)))).value
    np.testing.assert_array_equal(y, np.tile([0.5, -1.5], (4, 1)))


def test_first_layer_init_range():
    layer = WNLinear(16, 32, np.random.default_rng(0), first=True)
    assert np.abs(layer.weight.value).max() <= 0.01 / np.sqrt(16)
    plain = WNLinear(16, 32, np.random.default_rng(0))
    assert np.abs(plain.weight.value).max() <= 1.0 / np.sqrt(16)


# ── convolutions ───────────────────────────────────────────────────

def test_wn_conv_unit_kernel_value():
    layer = WNConv2d(1, 1, 1, 1, 0, np.random.default_rng(0))
    layer.weight.value = np.full((1, 1, 1, 1), 5.0)
    y = layer(constant(np.full((1, 1, 3, 3), 2.0))).value
    np.testing.assert_allclose(y, np.full((1, 1, 3, 3), 2.0), rtol=1e-6)


def test_wn_conv_stride_correction():
    layer = WNConv2d(1, 1, 2, 1, 0, np.random.default_rng(0))
    layer.weight.value = np.ones((1, 1, 2, 2))          # norm 2
    x = constant(np.ones((1, 1, 4, 4)))
    np.testing.assert_allclose(layer(x).value, 2.0, rtol=1e-6)          # divisor 2
    strided = WNConv2d(1, 1, 2, 2, 0, np.random.default_rng(0))
    strided.weight.value = np.ones((1, 1, 2, 2))
    np.testing.assert_allclose(strided(x).value, 4.0, rtol=1e-6)        # divisor 2 / sqrt(4)


def test_normalized_kernel_divisor():
    w = constant(np.ones((1, 1, 2, 2)))
    np.testing.assert_allclose(normalized_kernel(w, 0, stride=2).value,
                               np.ones((1, 1, 2, 2)) * 2.0 / np.sqrt(4.0 + WN_EPS))


def test_transposed_kernel_is_normalized_per_output_channel(rng):
    layer = WNConvTranspose2d(3, 2, 3, 1, 1, rng)
    sq = (layer.weight.value ** 2).sum(axis=(0, 2, 3))
    w_hat = normalized_kernel(layer.weight, layer.out_axis).value
    np.testing.assert_allclose(np.sqrt((w_hat ** 2).sum(axis=(0, 2, 3))), np.sqrt(sq / (sq + WN_EPS)),
                               rtol=1e-12)
    layer.weight.value = 50.0 * rng.normal(size=layer.weight.shape)
    w_hat = normalized_kernel(layer.weight, layer.out_axis).value
    np.testing.assert_allclose(np.sqrt((w_hat ** 2).sum(axis=(0, 2, 3))), np.ones(2), atol=1e-9)


@pytest.mark.parametrize("cls", [WNConv2d, WNConvTranspose2d])
def test_wn_conv_scale_invariance(cls, rng):
    layer = cls(2, 3, 4, 2, 1, rng)
    layer.weight.value = 100.0 * rng.normal(size=layer.weight.shape)
    x = constant(rng.normal(size=(2, 2, 4, 4)))
    base = layer(x).value
    layer.weight.value = 10.0 * layer.weight.value
    np.testing.assert_allclose(layer(x).value, base, rtol=1e-9, atol=1e-12)


def test_wn_conv_incompatible_dims(rng):
    with pytest.raises(ShapeError, match="output size"):
        WNConv2d(1, 1, 5, 1, 0, rng)(constant(np.ones((1, 1, 3, 3))))


# ── first generator layer ──────────────────────────────────────────

def test_wn_fc_equals_strict_then_reshape(rng):
    layer = WNFullyConnected(5, (3, 2, 2), rng)
    z = constant(rng.normal(size=(4, 5)))
    expected = reshape(strict_wn_forward(layer, z), (4, 3, 2, 2)).value
    np.testing.assert_array_equal(wn_fc_first_layer(layer, z).value, expected)


def test_wn_fc_output_channels_match_generator_spec(tiny_dcgan_pair):
    _, gen_spec = tiny_dcgan_pair
    first = gen_spec.blocks[0]
    gen = instantiate(gen_spec, seed=0)
    y = gen.layers[0](constant(np.zeros((2, gen_spec.latent_dim))))
    assert first.kind == "wn_fc"
    assert y.shape == (2,) + tuple(first.shape)
    assert y.shape[1] == 8


def test_wn_fc_latent_length_mismatch(rng):
    with pytest.raises(ShapeError):
        WNFullyConnected(5, (3, 1, 1), rng)(constant(np.ones((2, 4))))


# ── rectifiers ─────────────────────────────────────────────────────

def _tprelu(alpha, slope):
    layer = TPReLU(len(alpha))
    layer.alpha.value = np.asarray(alpha, dtype=np.float64)
    layer.slope.value = np.asarray(slope, dtype=np.float64)
    return layer


@pytest.mark.parametrize("alpha,slope,x,expected", [
    ([0.0, 0.0], [0.0, 0.0], [-1.0, 2.0], [0.0, 2.0]),
    ([1.0, 1.0], [0.0, 0.0], [0.5, 3.0], [1.0, 3.0]),
    ([-1.0], [0.5], [-3.0], [-2.0]),
])
def test_trelu_examples(alpha, slope, x, expected):
    y = trelu_forward(_tprelu(alpha, slope), constant([x]))
    np.testing.assert_allclose(y.value, [expected], atol=1e-15)


def test_trelu_zero_slope_is_max_with_alpha(rng):
    alpha = rng.normal(size=3)
    x = rng.normal(size=(10, 3, 2, 2))
    y = _tprelu(alpha, np.zeros(3))(constant(x)).value
    np.testing.assert_allclose(y, np.maximum(x, alpha[None, :, None, None]), atol=1e-15)


def test_trelu_is_non_expansive(rng):
    layer = _tprelu(rng.normal(size=4), rng.uniform(0.0, 1.0, size=4))
    x1 = rng.normal(size=(500, 4))
    x2 = rng.normal(size=(500, 4))
    gap = np.abs(layer(constant(x1)).value - layer(constant(x2)).value)
    assert np.all(gap <= np.abs(x1 - x2) + 1e-12)


def test_rectifier_initial_parameters():
    layer = TPReLU(3)
    np.testing.assert_array_equal(layer.alpha.value, np.zeros(3))
    np.testing.assert_array_equal(layer.slope.value, np.full(3, PRELU_SLOPE_INIT))
    prelu = PReLU(2)
    np.testing.assert_allclose(prelu(constant([[-4.0, 4.0]])).value, [[-1.0, 4.0]])


# ── batch normalization ────────────────────────────────────────────

def test_batchnorm_train_statistics(rng):
    x = _channel_batch(rng, 1024, 3, mean=5.0, std=2.0)
    layer = BatchNorm(3)
    y = batchnorm_forward(layer, constant(x), "train").value
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(y.std(axis=0), np.sqrt(4.0 / (4.0 + BN_EPS)), atol=1e-6)


def test_batchnorm_output_has_beta_mean_and_gamma_std(rng):
    x = _channel_batch(rng, 256, 2, mean=-3.0, std=0.5)
    layer = BatchNorm(2)
    layer.gamma.value = np.full(2, 3.0)
    layer.beta.value = np.full(2, 7.0)
    y = layer(constant(x)).value
    np.testing.assert_allclose(y.mean(axis=0), 7.0, atol=1e-6)
    np.testing.assert_allclose(y.std(axis=0), 3.0 * np.sqrt(0.25 / (0.25 + BN_EPS)), atol=1e-6)


def test_batchnorm_image_statistics_per_channel(rng):
    x = rng.normal(loc=2.0, scale=3.0, size=(8, 2, 4, 4))
    y = BatchNorm(2)(constant(x)).value
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
    var = x.var(axis=(0, 2, 3))
    np.testing.assert_allclose(y.std(axis=(0, 2, 3)), np.sqrt(var / (var + BN_EPS)), atol=1e-6)


def test_mean_only_batchnorm_keeps_variance(rng):
    x = _channel_batch(rng, 1024, 2, mean=5.0, std=2.0)
    y = BatchNorm(2, mean_only=True)(constant(x)).value
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-6)
    np.testing.assert_allclose(y.std(axis=0), 2.0, atol=1e-6)


def test_batchnorm_running_statistics(rng):
    x = rng.normal(size=(16, 3))
    layer = BatchNorm(3)
    layer(constant(x))
    np.testing.assert_allclose(layer.buffers["running_mean"], 0.1 * x.mean(axis=0))
    np.testing.assert_allclose(layer.buffers["running_var"], 0.9 + 0.1 * x.var(axis=0, ddof=1))


def test_batchnorm_inference_uses_running_statistics(rng):
    layer = BatchNorm(2)
    layer.buffers["running_mean"] = np.array([1.0, -1.0])
    layer.buffers["running_var"] = np.array([4.0, 9.0])
    layer.eval()
    x = rng.normal(size=(1, 2))
    expected = (x - [1.0, -1.0]) / np.sqrt(np.array([4.0, 9.0]) + BN_EPS)
    np.testing.assert_allclose(layer(constant(x)).value, expected, rtol=1e-12)


def test_batchnorm_rejects_single_sample_in_train_mode():
    with pytest.raises(ShapeError):
        BatchNorm(2)(constant(np.ones((1, 2))))


# ── weight-normalized addition ─────────────────────────────────────

def _wn_add(w1, w2):
    layer = WNAdd(len(w1))
    layer.w1.value = np.asarray(w1, dtype=np.float64)
    layer.w2.value = np.asarray(w2, dtype=np.float64)
    return layer


def test_wn_add_starts_as_shortcut(rng):
    x1, x2 = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(2, 3, 4, 4))
    y = WNAdd(3)(constant(x1), constant(x2)).value
    np.testing.assert_allclose(y, x1, rtol=1e-6)


def test_wn_add_symmetric_weights(rng):
    x1, x2 = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    y = wn_add(_wn_add([1.0, 1.0], [1.0, 1.0]), constant(x1), constant(x2)).value
    np.testing.assert_allclose(y, (x1 + x2) / np.sqrt(2.0 + WN_EPS), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(y, (x1 + x2) / np.sqrt(2.0), rtol=1e-6, atol=1e-12)


def test_wn_add_preserves_unit_variance():
    rng = np.random.default_rng(5)
    w1, w2 = rng.normal(size=4), rng.normal(size=4)
    x1, x2 = rng.normal(size=(100_000, 4)), rng.normal(size=(100_000, 4))
    y = _wn_add(w1, w2)(constant(x1), constant(x2)).value
    assert np.all(np.abs(y.var(axis=0) - 1.0) < 0.1)


def test_wn_add_shape_mismatch():
    with pytest.raises(ShapeError):
        WNAdd(2)(constant(np.ones((1, 2, 2, 2))), constant(np.ones((1, 2, 4, 4))))


# ── residual blocks ────────────────────────────────────────────────

def test_resblock_identity_shortcut(rng):
    block = ResBlock(1, 4, 4, "vanilla", rng)
    assert block.has_identity_shortcut


def test_resblock_shortcut_resamples_and_projects(rng):
    block = ResBlock(2, 2, 4, "bn", rng)
    kinds = [layer.kind for layer in block.shortcut]
    assert kinds == ["avgpool", "conv"]
    assert isinstance(block.shortcut[0], AvgPool) and isinstance(block.shortcut[1], Conv2d)
    assert [layer.kind for layer in block.residue] == ["conv", "batchnorm", "prelu", "conv", "batchnorm"]


def test_wn_resblock_structure(rng):
    block = ResBlock(1, 3, 3, "wn", rng)
    assert [layer.kind for layer in block.residue] == ["wn_conv", "tprelu", "wn_conv"]
    assert all(layer.mode == "strict" for layer in block.residue if layer.kind == "wn_conv")
    assert isinstance(block.combine, WNAdd)


def test_wn_resblock_at_init_passes_input_through(rng):
    block = ResBlock(1, 3, 3, "wn", rng)
    x = rng.normal(size=(2, 3, 4, 4))
    np.testing.assert_allclose(block(constant(x)).value, x, rtol=1e-6)


def test_upsampling_resblock_doubles_resolution(rng):
    block = ResBlock(2, 4, 2, "wn", rng, upsample=True)
    assert block(constant(rng.normal(size=(1, 4, 3, 3)))).shape == (1, 2, 6, 6)


def test_resblock_train_mode_propagates(rng):
    block = ResBlock(1, 2, 2, "bn", rng)
    block.eval()
    assert all(not layer.training for _, layer in block.children())


def test_resblock_rejects_bad_stride(rng):
    with pytest.raises(BuildError):
        ResBlock(3, 2, 2, "wn", rng)


# ── registry ───────────────────────────────────────────────────────

def test_registry_lookup():
    assert get_layer_class("wn_conv") is WNConv2d
    assert "tprelu" in list_layer_kinds()
    with pytest.raises(BuildError, match="Unknown layer kind"):
        get_layer_class("dropout")


def test_build_layer_from_spec(rng):
    layer = build_layer(LayerSpec("wn_linear", 3, 2, mode="affine"), rng)
    assert isinstance(layer, WNLinear) and layer.mode == "affine"
    assert layer.display_name == "AWNLinear"


# ── gradient suite ─────────────────────────────────────────────────

def test_select_cases():
    assert select_cases("wn_conv_t") == ["wn_conv_t", "wn_conv_t_affine"]
    assert "wn_conv_affine" in select_cases("wn_conv")
    assert select_cases("sigmoid") == ["sigmoid"]
    assert select_cases("nope") == []
    with pytest.raises(ValueError):
        run_gradient_suite(layer="nope")


@pytest.mark.parametrize("case", sorted(GRADIENT_CASES))
def test_layer_gradients_match_finite_differences(case):
    rng = np.random.default_rng(11)
    for trial in range(2):
        layer, inputs = GRADIENT_CASES[case](rng)
        reports = check_layer_gradients(layer, inputs, rng, case=case, trial=trial)
        failed = [r for r in reports if not r.passed]
        assert not failed, failed


def test_gradient_suite_covers_every_parameter():
    reports = run_gradient_suite(trials=1, layer="tprelu", seed=0)
    assert {r.target for r in reports} == {"input", "alpha", "slope"}
    reports = run_gradient_suite(trials=1, layer="wn_add", seed=0)
    assert {r.target for r in reports} == {"input", "input1", "shortcut_weight", "residue_weight"}


def test_gradient_check_catches_a_wrong_second_input_gradient(monkeypatch):
    layer, inputs = GRADIENT_CASES["wn_add"](np.random.default_rng(3))
    reports = check_layer_gradients(layer, inputs, np.random.default_rng(4))
    assert all(r.passed for r in reports if r.target == "input1")
    # a constant copy of x2 doubles the numeric gradient but not the autodiff one
    original = WNAdd.forward
    monkeypatch.setattr(WNAdd, "forward", lambda self, x1, x2=None: original(self, x1, x2 + constant(x2.value)))
    reports = check_layer_gradients(layer, inputs, np.random.default_rng(4))
    assert not next(r for r in reports if r.target == "input1").passed
    assert next(r for r in reports if r.target == "input").passed


@pytest.mark.slow
def test_full_gradient_suite():
    reports = run_gradient_suite(trials=100, seed=0)
    assert all(r.passed for r in reports)
    assert max(r.max_rel_error for r in reports) < 1e-4
