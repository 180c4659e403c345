# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file

import numpy as np
import pytest

from constants import VARIANTS
from netbuild import (
    ResBlockSpec,
    VanillaStack,
    build_dcgan,
    build_mlp_gan,
    build_pair,
    build_resnet_gan,
    check_equivalence,
    count_parameters,
    count_weight_layers,
    format_layer_table,
    halving_plan,
    instantiate,
    layer_table,
    mirror_signature,
    random_vanilla_stack,
    spec_from_json,
    spec_to_json,
    unit_from_wn,
    unit_to_wn,
    vanilla_to_wn,
    wn_to_vanilla,
)
from tensor_autodiff import constant
from utils.error_handling import BuildError, TransformError


def _row(name, k=None, s=None, p=None, c=None):
    if k is None:
        return {"name": name}
    return {"name": name, "k": k, "s": s, "p": p, "c": c}


# ── DCGAN layer tables ─────────────────────────────────────────────

def test_wn_dcgan_discriminator_table():
    disc, _ = build_dcgan("wn", 160, 64, 256, 5)
    expected = []
    for c in (64, 128, 256, 512, 1024):
        expected += [_row("SWNConv", 4, 2, 1, c), _row("TPReLU")]
    expected += [_row("AWNConv", 5, 1, 0, 1), _row("Sigmoid")]
    assert layer_table(disc) == expected


def test_wn_dcgan_generator_table():
    _, gen = build_dcgan("wn", 160, 64, 256, 5)
    expected = [_row("SWNConv", 5, 1, 0, 1024), _row("TPReLU")]
    for c in (512, 256, 128, 64):
        expected += [_row("SWNConv", 4, 2, 1, c), _row("TPReLU")]
    expected += [_row("AWNConv", 4, 2, 1, 3), _row("Sigmoid")]
    assert layer_table(gen) == expected


def test_bn_dcgan_batchnorm_placement():
    disc, gen = build_dcgan("bn", 32, 96, 64, 4)
    assert [r["name"] for r in layer_table(disc)] == [
        "Conv", "PReLU",
        "Conv", "BN", "PReLU",
        "Conv", "BN", "PReLU",
        "Conv", "Sigmoid",
    ]
    assert [r["name"] for r in layer_table(gen)] == [
        "Conv", "BN", "PReLU",
        "Conv", "BN", "PReLU",
        "Conv", "BN", "PReLU",
        "Conv", "Sigmoid",
    ]
    assert layer_table(disc)[-2] == _row("Conv", 4, 1, 0, 1)
    assert layer_table(gen)[0] == _row("Conv", 4, 1, 0, 384)


def test_affine_wn_uses_affine_layers_and_prelu():
    disc, gen = build_dcgan("affine_wn", 16, 4, 8, 4)
    names = {r["name"] for r in layer_table(disc) + layer_table(gen)}
    assert "SWNConv" not in names and "TPReLU" not in names
    assert {"AWNConv", "PReLU"} <= names


@pytest.mark.parametrize("variant", VARIANTS)
def test_generator_mirrors_discriminator(variant):
    disc, gen = build_dcgan(variant, 32, 8, 16, 4)
    assert mirror_signature(gen) == mirror_signature(disc)
    assert mirror_signature(disc)[-1][-1] == "latent"


def test_format_layer_table():
    disc, _ = build_dcgan("wn", 160, 64, 256, 5)
    text = format_layer_table(layer_table(disc))
    assert text.splitlines()[1].split() == ["SWNConv", "4,", "2,", "1,", "64"]
    assert "AWNConv" in text and "Sigmoid" in text


def test_halving_plan():
    assert halving_plan(160, 64, 5) == ([64, 128, 256, 512, 1024], 5)
    with pytest.raises(BuildError, match="odd size"):
        halving_plan(20, 4, 4)
    with pytest.raises(BuildError):
        halving_plan(4, 4, 4)


def test_builder_rejects_bad_arguments():
    with pytest.raises(BuildError):
        build_dcgan("layernorm", 32, 4, 8, 4)
    with pytest.raises(BuildError):
        build_dcgan("wn", (32, 16), 4, 8, 4)
    with pytest.raises(BuildError):
        build_pair("transformer", "wn")
    with pytest.raises(BuildError):
        build_mlp_gan("wn", depth=1)


# ── ResNet ─────────────────────────────────────────────────────────

def test_resnet_depth_and_shortcuts():
    disc, gen = build_resnet_gan("wn", (64, 128, 256, 384, 512), 128)
    assert count_weight_layers(disc) == 21
    assert disc.image_size == (160, 160, 3)
    blocks = [b for b in disc.blocks if isinstance(b, ResBlockSpec)]
    assert len(blocks) == 10
    for block in blocks:
        if block.stride == 1:
            assert block.c_in == block.c_out
    assert layer_table(disc)[-2] == _row("AWNConv", 5, 1, 0, 1)
    assert layer_table(gen)[0] == _row("SWNConv", 5, 1, 0, 512)


def test_resnet_networks_run(rng):
    disc_spec, gen_spec = build_resnet_gan("wn", (2, 4), 3, image_size=8, final_kernel=2)
    disc, gen = instantiate(disc_spec, 0), instantiate(gen_spec, 1)
    fake = gen(constant(rng.normal(size=(2, 3))))
    assert fake.shape == (2, 3, 8, 8)
    assert disc(fake).shape == (2, 1)


def test_resnet_identity_blocks_start_as_identity(rng):
    disc_spec, _ = build_resnet_gan("wn", (2, 4), 3, image_size=8, final_kernel=2)
    net = instantiate(disc_spec, 0)
    block = net.layers[1]
    assert block.has_identity_shortcut
    x = rng.normal(size=(2, 2, 4, 4))
    np.testing.assert_allclose(block(constant(x)).value, x, rtol=1e-6)


# ── determinism and counting ───────────────────────────────────────

def test_builders_are_deterministic():
    a = build_dcgan("wn", 32, 8, 16, 4)
    b = build_dcgan("wn", 32, 8, 16, 4)
    assert spec_to_json(a[0]) == spec_to_json(b[0])
    assert spec_to_json(a[1]) == spec_to_json(b[1])


def test_spec_json_round_trip():
    for spec in build_resnet_gan("bn", (4, 8), 6, image_size=8, final_kernel=2):
        assert spec_from_json(spec_to_json(spec)) == spec


def test_malformed_spec_json():
    with pytest.raises(BuildError):
        spec_from_json('{"role": "generator"}')


def test_instantiate_is_deterministic():
    _, gen = build_dcgan("wn", 8, 4, 6, 2)
    a, b = instantiate(gen, seed=5).state_dict(), instantiate(gen, seed=5).state_dict()
    assert list(a) == list(b)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    c = instantiate(gen, seed=6).state_dict()
    assert any(not np.array_equal(a[n], c[n]) for n in a)


@pytest.mark.parametrize("variant", VARIANTS)
def test_parameter_count_matches_instance(variant):
    for spec in build_dcgan(variant, 8, 4, 6, 2) + build_mlp_gan(variant, 2, 5, 3, 3):
        assert count_parameters(spec) == instantiate(spec).num_parameters()
    for spec in build_resnet_gan(variant, (2, 4), 3, image_size=8, final_kernel=2):
        assert count_parameters(spec) == instantiate(spec).num_parameters()


def _wn_minus_vanilla(vanilla) -> int:
    """Parameters the wn variant adds over a vanilla spec of the same shape.

    Biases go, every activation gains a threshold, the output layer trades its
    bias for (gamma, beta) and residual blocks gain their two WNAdd weights.
    """
    weight_layers = [i for i, b in enumerate(vanilla.blocks)
                     if not isinstance(b, ResBlockSpec) and b.kind in ("linear", "conv", "conv_t")]
    delta = 0
    for i, block in enumerate(vanilla.blocks):
        if isinstance(block, ResBlockSpec):
            co = block.c_out
            delta += -2 * co + co + 2 * co - (co if block.c_in != co else 0)
        elif i in weight_layers:
            delta += block.c_out if i == weight_layers[-1] else -block.c_out
        elif block.kind == "prelu":
            delta += block.c_out
    return delta


def test_dcgan_parameter_counts_by_hand():
    disc_v, gen_v = build_dcgan("vanilla", 8, 4, 6, 2)
    disc_w, gen_w = build_dcgan("wn", 8, 4, 6, 2)
    # conv 3->4 k4 + prelu 4 + conv 4->8 k4 + prelu 8 + conv 8->1 k2, with biases
    assert count_parameters(disc_v) == 196 + 4 + 520 + 8 + 33
    # same kernels without biases, tprelu slope + threshold, affine output
    assert count_parameters(disc_w) == 192 + 8 + 512 + 16 + 34
    assert count_parameters(gen_v) == 200 + 8 + 516 + 4 + 195
    assert count_parameters(gen_w) == 192 + 16 + 512 + 8 + 198


@pytest.mark.parametrize("build", [
    lambda v: build_dcgan(v, 8, 4, 6, 2),
    lambda v: build_dcgan(v, 16, 3, 5, 4, channels=1),
    lambda v: build_mlp_gan(v, 2, 5, 3, 3),
    lambda v: build_mlp_gan(v, 3, 7, 4, 2),
    lambda v: build_resnet_gan(v, (2, 4), 3, image_size=8, final_kernel=2),
    lambda v: build_resnet_gan(v, (3, 3, 5), 4, image_size=16, channels=1),
])
def test_wn_parameter_count_closed_form(build):
    for vanilla, wn in zip(build("vanilla"), build("wn")):
        assert count_parameters(wn) == count_parameters(vanilla) + _wn_minus_vanilla(vanilla)
        assert instantiate(wn).num_parameters() == count_parameters(wn)


def test_wn_dcgan_adds_only_output_affine():
    # biases dropped equal thresholds gained, one per activated channel
    for vanilla, wn, extra in zip(build_dcgan("vanilla", 8, 4, 6, 2), build_dcgan("wn", 8, 4, 6, 2), (1, 3)):
        assert count_parameters(wn) - count_parameters(vanilla) == extra


def test_weight_layer_count_dcgan(tiny_dcgan_pair):
    disc, gen = tiny_dcgan_pair
    assert count_weight_layers(disc) == 3
    assert count_weight_layers(gen) == 3


# ── Network ────────────────────────────────────────────────────────

def test_network_counts_forward_calls(tiny_mlp_networks, rng):
    disc, _ = tiny_mlp_networks
    disc(constant(rng.normal(size=(4, 2))))
    disc(constant(rng.normal(size=(7, 2))))
    assert disc.forward_calls == 2
    assert disc.forward_batch_sizes == [4, 7]
    disc.reset_counters()
    assert disc.forward_calls == 0


def test_return_logits_skips_sigmoid(tiny_mlp_networks, rng):
    disc, _ = tiny_mlp_networks
    x = constant(rng.normal(size=(3, 2)))
    logits = disc(x, return_logits=True).value
    np.testing.assert_allclose(disc(x).value, 1.0 / (1.0 + np.exp(-logits)), rtol=1e-12)


def test_state_dict_round_trip(tiny_mlp_networks):
    disc, _ = tiny_mlp_networks
    other = instantiate(disc.spec, seed=99)
    other.load_state_dict(disc.state_dict())
    for name, value in disc.state_dict().items():
        np.testing.assert_array_equal(other.state_dict()[name], value)


def test_load_state_dict_rejects_mismatch(tiny_mlp_networks):
    disc, gen = tiny_mlp_networks
    with pytest.raises(BuildError):
        disc.load_state_dict(gen.state_dict())
    state = disc.state_dict()
    first = next(iter(state))
    state[first] = np.zeros((1, 1))
    with pytest.raises(BuildError, match="shape"):
        disc.load_state_dict(state)


def test_frozen_restores_gradient_tracking(tiny_mlp_networks, rng):
    disc, _ = tiny_mlp_networks
    with disc.frozen():
        assert not any(p.requires_grad for p in disc.parameters())
        y = disc(constant(rng.normal(size=(2, 2))))
        assert not y.requires_grad
    assert all(p.requires_grad for p in disc.parameters())


def test_train_eval_modes(tiny_mlp_networks):
    disc, _ = tiny_mlp_networks
    assert disc.eval().training is False
    assert disc.train().training is True


def test_slope_parameters(tiny_mlp_networks):
    disc, _ = tiny_mlp_networks
    assert len(disc.slope_parameters()) == 1


# ── vanilla <-> weight-normalized transform ───────────────────────

def test_unit_map_example():
    w, alpha, beta, gamma = unit_to_wn(np.array([3.0, 4.0]), 10.0, 2.0, 1.0)
    np.testing.assert_array_equal(w, [3.0, 4.0])
    assert alpha == pytest.approx(-2.0)
    assert beta == pytest.approx(21.0)
    assert gamma == pytest.approx(10.0)
    w, alpha, beta, gamma = unit_from_wn(w, alpha, gamma, beta)
    assert (alpha, beta, gamma) == (pytest.approx(10.0), pytest.approx(1.0), pytest.approx(2.0))


@pytest.mark.parametrize("gamma", [2.0, -0.7])
def test_unit_map_preserves_outputs(gamma, rng):
    w = rng.normal(size=4)
    alpha, beta, slope = 0.3, -1.2, 0.2
    x = rng.normal(size=(200, 4))
    z = x @ w + alpha
    expected = gamma * np.where(z >= 0, z, slope * z) + beta
    _, a2, b2, g2 = unit_to_wn(w, alpha, gamma, beta)
    u = x @ (w / np.linalg.norm(w))
    got = g2 * np.where(u >= a2, u, slope * (u - a2) + a2) + b2
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)


def test_unit_map_zero_norm():
    with pytest.raises(TransformError):
        unit_to_wn(np.zeros(3), 1.0, 1.0, 0.0)
    with pytest.raises(TransformError):
        unit_from_wn(np.zeros(3), 1.0, 1.0, 0.0)


@pytest.mark.parametrize("depth", [1, 2, 3])
@pytest.mark.parametrize("prelu", [False, True])
def test_stack_equivalence(depth, prelu):
    report = check_equivalence(depth, 8, trials=5, seed=depth, n_inputs=200, prelu=prelu)
    assert report.passed, report.to_dict()
    assert report.max_output_discrepancy < 1e-9
    assert report.max_roundtrip_error < 1e-12


def test_transformed_stack_shapes(rng):
    wn = vanilla_to_wn(random_vanilla_stack(2, 5, rng, d_in=3, d_out=2))
    assert len(wn.weights) == 3 and len(wn.alphas) == 2
    assert wn.gamma.shape == (2,) and wn.beta.shape == (2,)
    back = wn_to_vanilla(wn)
    assert [w.shape for w in back.weights] == [(5, 3), (5, 5), (2, 5)]


def test_zero_row_is_rejected(rng):
    stack = random_vanilla_stack(1, 4, rng)
    weights = [w.copy() for w in stack.weights]
    weights[0][2] = 0.0
    with pytest.raises(TransformError, match="zero norm"):
        vanilla_to_wn(VanillaStack(weights, stack.biases, stack.slopes))
