# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file

import numpy as np
import pytest

from checkpoint import (
    MAGIC,
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from netbuild import instantiate
from tensor_autodiff import constant
from utils.error_handling import BuildError, CheckpointError


@pytest.fixture
def dcgan_checkpoint(tiny_dcgan_pair):
    disc_spec, gen_spec = tiny_dcgan_pair
    disc, gen = instantiate(disc_spec, seed=5), instantiate(gen_spec, seed=6)
    optimizer = {"d/0.weight": np.full((4, 3, 4, 4), 0.5), "steps": np.array(12.0)}
    state = {"iteration": 40, "seed": 3, "split": {"seed": 3, "test_size": 8}}
    return Checkpoint.from_networks(disc, gen, optimizer, state), disc, gen


def test_encoding_is_byte_stable(dcgan_checkpoint):
    ckpt, _, _ = dcgan_checkpoint
    data = encode_checkpoint(ckpt)
    assert data.startswith(MAGIC)
    assert encode_checkpoint(decode_checkpoint(data)) == data


def test_decoded_contents(dcgan_checkpoint):
    ckpt, disc, _ = dcgan_checkpoint
    back = decode_checkpoint(encode_checkpoint(ckpt))
    assert back.iteration == 40
    assert back.state["split"] == {"seed": 3, "test_size": 8}
    assert "format_version" in back.state
    assert list(back.tensors) == list(ckpt.tensors)
    for name, value in disc.state_dict().items():
        np.testing.assert_array_equal(back.tensors[f"disc/{name}"], value)
    assert back.optimizer["steps"].shape == ()
    assert back.specs["generator"] == ckpt.specs["generator"]


def test_scalar_tensors_keep_their_shape():
    ckpt = Checkpoint({}, {"gen/scale": np.array(-0.75)}, {"steps": np.array(12.0), "row": np.arange(3.0)})
    back = decode_checkpoint(encode_checkpoint(ckpt))
    assert back.tensors["gen/scale"].shape == () and back.tensors["gen/scale"] == -0.75
    assert back.optimizer["steps"].shape == () and back.optimizer["steps"] == 12.0
    np.testing.assert_array_equal(back.optimizer["row"], np.arange(3.0))


def test_rebuilt_generator_matches(dcgan_checkpoint, tmp_path):
    ckpt, _, gen = dcgan_checkpoint
    path = save_checkpoint(tmp_path / "g.ckpt", ckpt)
    rebuilt = load_checkpoint(path).network("generator")
    z = np.random.default_rng(0).standard_normal((3, gen.latent_dim))
    gen.eval()
    rebuilt.eval()
    np.testing.assert_array_equal(rebuilt(constant(z)).value, gen(constant(z)).value)


def test_missing_role(dcgan_checkpoint):
    _, disc, _ = dcgan_checkpoint
    only_disc = decode_checkpoint(encode_checkpoint(Checkpoint.from_networks(disc, None)))
    assert list(only_disc.specs) == ["discriminator"]
    with pytest.raises(CheckpointError, match="generator"):
        only_disc.network("generator")


def test_tensors_must_fit_the_spec(dcgan_checkpoint):
    ckpt, _, _ = dcgan_checkpoint
    del ckpt.tensors["gen/0.weight"]
    with pytest.raises(BuildError, match="missing"):
        decode_checkpoint(encode_checkpoint(ckpt)).network("generator")


def test_bad_magic(dcgan_checkpoint):
    data = encode_checkpoint(dcgan_checkpoint[0])
    with pytest.raises(CheckpointError, match="magic"):
        decode_checkpoint(b"NOTCKPT" + data[len(MAGIC):])


@pytest.mark.parametrize("keep", [3, 20, -1])
def test_truncated_file(dcgan_checkpoint, keep):
    data = encode_checkpoint(dcgan_checkpoint[0])
    with pytest.raises(CheckpointError, match="truncated"):
        decode_checkpoint(data[:keep])


def test_trailing_bytes(dcgan_checkpoint):
    data = encode_checkpoint(dcgan_checkpoint[0])
    with pytest.raises(CheckpointError, match="trailing"):
        decode_checkpoint(data + b"\0\0")


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_save_leaves_no_temp_files(dcgan_checkpoint, tmp_path):
    save_checkpoint(tmp_path / "a.ckpt", dcgan_checkpoint[0])
    save_checkpoint(tmp_path / "a.ckpt", dcgan_checkpoint[0])
    assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]
