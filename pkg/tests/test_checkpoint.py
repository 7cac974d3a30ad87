"""Checkpoint serialization: exact round-trips and mismatch rejection."""

import numpy as np
import pytest

from vapl.checkpoint import (CheckpointError, checkpoint_hash, load_checkpoint,
                             save_checkpoint)
from vapl.cotrain import CoTrainState, TrainingConfig, _baseline_step, predict
from vapl.data import SyntheticSpec, generate_dataset
from vapl.nn import ModelArch

ARCH = ModelArch(in_channels=1, input_hw=16, conv_channels=(3, 4), n_classes=2)
SPEC = SyntheticSpec(h=16, w=16, n_train=8, n_val=4, n_test=8,
                     radius_range=(2, 3), artifact_size=3, seed=1)


@pytest.fixture
def state():
    st = CoTrainState(ARCH, TrainingConfig(seed=5), config_echo={"train.seed": 5})
    # take a few optimizer steps so Adam state is non-trivial
    samples = generate_dataset(SPEC)["train"]
    for _ in range(3):
        _baseline_step(st, samples)
    return st


def all_tensors(st):
    out = {}
    for tag, model in (("f_m", st.f_m), ("f_o", st.f_o)):
        for name, p in model.params.items():
            out[f"{tag}.{name}"] = p.data
    for k, p in st.g.params.items():
        out[f"g.{k}"] = p.data
    for tag, opt in (("f_m", st.opt_m), ("f_o", st.opt_o), ("g", st.opt_g)):
        for name in opt.params:
            out[f"{tag}.m.{name}"] = opt.m[name]
            out[f"{tag}.v.{name}"] = opt.v[name]
    return out


def test_roundtrip_bitwise(tmp_path, state):
    path = tmp_path / "c.vapl"
    save_checkpoint(path, state)
    back = load_checkpoint(path, expect_arch=ARCH)
    a, b = all_tensors(state), all_tensors(back)
    assert set(a) == set(b)
    for k in a:
        assert np.array_equal(a[k], b[k]), k
    assert back.step == state.step
    assert back.opt_o.t == state.opt_o.t
    assert back.tcfg == state.tcfg
    assert back.config_echo == {"train.seed": 5}


def test_roundtrip_preserves_predictions(tmp_path, state):
    path = tmp_path / "c.vapl"
    save_checkpoint(path, state)
    back = load_checkpoint(path)
    s = generate_dataset(SPEC)["test"][0]
    a = predict(state, s.image, s.prompt, seed=2)
    b = predict(back, s.image, s.prompt, seed=2)
    assert a["class_index"] == b["class_index"]
    assert np.array_equal(a["probabilities"], b["probabilities"])


def test_save_is_deterministic(tmp_path, state):
    save_checkpoint(tmp_path / "a.vapl", state)
    save_checkpoint(tmp_path / "b.vapl", state)
    assert checkpoint_hash(tmp_path / "a.vapl") == checkpoint_hash(tmp_path / "b.vapl")


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.vapl"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_rejects_corrupt_header(tmp_path, state):
    path = tmp_path / "c.vapl"
    save_checkpoint(path, state)
    raw = bytearray(path.read_bytes())
    raw[30] ^= 0xFF  # inside the JSON header
    (tmp_path / "bad.vapl").write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.vapl")


def test_rejects_arch_mismatch(tmp_path, state):
    path = tmp_path / "c.vapl"
    save_checkpoint(path, state)
    other = ModelArch(in_channels=1, input_hw=16, conv_channels=(8, 16), n_classes=2)
    with pytest.raises(CheckpointError, match="architecture mismatch"):
        load_checkpoint(path, expect_arch=other)
