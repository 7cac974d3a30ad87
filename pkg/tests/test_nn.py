"""Classifier forward/features against a nested-loop oracle, softmax,
cross-entropy, and Adam."""

import math

import numpy as np
import pytest

from vapl.autograd import AutogradError, Tensor
from vapl.nn import (Adam, ClassifierModel, ModelArch, ShapeError,
                     cross_entropy, softmax)


def oracle_forward(model, x):
    """Straightforward nested-loop re-computation of the network."""
    p = {k: v.data for k, v in model.params.items()}

    def conv(img, w, b):
        cout, cin, kh, kw = w.shape
        _, h, wd = img.shape
        pad = kh // 2
        padded = np.zeros((cin, h + 2 * pad, wd + 2 * pad))
        padded[:, pad:pad + h, pad:pad + wd] = img
        out = np.zeros((cout, h, wd))
        for co in range(cout):
            for i in range(h):
                for j in range(wd):
                    acc = b[co]
                    for ci in range(cin):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += w[co, ci, di, dj] * padded[ci, i + di, j + dj]
                    out[co, i, j] = acc
        return out

    def pool(img):
        c, h, wd = img.shape
        out = np.zeros((c, h // 2, wd // 2))
        for ci in range(c):
            for i in range(h // 2):
                for j in range(wd // 2):
                    out[ci, i, j] = img[ci, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max()
        return out

    logits = []
    feats = []
    for img in x:
        h = pool(np.maximum(conv(img, p["conv1.w"], p["conv1.b"]), 0.0))
        h = pool(np.maximum(conv(h, p["conv2.w"], p["conv2.b"]), 0.0))
        f = h.reshape(-1)
        feats.append(f)
        logits.append(f @ p["fc.w"] + p["fc.b"])
    return np.array(feats), np.array(logits)


@pytest.fixture
def small_model():
    return ClassifierModel(ModelArch(input_hw=8, conv_channels=(3, 4), n_classes=2), seed=42)


def test_zero_weight_model_gives_zero_logits():
    m = ClassifierModel(ModelArch(input_hw=8, conv_channels=(2, 2)), zero_init=True)
    x = np.random.default_rng(0).random((3, 1, 8, 8))
    assert np.array_equal(m.forward_array(x), np.zeros((3, 2)))


def test_forward_matches_nested_loop_oracle(small_model):
    x = np.random.default_rng(1).random((2, 1, 8, 8))
    feats_oracle, logits_oracle = oracle_forward(small_model, x)
    assert np.allclose(small_model.forward_array(x), logits_oracle, atol=1e-12)
    assert np.allclose(small_model.features_array(x), feats_oracle, atol=1e-12)
    assert np.allclose(small_model.forward(Tensor(x)).data, logits_oracle, atol=1e-12)


def test_forward_deterministic_for_identical_rows(small_model):
    img = np.random.default_rng(2).random((1, 8, 8))
    out = small_model.forward_array(np.stack([img, img]))
    assert np.array_equal(out[0], out[1])


def test_fc_of_features_equals_forward_exactly(small_model):
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = Tensor(rng.random((1, 1, 8, 8)))
        via_features = small_model.fc_head(small_model.features(x)).data
        assert np.array_equal(via_features, small_model.forward(x).data)


def test_zero_input_gives_zero_features(small_model):
    # biases are zero-initialized; ReLU keeps everything at zero
    x = np.zeros((1, 1, 8, 8))
    assert np.array_equal(small_model.features_array(x), np.zeros((1, small_model.arch.feature_dim)))


def test_shape_mismatch_names_layer(small_model):
    with pytest.raises(ShapeError, match="conv1"):
        small_model.forward_array(np.zeros((1, 1, 16, 16)))


# ---- softmax ----

def test_softmax_symmetric():
    assert np.allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])


def test_softmax_large_logits_no_overflow():
    out = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(out))
    assert out[0] > 0.999999


def test_softmax_closed_form():
    out = softmax(np.log(np.array([1.0, 2.0, 3.0])))
    assert np.allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-6)


def test_softmax_rows_sum_to_one_up_to_1e4():
    rng = np.random.default_rng(4)
    logits = rng.uniform(-1e4, 1e4, size=(50, 5))
    assert np.allclose(softmax(logits).sum(axis=1), 1.0, atol=1e-6)


def test_softmax_rejects_nan():
    with pytest.raises(AutogradError):
        softmax(np.array([np.nan, 0.0]))


# ---- cross-entropy ----

def test_cross_entropy_zero_when_both_certain():
    # logits strongly favoring the true class on both branches
    logits = np.array([[50.0, -50.0]])
    y = np.array([[1.0, 0.0]])
    assert cross_entropy(Tensor(logits), Tensor(logits), y).item() == pytest.approx(0.0, abs=1e-9)


def test_cross_entropy_uniform_closed_form():
    logits = np.array([[0.0, 0.0]])
    y = np.array([[1.0, 0.0]])
    assert cross_entropy(Tensor(logits), Tensor(logits), y).item() == pytest.approx(2 * math.log(2), abs=1e-9)


def test_cross_entropy_single_branch_reduces_to_standard():
    rng = np.random.default_rng(5)
    logits_m = Tensor(rng.standard_normal((3, 4)))
    y = np.eye(4)[[0, 2, 1]]
    # o-branch pinned at certainty on the true class contributes zero
    logits_o = Tensor(y * 1e4)
    joint = cross_entropy(logits_m, logits_o, y).item()
    p = softmax(logits_m.data)
    standard = -np.sum(y * np.log(p))
    assert joint == pytest.approx(standard, abs=1e-6)


def test_cross_entropy_nonnegative():
    rng = np.random.default_rng(6)
    for _ in range(20):
        lm = Tensor(rng.standard_normal((2, 3)))
        lo = Tensor(rng.standard_normal((2, 3)))
        y = np.eye(3)[rng.integers(0, 3, size=2)]
        assert cross_entropy(lm, lo, y).item() >= 0.0


# ---- Adam ----

def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.ones(4), requires_grad=True)
    p.grad = np.zeros(4)
    opt = Adam({"p": p}, lr=0.1)
    opt.step()
    assert np.array_equal(p.data, np.ones(4))


def test_adam_first_step_magnitude_is_lr():
    # constant gradient 1: first Adam update is lr * m_hat / (sqrt(v_hat) + eps) ~ lr
    p = Tensor(np.zeros(3), requires_grad=True)
    p.grad = np.ones(3)
    opt = Adam({"p": p}, lr=0.01)
    opt.step()
    assert np.allclose(p.data, -0.01, atol=1e-9)


def test_adam_deterministic_trajectories():
    def run():
        rng = np.random.default_rng(9)
        p = Tensor(rng.standard_normal(5), requires_grad=True)
        opt = Adam({"p": p}, lr=0.05)
        for _ in range(5):
            p.grad = 2 * p.data
            opt.step()
        return p.data.copy()

    assert np.array_equal(run(), run())


def test_adam_refuses_nan_gradient():
    p = Tensor(np.ones(2), requires_grad=True)
    p.grad = np.array([np.nan, 0.0])
    opt = Adam({"p": p}, lr=0.1)
    before = p.data.copy()
    with pytest.raises(AutogradError):
        opt.step()
    assert np.array_equal(p.data, before)
