"""Monotone weight net and prompt refinement, checked against a
brute-force aggregation oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vapl.autograd import Tensor
from vapl.nn import ClassifierModel, ModelArch, finite_difference, softmax
from vapl.prompt import AttentionPrompt, apply_mask, normalize_saliency, sample_perturbations
from vapl.refine import (MonotoneWeightNet, check_monotone, confidence, l_agg,
                         l_agg_tensor, refine_prompt, refine_prompt_tensor,
                         weight_of)

ARCH = ModelArch(input_hw=8, conv_channels=(3, 4), n_classes=2)


def brute_force_refine(model, g, image, prompt_d, n_masks, p, class_index, seed):
    """Independent re-implementation: explicit loop over every mask, one
    forward per mask, naive summation. No clipping."""
    masks = sample_perturbations(prompt_d, n_masks, p, seed)
    acc = np.zeros(prompt_d.shape)
    for m in masks:
        masked = image * m[None, :, :]
        logits = model.forward_array(masked[None])[0]
        e = np.exp(logits - logits.max())
        w = e[class_index] / e.sum()
        if g is not None:
            w = g(float(w))
        acc = acc + w * m
    return acc / (n_masks * p)


@pytest.fixture
def model():
    return ClassifierModel(ARCH, seed=11)


@pytest.fixture
def image():
    return np.random.default_rng(4).random((1, 8, 8))


# ---- weight net construction ----

def test_g_zero_is_zero_exactly():
    for phi in ("exp", "tanh1"):
        g = MonotoneWeightNet(phi=phi, seed=1)
        assert weight_of(g, 0.0) == 0.0


def test_g_monotone_on_sampled_pairs():
    for seed in range(5):
        g = MonotoneWeightNet(seed=seed)
        assert check_monotone(g, n_pairs=1000, seed=seed)


def test_g_has_no_bias_and_positive_effective_weights():
    g = MonotoneWeightNet(seed=2)
    # only weight matrices exist; the positivity map keeps them > 0
    assert set(g.params) == {f"g.w{k}" for k in range(g.n_layers)}
    from vapl.refine import _phi_array
    for k in range(g.n_layers):
        assert np.all(_phi_array(g.params[f"g.w{k}"].data, g.phi) > 0.0)


def test_identity_net_is_identity_on_positives():
    g = MonotoneWeightNet.identity()
    for x in (0.0, 0.3, 0.7, 1.0):
        assert weight_of(g, x) == x


def test_endpoint_calibration_at_init():
    for seed in range(4):
        for phi in ("exp", "tanh1"):
            g = MonotoneWeightNet(phi=phi, seed=seed)
            assert g(1.0) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 50), st.floats(0, 1), st.floats(0, 1))
def test_monotone_property(seed, x1, x2):
    g = MonotoneWeightNet(seed=seed)
    lo, hi = sorted((x1, x2))
    assert weight_of(g, lo) <= weight_of(g, hi) + 1e-12


def test_weight_net_gradients():
    g = MonotoneWeightNet(seed=3)
    x = Tensor(np.array([[0.4], [0.9]]))

    def loss():
        return (g.forward_tensor(x) ** 2.0).sum()

    loss_t = loss()
    loss_t.backward()
    rng = np.random.default_rng(0)
    for p in g.params.values():
        coords = [tuple(int(rng.integers(0, s)) for s in p.data.shape) for _ in range(3)]
        fd = finite_difference(lambda: loss().item(), p, coords)
        an = np.array([p.grad[c] for c in coords])
        assert np.allclose(fd, an, rtol=1e-3, atol=1e-6)


# ---- l_agg ----

def test_l_agg_zero_when_calibrated():
    assert l_agg(MonotoneWeightNet.identity()) == 0.0


def test_l_agg_definition():
    g = MonotoneWeightNet.identity()
    g.params["g.w0"].data[...] = np.log(0.4)  # g(1) = 0.4
    assert l_agg(g) == pytest.approx(0.6, abs=1e-12)
    assert l_agg_tensor(g).item() == pytest.approx(0.6, abs=1e-12)


# ---- confidence ----

def test_confidence_uniform_for_zero_model(image):
    m = ClassifierModel(ARCH, zero_init=True)
    mask = np.ones((8, 8))
    assert confidence(m, image, mask, 0) == pytest.approx(0.5)
    assert confidence(m, image, np.zeros((8, 8)), 1) == pytest.approx(0.5)


def test_confidence_matches_composed_primitives(model, image):
    rng = np.random.default_rng(8)
    mask = (rng.random((8, 8)) < 0.5).astype(float)
    expect = softmax(model.forward_array(apply_mask(image, mask)[None]))[0, 1]
    assert confidence(model, image, mask, 1) == pytest.approx(float(expect), abs=1e-15)


def test_confidence_rejects_bad_class(model, image):
    from vapl.prompt import PromptError
    with pytest.raises(PromptError):
        confidence(model, image, np.ones((8, 8)), 5)


# ---- refinement ----

def test_refine_matches_brute_force_oracle(model, image):
    d = AttentionPrompt(np.random.default_rng(5).choice([-1, 0, 1], size=(8, 8)).astype(np.int8))
    g = MonotoneWeightNet(seed=6)
    fast = refine_prompt(model, g, image, d, 200, 0.1, 1, seed=42, clip=False)
    slow = brute_force_refine(model, g, image, d, 200, 0.1, 1, seed=42)
    assert np.max(np.abs(fast - slow)) < 1e-6


def test_passthrough_equals_identity_net_bitwise(model, image):
    d = AttentionPrompt(np.random.default_rng(6).choice([-1, 0, 1], size=(8, 8)).astype(np.int8))
    via_none = refine_prompt(model, None, image, d, 50, 0.1, 0, seed=1)
    via_id = refine_prompt(model, MonotoneWeightNet.identity(), image, d, 50, 0.1, 0, seed=1)
    assert np.array_equal(via_none, via_id)


def test_single_mask_closed_form(model, image):
    d = AttentionPrompt(np.random.default_rng(7).choice([-1, 1], size=(8, 8)).astype(np.int8))
    p = 0.3
    mask = sample_perturbations(d, 1, p, seed=9)[0]
    c = confidence(model, image, mask, 0)
    expect = normalize_saliency(c * mask / p)
    got = refine_prompt(model, None, image, d, 1, p, 0, seed=9)
    assert np.allclose(got, expect, atol=1e-12)


def test_constant_weights_reduce_to_mask_counts(image):
    # zero-weight model gives confidence 0.5 for every mask
    m = ClassifierModel(ARCH, zero_init=True)
    d = AttentionPrompt(np.random.default_rng(8).choice([-1, 0, 1], size=(8, 8)).astype(np.int8))
    n, p = 100, 0.2
    masks = np.stack(sample_perturbations(d, n, p, seed=3))
    expect = 0.5 * masks.sum(axis=0) / (n * p)
    got = refine_prompt(m, None, image, d, n, p, 0, seed=3, clip=False)
    assert np.allclose(got, expect, atol=1e-12)
    # indispensable pixels hit the c/p closed form
    assert np.allclose(got[d.values == 1], 0.5 / p)


def test_indispensable_dominates_undecided(model, image):
    d = AttentionPrompt(np.random.default_rng(9).choice([-1, 1], size=(8, 8)).astype(np.int8))
    g = MonotoneWeightNet(seed=10)
    a = refine_prompt(model, g, image, d, 200, 0.1, 0, seed=5, clip=False)
    if (d.values == 1).any() and (d.values == -1).any():
        assert a[d.values == 1].min() >= a[d.values == -1].max() - 1e-12


def test_all_precluded_gives_zero_map(model, image):
    d = AttentionPrompt(np.zeros((8, 8), dtype=np.int8))
    a = refine_prompt(model, None, image, d, 10, 0.1, 0, seed=0)
    assert np.array_equal(a, np.zeros((8, 8)))


def test_refine_deterministic(model, image):
    d = AttentionPrompt.full_undecided(8, 8)
    g = MonotoneWeightNet(seed=0)
    a = refine_prompt(model, g, image, d, 64, 0.1, 0, seed=11)
    b = refine_prompt(model, g, image, d, 64, 0.1, 0, seed=11)
    assert np.array_equal(a, b)


def test_per_pixel_normalization(model, image):
    d = AttentionPrompt.full_undecided(8, 8)
    a = refine_prompt(model, None, image, d, 50, 0.1, 0, seed=2,
                      per_pixel_norm=True, clip=False)
    masks = np.stack(sample_perturbations(d, 50, 0.1, seed=2))
    counts = masks.sum(axis=0)
    # wherever a pixel never fired the map is zero
    assert np.all(a[counts == 0] == 0.0)
    assert np.all(a[counts > 0] <= 1.0 + 1e-12)


def test_tensor_refine_matches_array_path(model, image):
    d = AttentionPrompt(np.random.default_rng(10).choice([-1, 0, 1], size=(8, 8)).astype(np.int8))
    g = MonotoneWeightNet(seed=12)
    a_fast = refine_prompt(model, g, image, d, 64, 0.1, 1, seed=4)
    a_t = refine_prompt_tensor(model, g, image, d, 64, 0.1, 1, seed=4)
    assert np.allclose(a_fast, a_t.data, atol=1e-12)


def test_tensor_refine_gradient_reaches_g(model, image):
    d = AttentionPrompt.full_undecided(8, 8)
    g = MonotoneWeightNet(seed=13)
    a = refine_prompt_tensor(model, g, image, d, 32, 0.1, 0, seed=6)
    (a * a).sum().backward()
    assert any(p.grad is not None and np.any(p.grad != 0) for p in g.params.values())
