"""Prompt-guided refinement: confidence scoring, the monotone weight net,
and weighted mask aggregation into a saliency map.

The weight net g is a scalar MLP with no bias terms whose raw weights are
pushed through a positivity map, so g is monotone non-decreasing and
g(0) = 0 by construction.
"""

import numpy as np

from .autograd import DTYPE, Tensor
from .nn import softmax
from .prompt import (INDISPENSABLE, AttentionPrompt, PromptError, apply_mask,
                     normalize_saliency, sample_perturbations)

PHI_CHOICES = ("exp", "tanh1")


def _phi_array(w, phi):
    if phi == "exp":
        return np.exp(w)
    return 1.0 + np.tanh(w)  # translated tanh, range (0, 2)


class MonotoneWeightNet:
    """Constrained MLP mapping confidence score -> aggregation weight.

    Hidden layers use ReLU (sigma(0) = 0); the output layer is linear.
    Effective weights are phi(W) > 0 elementwise, so the map is monotone
    non-decreasing and non-negative on [0, inf).
    """

    def __init__(self, layer_sizes=(1, 8, 8, 1), phi="exp", seed=0):
        if phi not in PHI_CHOICES:
            raise ValueError(f"phi must be one of {PHI_CHOICES}, got {phi!r}")
        if layer_sizes[0] != 1 or layer_sizes[-1] != 1:
            raise ValueError("weight net is scalar -> scalar")
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        self.phi = phi
        rng = np.random.default_rng(seed)
        self.params = {}
        for k in range(len(self.layer_sizes) - 1):
            shape = (self.layer_sizes[k], self.layer_sizes[k + 1])
            # raw weights; phi maps them to strictly positive effective weights
            self.params[f"g.w{k}"] = Tensor(rng.normal(0.0, 0.5, size=shape),
                                            requires_grad=True, name=f"g.w{k}")
        self._calibrate_endpoint()

    def _calibrate_endpoint(self):
        """Rescale the output layer so g(1) = 1 at initialization; training
        then only has to keep the endpoint in place, not find it."""
        g1 = float(self.forward_array(np.array([1.0]))[0])
        if g1 <= 0.0:
            return
        last = self.params[f"g.w{self.n_layers - 1}"]
        eff = _phi_array(last.data, self.phi) / g1
        if self.phi == "exp":
            last.data = np.log(eff)
        else:
            last.data = np.arctanh(np.clip(eff - 1.0, -0.999999, 0.999999))

    @classmethod
    def identity(cls):
        """Single zero raw weight, phi=exp: effective weight 1, g(x) = x."""
        net = cls(layer_sizes=(1, 1), phi="exp", seed=0)
        net.params["g.w0"].data[...] = 0.0
        return net

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1

    def forward_tensor(self, x):
        """x: Tensor (B, 1). Differentiable through the raw weights."""
        h = x
        for k in range(self.n_layers):
            w = self.params[f"g.w{k}"]
            eff = w.exp() if self.phi == "exp" else 1.0 + w.tanh()
            h = h @ eff
            if k < self.n_layers - 1:
                h = h.relu()
        return h

    def forward_array(self, x):
        """x: ndarray (B, 1) or (B,). Returns ndarray of matching leading shape."""
        x = np.asarray(x, dtype=DTYPE)
        squeeze = x.ndim == 1
        h = x.reshape(-1, 1)
        for k in range(self.n_layers):
            h = h @ _phi_array(self.params[f"g.w{k}"].data, self.phi)
            if k < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        return h[:, 0] if squeeze else h

    def __call__(self, x):
        return float(self.forward_array(np.array([x]))[0])

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def clone(self):
        other = MonotoneWeightNet(self.layer_sizes, self.phi)
        for k, p in self.params.items():
            other.params[k].data = p.data.copy()
        return other


def weight_of(g, w):
    """Aggregation weight for one confidence score."""
    return g(w)


def confidence(model, image, mask, class_index):
    """softmax_k of the model on the masked image."""
    if class_index < 0 or class_index >= model.arch.n_classes:
        raise PromptError(f"class index {class_index} out of range "
                          f"(model has {model.arch.n_classes} classes)")
    masked = apply_mask(image, mask)
    logits = model.forward_array(masked[None])
    return float(softmax(logits)[0, class_index])


def l_agg(g):
    """Endpoint penalty |g(1) - 1|."""
    return abs(g(1.0) - 1.0)


def l_agg_tensor(g):
    out = g.forward_tensor(Tensor(np.ones((1, 1))))
    return (out - 1.0).abs().sum()


def _score_masks(model, image, masks, class_index, chunk=256):
    """Confidence score per mask; batched numpy forward, no graph."""
    n = masks.shape[0]
    scores = np.empty(n, dtype=DTYPE)
    for lo in range(0, n, chunk):
        batch = image[None] * masks[lo:lo + chunk, None, :, :]
        logits = model.forward_array(batch)
        scores[lo:lo + chunk] = softmax(logits)[:, class_index]
    return scores


def refine_prompt(model, g, image, prompt_d, n_masks, p, class_index, seed,
                  per_pixel_norm=False, clip=True, cell_size=1):
    """Aggregate N perturbation masks, weighted by g(confidence), into A.

    A = (1 / (N p)) sum_i g(w_i) M_i, then scaled into [0, 1] for masking
    (`clip=True`). `g=None` uses the raw confidence scores as weights.
    `per_pixel_norm` replaces the global N*p normalizer with the empirical
    per-pixel mask count.
    """
    image = np.asarray(image, dtype=DTYPE)
    if image.shape[-2:] != prompt_d.shape:
        raise PromptError(f"prompt shape {prompt_d.shape} does not match image {image.shape}")
    masks = np.stack(sample_perturbations(prompt_d, n_masks, p, seed, cell_size=cell_size))
    scores = _score_masks(model, image, masks, class_index)
    weights = scores if g is None else g.forward_array(scores)
    a = np.tensordot(weights, masks, axes=(0, 0))
    if per_pixel_norm:
        counts = masks.sum(axis=0)
        a = np.divide(a, counts, out=np.zeros_like(a), where=counts > 0)
    else:
        a = a / (n_masks * p)
    return normalize_saliency(a) if clip else a


def refine_prompt_tensor(model, g, image, prompt_d, n_masks, p, class_index, seed,
                         clip=True, cell_size=1):
    """Like refine_prompt, but the aggregation is differentiable through g.

    Mask scoring still runs outside the graph (the model is treated as a
    constant explainer here); only the g(w_i) weighting carries gradient.
    """
    image = np.asarray(image, dtype=DTYPE)
    masks = np.stack(sample_perturbations(prompt_d, n_masks, p, seed, cell_size=cell_size))
    scores = _score_masks(model, image, masks, class_index)
    w = g.forward_tensor(Tensor(scores.reshape(-1, 1)))  # (N, 1)
    a = (w.reshape(n_masks, 1, 1) * Tensor(masks)).sum(axis=0) * (1.0 / (n_masks * p))
    if clip:
        m = a.max()
        if m.data > 1.0:
            a = a * m ** -1.0
    return a


def inference_class_index(model, image, prompt_d):
    """Target class for refinement when no label is given: argmax of the
    model on the image masked with undecided-kept binarization."""
    from .prompt import binarize_prompt
    masked = apply_mask(image, binarize_prompt(prompt_d, undecided_as=1))
    return int(np.argmax(model.forward_array(masked[None])[0]))


def check_monotone(g, n_pairs=1000, seed=0):
    """Sampled monotonicity check on [0, 1]; returns True when it holds."""
    rng = np.random.default_rng(seed)
    a = rng.random(n_pairs)
    b = rng.random(n_pairs)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return bool(np.all(g.forward_array(lo) <= g.forward_array(hi) + 0.0))
