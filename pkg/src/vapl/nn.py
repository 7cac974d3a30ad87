"""Toy CNN classifier, losses and Adam, built on the autograd engine.

The classifier is two 3x3 conv blocks (ReLU + 2x2 max-pool) followed by a
single fully-connected head. Prompted and non-prompted models are two
instances of the same architecture, so their parameter name-sets match.
"""

import numpy as np

from .autograd import (DTYPE, AutogradError, Tensor, conv2d, conv2d_array,
                       maxpool2, maxpool2_array)


class ShapeError(Exception):
    """Raised when an input does not fit the layer it is fed to."""


class ModelArch:
    """Architecture description; equality gates checkpoint loading."""

    def __init__(self, in_channels=1, input_hw=32, conv_channels=(8, 16), n_classes=2):
        self.in_channels = int(in_channels)
        self.input_hw = int(input_hw)
        self.conv_channels = tuple(int(c) for c in conv_channels)
        self.n_classes = int(n_classes)
        if self.input_hw % 4:
            raise ShapeError("input size must be divisible by 4 (two 2x2 pools)")

    @property
    def feature_dim(self):
        return self.conv_channels[1] * (self.input_hw // 4) ** 2

    def to_dict(self):
        return {"in_channels": self.in_channels, "input_hw": self.input_hw,
                "conv_channels": list(self.conv_channels), "n_classes": self.n_classes}

    @classmethod
    def from_dict(cls, d):
        return cls(d["in_channels"], d["input_hw"], tuple(d["conv_channels"]), d["n_classes"])

    def __eq__(self, other):
        return isinstance(other, ModelArch) and self.to_dict() == other.to_dict()


def _he_uniform(rng, shape, fan_in):
    lim = np.sqrt(6.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape).astype(DTYPE)


class ClassifierModel:
    """CNN split into feature extractor S(.) and FC head."""

    CONV_WEIGHT_NAMES = ("conv1.w", "conv2.w")

    def __init__(self, arch: ModelArch, seed=0, zero_init=False):
        self.arch = arch
        c1, c2 = arch.conv_channels
        cin, k = arch.in_channels, 3
        rng = np.random.default_rng(seed)
        if zero_init:
            init = lambda shape, fan_in: np.zeros(shape, dtype=DTYPE)
        else:
            init = lambda shape, fan_in: _he_uniform(rng, shape, fan_in)
        self.params = {
            "conv1.w": Tensor(init((c1, cin, k, k), cin * k * k), requires_grad=True, name="conv1.w"),
            "conv1.b": Tensor(np.zeros(c1), requires_grad=True, name="conv1.b"),
            "conv2.w": Tensor(init((c2, c1, k, k), c1 * k * k), requires_grad=True, name="conv2.w"),
            "conv2.b": Tensor(np.zeros(c2), requires_grad=True, name="conv2.b"),
            "fc.w": Tensor(init((arch.feature_dim, arch.n_classes), arch.feature_dim),
                           requires_grad=True, name="fc.w"),
            "fc.b": Tensor(np.zeros(arch.n_classes), requires_grad=True, name="fc.b"),
        }

    def clone(self):
        other = ClassifierModel(self.arch, zero_init=True)
        for name, p in self.params.items():
            other.params[name].data = p.data.copy()
        return other

    def _check_input(self, shape):
        if len(shape) != 4 or shape[1] != self.arch.in_channels \
                or shape[2] != self.arch.input_hw or shape[3] != self.arch.input_hw:
            raise ShapeError(
                f"layer conv1 expects (B,{self.arch.in_channels},"
                f"{self.arch.input_hw},{self.arch.input_hw}), got {tuple(shape)}")

    def features(self, x):
        """Flattened pre-FC activations. Accepts a Tensor (graph) input."""
        if not isinstance(x, Tensor):
            x = Tensor(x)
        self._check_input(x.data.shape)
        p = self.params
        h = maxpool2(conv2d(x, p["conv1.w"], p["conv1.b"]).relu())
        h = maxpool2(conv2d(h, p["conv2.w"], p["conv2.b"]).relu())
        return h.reshape(x.data.shape[0], self.arch.feature_dim)

    def fc_head(self, feats):
        return feats @ self.params["fc.w"] + self.params["fc.b"]

    def forward(self, x):
        """Logits (B, n_classes). Exactly fc_head(features(x))."""
        return self.fc_head(self.features(x))

    # no-graph numpy paths, used for mask scoring and inference
    def features_array(self, x):
        self._check_input(x.shape)
        p = self.params
        h = maxpool2_array(np.maximum(conv2d_array(x, p["conv1.w"].data, p["conv1.b"].data), 0.0))
        h = maxpool2_array(np.maximum(conv2d_array(h, p["conv2.w"].data, p["conv2.b"].data), 0.0))
        return h.reshape(x.shape[0], self.arch.feature_dim)

    def forward_array(self, x):
        return self.features_array(x) @ self.params["fc.w"].data + self.params["fc.b"].data

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()


def softmax(logits):
    """Row-wise stabilized softmax. Works on arrays and (with graph) Tensors."""
    if isinstance(logits, Tensor):
        if not np.all(np.isfinite(logits.data)):
            raise AutogradError("softmax: non-finite logits")
        shift = logits.data.max(axis=-1, keepdims=True)  # constant shift, grad-free
        e = (logits - shift).exp()
        return e * e.sum(axis=-1, keepdims=True) ** -1.0
    logits = np.asarray(logits, dtype=DTYPE)
    if not np.all(np.isfinite(logits)):
        raise AutogradError("softmax: non-finite logits")
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


LOG_EPS = 1e-12  # floor inside log() so an exactly-zero probability stays finite


def cross_entropy(logits_m, logits_o, labels_onehot, reduction="sum"):
    """Joint cross-entropy of the prompted and non-prompted heads.

    -sum_i sum_a y_ia (log p_m + log p_o), optionally divided by the batch
    size (`reduction="mean"`).
    """
    y = labels_onehot.data if isinstance(labels_onehot, Tensor) else np.asarray(labels_onehot, dtype=DTYPE)
    pm = softmax(logits_m)
    po = softmax(logits_o)
    loss = -(Tensor(y) * (pm.clip_min(LOG_EPS).log() + po.clip_min(LOG_EPS).log())).sum()
    if reduction == "mean":
        loss = loss * (1.0 / y.shape[0])
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return loss


class Adam:
    """Standard Adam. Refuses to step on non-finite gradients."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise AutogradError(f"non-finite gradient for {name}; step refused")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[name] / b1t) / (np.sqrt(self.v[name] / b2t) + self.eps)

    def state_dict(self):
        return {"t": self.t,
                "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = {k: np.asarray(v, dtype=DTYPE) for k, v in state["m"].items()}
        self.v = {k: np.asarray(v, dtype=DTYPE) for k, v in state["v"].items()}


def finite_difference(fn, param, coords, eps=1e-3):
    """Central finite differences of scalar fn() w.r.t. param.data at coords."""
    grads = []
    for c in coords:
        orig = param.data[c]
        param.data[c] = orig + eps
        hi = fn()
        param.data[c] = orig - eps
        lo = fn()
        param.data[c] = orig
        grads.append((hi - lo) / (2.0 * eps))
    return np.array(grads)
