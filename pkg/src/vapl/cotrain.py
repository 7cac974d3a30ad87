"""Co-training objective and the alternating optimization loop.

Two classifiers are trained jointly on prompted samples: f_m sees the
image masked by the refined prompt, f_o sees the raw image. They are tied
by a parameter-sharing penalty on conv weights and a co-activation penalty
on pre-FC features. The weight net g is updated in its own phase, with
the classifiers frozen, through the differentiable aggregation path.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import AutogradError, Tensor, stack
from .nn import Adam, ClassifierModel, ModelArch, cross_entropy, softmax
from .prompt import PromptError, apply_mask, binarize_prompt
from .refine import (MonotoneWeightNet, inference_class_index, l_agg,
                     l_agg_tensor, refine_prompt, refine_prompt_tensor)


class TrainingError(Exception):
    pass


@dataclass
class TrainingConfig:
    lambda1: float = 0.002
    lambda2: float = 0.001
    lambda3: float = 10.0
    lr: float = 0.002
    outer_iters: int = 10
    f_passes: int = 2
    g_passes: int = 2
    batch_size: int = 16
    seed: int = 0
    warmup_iters: int = 1
    patience: int = 10
    skip_refine: bool = False
    baseline_only: bool = False
    n_masks: int = 16
    p: float = 0.1
    phi: str = "exp"
    refine_seed: int = 0
    per_pixel_norm: bool = False
    passthrough: bool = False
    grid: int = 0

    def __post_init__(self):
        if min(self.outer_iters, self.f_passes, self.g_passes, self.batch_size) < 1:
            raise TrainingError("loop counts and batch size must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise TrainingError("lambda weights must be >= 0")
        if not 0.0 < self.p < 1.0:
            raise TrainingError("p must be in (0, 1)")

    @classmethod
    def from_dict(cls, cfg):
        return cls(
            lambda1=cfg["train.lambda1"], lambda2=cfg["train.lambda2"],
            lambda3=cfg["train.lambda3"], lr=cfg["train.lr"],
            outer_iters=cfg["train.outer_iters"], f_passes=cfg["train.f_passes"],
            g_passes=cfg["train.g_passes"], batch_size=cfg["train.batch_size"],
            seed=cfg["train.seed"], warmup_iters=cfg["train.warmup_iters"],
            patience=cfg["train.patience"], skip_refine=cfg["train.skip_refine"],
            baseline_only=cfg["train.baseline_only"],
            n_masks=cfg["refine.n_masks"], p=cfg["refine.p"], phi=cfg["refine.phi"],
            refine_seed=cfg["refine.seed"], per_pixel_norm=cfg["refine.per_pixel_norm"],
            passthrough=cfg["refine.passthrough"], grid=cfg["refine.grid"])


class CoTrainState:
    def __init__(self, arch: ModelArch, tcfg: TrainingConfig, config_echo=None):
        self.arch = arch
        self.tcfg = tcfg
        self.config_echo = dict(config_echo or {})
        self.f_m = ClassifierModel(arch, seed=tcfg.seed)
        self.f_o = ClassifierModel(arch, seed=tcfg.seed + 1)
        self.g = MonotoneWeightNet(phi=tcfg.phi, seed=tcfg.seed + 2)
        self.opt_m = Adam(self.f_m.params, tcfg.lr)
        self.opt_o = Adam(self.f_o.params, tcfg.lr)
        self.opt_g = Adam(self.g.params, tcfg.lr)
        self.history = []     # rows: iteration, phase, L_Pred, L_Param, L_Activ, L_Agg, val_accuracy
        self.outer_iter = 0
        self.step = 0

    def log(self, phase, pred, param, activ, agg, val_acc=""):
        self.history.append((self.step, phase, pred, param, activ, agg, val_acc))


def _sub_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_finite(loss, context):
    if not np.all(np.isfinite(loss.data)):
        raise TrainingError(f"non-finite loss during {context}")


# ---- loss terms (Tensor-valued) ----

def loss_param(f_m, f_o):
    """Squared Frobenius distance between conv weights (FC head excluded)."""
    if set(f_m.params) != set(f_o.params):
        raise TrainingError("models have mismatched parameter sets")
    total = None
    for name in ClassifierModel.CONV_WEIGHT_NAMES:
        d = f_o.params[name] - f_m.params[name]
        term = (d * d).sum()
        total = term if total is None else total + term
    return total


def loss_activ(f_m, f_o, images_t, masked_t):
    """Squared Frobenius distance between pre-FC features, summed over batch."""
    d = f_o.features(images_t) - f_m.features(masked_t)
    return (d * d).sum()


def loss_pred(f_m, f_o, images_t, masked_t, labels_onehot):
    return cross_entropy(f_m.forward(masked_t), f_o.forward(images_t),
                         labels_onehot, reduction="mean")


def _refine_for_training(state, sample, tcfg, seed, warm):
    """Per-sample saliency map (plain ndarray, no graph)."""
    if warm or tcfg.skip_refine:
        return binarize_prompt(sample.prompt, undecided_as=1)
    g = None if tcfg.passthrough else state.g
    return refine_prompt(state.f_m, g, sample.image, sample.prompt,
                         tcfg.n_masks, tcfg.p, sample.label, seed,
                         per_pixel_norm=tcfg.per_pixel_norm, cell_size=tcfg.grid or 1)


def _batch_tensors(samples, maps):
    images_t = Tensor(np.stack([s.image for s in samples]))
    masked_t = Tensor(np.stack([apply_mask(s.image, a) for s, a in zip(samples, maps)]))
    return images_t, masked_t


def total_objective(state, samples, seed=None):
    """Full weighted objective on a batch, plus the component breakdown."""
    tcfg = state.tcfg
    seed = tcfg.refine_seed if seed is None else seed
    maps = [_refine_for_training(state, s, tcfg, _sub_seed(seed, i), warm=False)
            for i, s in enumerate(samples)]
    images_t, masked_t = _batch_tensors(samples, maps)
    y = _one_hot([s.label for s in samples], state.arch.n_classes)
    pred = loss_pred(state.f_m, state.f_o, images_t, masked_t, y).item()
    param = loss_param(state.f_m, state.f_o).item()
    activ = loss_activ(state.f_m, state.f_o, images_t, masked_t).item()
    agg = l_agg(state.g)
    breakdown = {"L_Pred": pred, "L_Param": param, "L_Activ": activ, "L_Agg": agg}
    total = pred + tcfg.lambda1 * param + tcfg.lambda2 * activ + tcfg.lambda3 * agg
    return total, breakdown


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _f_phase_step(state, samples, warm, seed):
    tcfg = state.tcfg
    maps = [_refine_for_training(state, s, tcfg, _sub_seed(seed, i), warm)
            for i, s in enumerate(samples)]
    images_t, masked_t = _batch_tensors(samples, maps)
    y = _one_hot([s.label for s in samples], state.arch.n_classes)
    pred = loss_pred(state.f_m, state.f_o, images_t, masked_t, y)
    param = loss_param(state.f_m, state.f_o)
    activ = loss_activ(state.f_m, state.f_o, images_t, masked_t)
    loss = pred + tcfg.lambda1 * param + tcfg.lambda2 * activ
    _check_finite(loss, "f-phase")
    state.f_m.zero_grads()
    state.f_o.zero_grads()
    loss.backward()
    state.opt_m.step()
    state.opt_o.step()
    state.f_m.zero_grads()
    state.f_o.zero_grads()
    state.step += 1
    state.log("f", pred.item(), param.item(), activ.item(), l_agg(state.g))


def _g_phase_step(state, samples, warm, seed):
    tcfg = state.tcfg
    y = _one_hot([s.label for s in samples], state.arch.n_classes)
    images = np.stack([s.image for s in samples])
    logits_o = Tensor(state.f_o.forward_array(images))
    if warm or tcfg.skip_refine or tcfg.passthrough:
        # no differentiable path from the maps into g; only the endpoint
        # penalty (and a constant L_Pred) remain
        maps = [_refine_for_training(state, s, tcfg, _sub_seed(seed, i), warm)
                for i, s in enumerate(samples)]
        masked_t = Tensor(np.stack([apply_mask(s.image, a) for s, a in zip(samples, maps)]))
    else:
        masked = []
        for i, s in enumerate(samples):
            a = refine_prompt_tensor(state.f_m, state.g, s.image, s.prompt,
                                     tcfg.n_masks, tcfg.p, s.label,
                                     _sub_seed(seed, i), cell_size=tcfg.grid or 1)
            masked.append(Tensor(s.image) * a)  # broadcast over channels
        masked_t = stack(masked)
    pred = cross_entropy(state.f_m.forward(masked_t), logits_o, y, reduction="mean")
    agg = l_agg_tensor(state.g)
    loss = pred + tcfg.lambda3 * agg
    _check_finite(loss, "g-phase")
    state.g.zero_grads()
    state.f_m.zero_grads()
    loss.backward()
    state.opt_g.step()
    state.g.zero_grads()
    state.f_m.zero_grads()
    state.step += 1
    state.log("g", pred.item(), "", "", agg.item())


def _baseline_step(state, samples):
    """Plain cross-entropy step on f_o alone."""
    y = _one_hot([s.label for s in samples], state.arch.n_classes)
    logits = state.f_o.forward(Tensor(np.stack([s.image for s in samples])))
    p = softmax(logits).clip_min(1e-12).log()
    loss = -(Tensor(y) * p).sum() * (1.0 / len(samples))
    _check_finite(loss, "baseline")
    state.f_o.zero_grads()
    loss.backward()
    state.opt_o.step()
    state.f_o.zero_grads()
    state.step += 1
    state.log("f", loss.item(), "", "", "")


# ---- evaluation ----

def predict(state, image, prompt=None, seed=0, n_masks=None, return_saliency=False):
    """Single-image inference. With a prompt: refine, then f_m on the
    masked image; without: f_o on the raw image."""
    image = np.asarray(image, dtype=np.float64)
    tcfg = state.tcfg
    if prompt is None:
        probs = softmax(state.f_o.forward_array(image[None]))[0]
        return {"class_index": int(np.argmax(probs)), "probabilities": probs,
                "path_used": "non-prompted", "saliency": None}
    if prompt.shape != image.shape[-2:]:
        raise PromptError(f"prompt shape {prompt.shape} does not match image {image.shape}")
    k = inference_class_index(state.f_m, image, prompt)
    if tcfg.skip_refine:
        a = binarize_prompt(prompt, undecided_as=1)
    else:
        g = None if tcfg.passthrough else state.g
        a = refine_prompt(state.f_m, g, image, prompt,
                          n_masks or tcfg.n_masks, tcfg.p, k, seed,
                          per_pixel_norm=tcfg.per_pixel_norm, cell_size=tcfg.grid or 1)
    probs = softmax(state.f_m.forward_array(apply_mask(image, a)[None]))[0]
    return {"class_index": int(np.argmax(probs)), "probabilities": probs,
            "path_used": "prompted", "saliency": a if return_saliency else None}


def eval_accuracy(state, samples, prompted, seed=0):
    correct = 0
    for i, s in enumerate(samples):
        out = predict(state, s.image, s.prompt if prompted else None,
                      seed=_sub_seed(seed, i))
        correct += out["class_index"] == s.label
    return correct / len(samples)


def predictions(state, samples, prompted, seed=0):
    return [predict(state, s.image, s.prompt if prompted else None,
                    seed=_sub_seed(seed, i))["class_index"]
            for i, s in enumerate(samples)]


# ---- the loop ----

def train_alternating(splits, tcfg: TrainingConfig, arch: ModelArch = None,
                      config_echo=None, progress=None):
    """Algorithm: T outer iterations of (F passes updating f_m/f_o with g
    frozen, then G passes updating g with the models frozen)."""
    train = splits.get("train") or []
    val = splits.get("val") or []
    if not train:
        raise TrainingError("empty training set")
    arch = arch or ModelArch(in_channels=train[0].image.shape[0],
                             input_hw=train[0].image.shape[1])
    state = CoTrainState(arch, tcfg, config_echo)
    best_val, best_snapshot, since_best = -1.0, None, 0

    for t in range(1, tcfg.outer_iters + 1):
        state.outer_iter = t
        warm = t <= tcfg.warmup_iters
        for q in range(1, tcfg.f_passes + 1):
            rng = np.random.default_rng(_sub_seed(tcfg.seed, t, 0, q))
            for b, idx in enumerate(_batches(len(train), tcfg.batch_size, rng)):
                batch = [train[i] for i in idx]
                seed = _sub_seed(tcfg.refine_seed, t, 0, q, b)
                if tcfg.baseline_only:
                    _baseline_step(state, batch)
                else:
                    _f_phase_step(state, batch, warm, seed)
        if not tcfg.baseline_only:
            for q in range(1, tcfg.g_passes + 1):
                rng = np.random.default_rng(_sub_seed(tcfg.seed, t, 1, q))
                for b, idx in enumerate(_batches(len(train), tcfg.batch_size, rng)):
                    batch = [train[i] for i in idx]
                    seed = _sub_seed(tcfg.refine_seed, t, 1, q, b)
                    _g_phase_step(state, batch, warm, seed)
        if val:
            acc = eval_accuracy(state, val, prompted=False,
                                seed=_sub_seed(tcfg.refine_seed, 999, t))
            if not tcfg.baseline_only:
                # the restored snapshot serves both inference paths, so it is
                # scored by the weaker of the two validation accuracies
                acc = min(acc, eval_accuracy(
                    state, val, prompted=True,
                    seed=_sub_seed(tcfg.refine_seed, 999, t)))
            state.log("val", "", "", "", "", acc)
            if progress:
                progress(t, acc)
            if acc > best_val:
                best_val, since_best = acc, 0
                best_snapshot = _snapshot(state)
            else:
                since_best += 1
                if since_best >= tcfg.patience:
                    break
    if best_snapshot is not None:
        _restore(state, best_snapshot)
    return state


def _snapshot(state):
    snap = {}
    for tag, model in (("f_m", state.f_m), ("f_o", state.f_o)):
        for name, p in model.params.items():
            snap[f"{tag}.{name}"] = p.data.copy()
    for k, p in state.g.params.items():
        snap[f"g.{k}"] = p.data.copy()
    return snap


def _restore(state, snap):
    for tag, model in (("f_m", state.f_m), ("f_o", state.f_o)):
        for name, p in model.params.items():
            p.data = snap[f"{tag}.{name}"].copy()
    for k, p in state.g.params.items():
        p.data = snap[f"g.{k}"].copy()
