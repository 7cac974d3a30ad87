"""Plain-text key=value configuration with dotted section keys.

Every key has a default; unknown keys are rejected. Values are coerced to
the type of the default.
"""

import copy


class ConfigError(Exception):
    pass


DEFAULTS = {
    # model
    "model.in_channels": 1,
    "model.input_hw": 32,
    "model.conv1_channels": 8,
    "model.conv2_channels": 16,
    "model.classes": 2,
    # training loop
    "train.lambda1": 0.002,
    "train.lambda2": 0.001,
    "train.lambda3": 10.0,
    "train.lr": 0.002,
    "train.outer_iters": 10,
    "train.f_passes": 2,
    "train.g_passes": 2,
    "train.batch_size": 16,
    "train.seed": 0,
    "train.warmup_iters": 1,
    "train.patience": 10,
    "train.skip_refine": False,    # VAPL-1: use the binarized prompt directly
    "train.baseline_only": False,  # plain f_o, no prompts, no co-training
    # refinement
    "refine.n_masks": 16,
    "refine.p": 0.1,
    "refine.phi": "exp",
    "refine.seed": 0,
    "refine.per_pixel_norm": False,
    "refine.passthrough": False,   # VAPL-4: weights are raw confidence scores
    "refine.grid": 0,              # coarse Bernoulli cell size; 0 = per pixel
    # synthetic data
    "data.dir": "data",
    "data.h": 32,
    "data.w": 32,
    "data.train_count": 200,
    "data.val_count": 100,
    "data.test_count": 200,
    "data.noise": 0.05,
    "data.coverage": 0.6,
    "data.seed": 0,
    # reporting
    "report.seeds": 3,
    # serving
    "serve.addr": "127.0.0.1",
    "serve.port": 8000,
    "serve.expose_dataset": False,
    "serve.n_masks": 200,
    "serve.max_n_masks": 5000,
}


def _coerce(key, raw):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {type(default).__name__}, got {raw!r}")
    return raw.strip()


def parse_config(text, overrides=None):
    """Parse key=value lines ('#' comments allowed) into a full config dict."""
    cfg = copy.deepcopy(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    _validate(cfg)
    return cfg


def load_config(path=None, overrides=None):
    text = ""
    if path is not None:
        try:
            with open(path) as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
    return parse_config(text, overrides)


def _validate(cfg):
    if not 0.0 < cfg["refine.p"] < 1.0:
        raise ConfigError("refine.p must be in (0, 1)")
    for key in ("train.lambda1", "train.lambda2", "train.lambda3"):
        if cfg[key] < 0:
            raise ConfigError(f"{key} must be >= 0")
    for key in ("train.outer_iters", "train.f_passes", "train.g_passes",
                "train.batch_size", "refine.n_masks"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    if cfg["refine.phi"] not in ("exp", "tanh1"):
        raise ConfigError("refine.phi must be 'exp' or 'tanh1'")


def dump_config(cfg):
    """Stable, diff-friendly serialization (sorted keys)."""
    return "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)) + "\n"
