"""Experiment orchestration: train / eval / ablate / sweep, plus reports.

Reports are plain text plus CSV. Multi-seed modes run each trial with an
offset train seed and report mean and standard deviation. Trials are
independent and deterministic, so sweep/ablate fan-out across processes
(capped by VAPL_THREADS) returns the same numbers as serial execution.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import checkpoint as ckpt
from .config import dump_config
from .cotrain import TrainingConfig, predictions, train_alternating
from .data import DatasetError, load_dataset
from .metrics import compute_metrics
from .nn import ModelArch

ABLATION_VARIANTS = {
    "vapl": {},
    "vapl-1": {"train.skip_refine": True},
    "vapl-2": {"train.lambda1": 0.0},
    "vapl-3": {"train.lambda2": 0.0},
    "vapl-4": {"refine.passthrough": True},
    "baseline": {"train.baseline_only": True},
}

SWEEP_GRID = (0.01, 0.1, 1.0, 10.0)
SWEEP_KEYS = {"lambda1": "train.lambda1", "lambda2": "train.lambda2",
              "lambda3": "train.lambda3"}


def arch_from_config(cfg):
    return ModelArch(in_channels=cfg["model.in_channels"], input_hw=cfg["model.input_hw"],
                     conv_channels=(cfg["model.conv1_channels"], cfg["model.conv2_channels"]),
                     n_classes=cfg["model.classes"])


def _load_splits(cfg):
    d = cfg["data.dir"]
    if not os.path.isdir(d):
        raise DatasetError(f"dataset directory {d!r} not found (run gen-data first)")
    return load_dataset(d)


def _eval_paths(state, samples, seed=0):
    """Metrics for the prompted (f_m) and non-prompted (f_o) paths."""
    labels = [s.label for s in samples]
    out = {}
    out["non-prompted"] = compute_metrics(predictions(state, samples, False), labels)
    if state.tcfg.baseline_only:
        out["prompted"] = None
    else:
        out["prompted"] = compute_metrics(
            predictions(state, samples, True, seed=seed), labels)
    return out


def train_once(cfg, splits=None, overrides=None):
    cfg = dict(cfg)
    cfg.update(overrides or {})
    splits = splits or _load_splits(cfg)
    tcfg = TrainingConfig.from_dict(cfg)
    state = train_alternating(splits, tcfg, arch_from_config(cfg), config_echo=cfg)
    return state, splits


def _trial(args):
    cfg, overrides, seed = args
    overrides = dict(overrides)
    overrides["train.seed"] = seed
    state, splits = train_once(cfg, overrides=overrides)
    per_path = _eval_paths(state, splits["test"], seed=cfg["refine.seed"])
    result = {}
    for path, m in per_path.items():
        result[path] = None if m is None else m.as_row()
    return result


def _worker_count():
    try:
        n = int(os.environ.get("VAPL_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _run_trials(cfg, variant_overrides, seeds):
    jobs = [(cfg, ov, s) for ov in variant_overrides for s in seeds]
    workers = _worker_count()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    grouped = []
    for i in range(len(variant_overrides)):
        grouped.append(results[i * len(seeds):(i + 1) * len(seeds)])
    return grouped


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


def _fmt(x):
    return "-" if x is None else f"{x:.4f}"


def write_training_log(path, history):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "phase", "L_Pred", "L_Param", "L_Activ", "L_Agg",
                    "val_accuracy"])
        w.writerows(history)


class Report:
    """Diff-friendly text report; wall-clock sits on its own line so
    determinism checks can strip it."""

    def __init__(self, title, cfg):
        self.lines = [f"== {title} ==", "", "[config]", dump_config(cfg).rstrip(), ""]
        self.started = time.perf_counter()

    def section(self, name):
        self.lines += [f"[{name}]"]

    def add(self, line=""):
        self.lines.append(line)

    def metrics_block(self, split, per_path):
        self.section(f"metrics {split}")
        self.add("path," + ",".join(METRIC_NAMES) + ",tp,fp,tn,fn")
        for path in ("prompted", "non-prompted"):
            m = per_path.get(path)
            if m is None:
                self.add(f"{path},-,-,-,-,-,-,-,-")
            else:
                self.add(f"{path}," + ",".join(_fmt(v) for v in m.as_row())
                         + f",{m.tp},{m.fp},{m.tn},{m.fn}")
        self.add()

    def write(self, path):
        lines = self.lines + [f"wall_clock_seconds={time.perf_counter() - self.started:.3f}", ""]
        with open(path, "w") as f:
            f.write("\n".join(lines))


def run_train(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    state, splits = train_once(cfg)
    ckpt.save_checkpoint(os.path.join(out_dir, "checkpoint.vapl"), state)
    write_training_log(os.path.join(out_dir, "train_log.csv"), state.history)
    rep = Report("train", cfg)
    for split in ("val", "test"):
        if split in splits:
            rep.metrics_block(split, _eval_paths(state, splits[split], seed=cfg["refine.seed"]))
    rep.write(os.path.join(out_dir, "report.txt"))
    return state


def run_eval(cfg, out_dir, checkpoint_path):
    os.makedirs(out_dir, exist_ok=True)
    state = ckpt.load_checkpoint(checkpoint_path, expect_arch=arch_from_config(cfg))
    splits = _load_splits(cfg)
    rep = Report("eval", cfg)
    results = {}
    for split in sorted(splits):
        results[split] = _eval_paths(state, splits[split], seed=cfg["refine.seed"])
        rep.metrics_block(split, results[split])
    rep.write(os.path.join(out_dir, "report.txt"))
    return results


def run_ablate(cfg, out_dir):
    """Train VAPL, VAPL-1..4 and the plain baseline under one seed set."""
    os.makedirs(out_dir, exist_ok=True)
    seeds = [cfg["train.seed"] + i for i in range(cfg["report.seeds"])]
    names = list(ABLATION_VARIANTS)
    grouped = _run_trials(cfg, [ABLATION_VARIANTS[n] for n in names], seeds)

    summary = {}
    rows = []
    for name, trials in zip(names, grouped):
        summary[name] = {}
        for path in ("prompted", "non-prompted"):
            vals = [t[path] for t in trials]
            if any(v is None for v in vals):
                summary[name][path] = None
                continue
            arr = np.array(vals)  # (seeds, 4)
            summary[name][path] = {"mean": arr.mean(axis=0), "std": arr.std(axis=0, ddof=0)}
            for si, seed in enumerate(seeds):
                rows.append([name, path, seed] + [f"{v:.6f}" for v in arr[si]])

    with open(os.path.join(out_dir, "ablate.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["variant", "path", "seed"] + list(METRIC_NAMES))
        w.writerows(rows)

    rep = Report("ablate", cfg)
    rep.section("config diffs")
    for name in names:
        diff = ",".join(f"{k}={v}" for k, v in ABLATION_VARIANTS[name].items()) or "(base)"
        rep.add(f"{name}: {diff}")
    rep.add()
    for path in ("prompted", "non-prompted"):
        rep.section(f"test metrics, {path} path (mean±std over {len(seeds)} seeds)")
        rep.add("variant," + ",".join(METRIC_NAMES))
        for name in names:
            s = summary[name][path]
            if s is None:
                rep.add(f"{name},-,-,-,-")
            else:
                cells = [f"{m:.4f}±{sd:.4f}" for m, sd in zip(s["mean"], s["std"])]
                rep.add(f"{name}," + ",".join(cells))
        rep.add()
    rep.write(os.path.join(out_dir, "report.txt"))
    return summary


def run_sweep(cfg, out_dir, sweep_param="lambda1", grid=SWEEP_GRID):
    if sweep_param not in SWEEP_KEYS:
        raise ValueError(f"sweep parameter must be one of {sorted(SWEEP_KEYS)}")
    os.makedirs(out_dir, exist_ok=True)
    key = SWEEP_KEYS[sweep_param]
    seeds = [cfg["train.seed"] + i for i in range(cfg["report.seeds"])]
    grouped = _run_trials(cfg, [{key: v} for v in grid], seeds)

    rows = []
    for value, trials in zip(grid, grouped):
        acc = np.array([t["prompted"][0] for t in trials])
        rows.append([value, f"{acc.mean():.6f}", f"{acc.std(ddof=0):.6f}"])
    out_csv = os.path.join(out_dir, f"sweep_{sweep_param}.csv")
    with open(out_csv, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([sweep_param, "accuracy_mean", "accuracy_std"])
        w.writerows(rows)

    rep = Report("sweep", cfg)
    rep.section(f"prompted-path test accuracy vs {sweep_param}")
    rep.add(f"{sweep_param},accuracy_mean,accuracy_std")
    for r in rows:
        rep.add(",".join(str(c) for c in r))
    rep.add()
    rep.write(os.path.join(out_dir, "report.txt"))
    return rows
