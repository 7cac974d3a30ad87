"""Experiment orchestration: reports, ablation table, sweep grid."""

import csv
import os
import re

import pytest

from vapl.config import parse_config
from vapl.data import SyntheticSpec, generate_dataset, save_dataset
from vapl.experiment import (ABLATION_VARIANTS, SWEEP_GRID, arch_from_config,
                             run_ablate, run_eval, run_sweep, run_train)

FAST = """
data.train_count = 12
data.val_count = 6
data.test_count = 12
train.outer_iters = 1
train.f_passes = 1
train.g_passes = 1
train.batch_size = 12
train.warmup_iters = 1
refine.n_masks = 4
report.seeds = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("exp")
    cfg = parse_config(FAST, overrides={"data.dir": str(d / "data")})
    spec = SyntheticSpec(n_train=cfg["data.train_count"], n_val=cfg["data.val_count"],
                         n_test=cfg["data.test_count"], seed=cfg["data.seed"])
    save_dataset(generate_dataset(spec), cfg["data.dir"])
    return d, cfg


def strip_wall_clock(text):
    return re.sub(r"wall_clock_seconds=\S+", "wall_clock_seconds=X", text)


def test_arch_from_config():
    cfg = parse_config("model.conv1_channels = 4\nmodel.conv2_channels = 5")
    arch = arch_from_config(cfg)
    assert arch.conv_channels == (4, 5) and arch.input_hw == 32


def test_run_train_outputs(workdir):
    d, cfg = workdir
    out = d / "train"
    run_train(cfg, str(out))
    assert (out / "checkpoint.vapl").exists()
    report = (out / "report.txt").read_text()
    assert "[config]" in report and "[metrics test]" in report
    assert "wall_clock_seconds=" in report
    with open(out / "train_log.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["iteration", "phase", "L_Pred", "L_Param", "L_Activ",
                       "L_Agg", "val_accuracy"]
    assert len(rows) > 1


def test_run_eval_matches_train_report(workdir):
    d, cfg = workdir
    out = d / "eval"
    results = run_eval(cfg, str(out), str(d / "train" / "checkpoint.vapl"))
    assert set(results) == {"train", "val", "test"}
    for split in results:
        for path in ("prompted", "non-prompted"):
            assert results[split][path] is not None
            assert 0.0 <= results[split][path].accuracy <= 1.0


def test_reports_deterministic_modulo_wall_clock(workdir):
    d, cfg = workdir
    run_train(cfg, str(d / "t1"))
    run_train(cfg, str(d / "t2"))
    a = strip_wall_clock((d / "t1" / "report.txt").read_text())
    b = strip_wall_clock((d / "t2" / "report.txt").read_text())
    assert a == b


def test_run_ablate_table(workdir):
    d, cfg = workdir
    out = d / "ablate"
    summary = run_ablate(cfg, str(out))
    assert set(summary) == set(ABLATION_VARIANTS)
    assert summary["baseline"]["prompted"] is None
    assert summary["vapl"]["prompted"] is not None
    with open(out / "ablate.csv") as f:
        rows = list(csv.reader(f))
    # header + (5 variants x 2 paths + baseline x 1 path) x 2 seeds
    assert rows[0] == ["variant", "path", "seed", "accuracy", "precision", "recall", "f1"]
    assert len(rows) == 1 + (5 * 2 + 1) * 2
    report = (out / "report.txt").read_text()
    assert "[config diffs]" in report
    for name in ABLATION_VARIANTS:
        assert name in report


def test_run_sweep_grid(workdir):
    d, cfg = workdir
    out = d / "sweep"
    rows = run_sweep(cfg, str(out), sweep_param="lambda3")
    assert [r[0] for r in rows] == list(SWEEP_GRID)
    with open(out / "sweep_lambda3.csv") as f:
        got = list(csv.reader(f))
    assert got[0] == ["lambda3", "accuracy_mean", "accuracy_std"]
    assert len(got) == 1 + len(SWEEP_GRID)


def test_sweep_rejects_unknown_param(workdir):
    d, cfg = workdir
    with pytest.raises(ValueError):
        run_sweep(cfg, str(d / "x"), sweep_param="lr")


def test_parallel_matches_serial(workdir, monkeypatch):
    d, cfg = workdir
    monkeypatch.setenv("VAPL_THREADS", "2")
    run_sweep(cfg, str(d / "sw_par"), sweep_param="lambda3")
    par = (d / "sw_par" / f"sweep_lambda3.csv").read_text()
    ser = (d / "sweep" / f"sweep_lambda3.csv").read_text()
    assert par == ser
