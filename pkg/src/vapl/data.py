"""Synthetic two-class benchmark with ground-truth saliency and prompts.

Positive images contain a bright lesion disc; every image contains an
artifact square whose brightness is spuriously correlated with the label
in the training split (rate 0.7) but not in the test split (0.5). A model
that latches onto the artifact loses accuracy at test time; precluding it
via prompts recovers that headroom.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import netpbm
from .prompt import AttentionPrompt, PromptError, read_prompt, write_prompt


class DatasetError(Exception):
    pass


@dataclass
class SyntheticSpec:
    h: int = 32
    w: int = 32
    n_train: int = 200
    n_val: int = 100
    n_test: int = 200
    radius_range: tuple = (3, 5)
    lesion_intensity: float = 0.85
    artifact_size: int = 6
    artifact_bright: float = 1.0
    artifact_dim: float = 0.45
    background: float = 0.15
    noise: float = 0.05
    coverage: float = 0.6
    spurious_train: float = 0.7
    spurious_test: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 1:
            raise DatasetError("split counts must be >= 1")
        if 2 * self.radius_range[1] + 2 >= min(self.h, self.w) \
                or self.artifact_size + 2 >= min(self.h, self.w):
            raise DatasetError("shapes do not fit inside the image")


@dataclass
class Sample:
    image: np.ndarray          # (C, H, W) float64 in [0, 1]
    label: int
    truth_mask: np.ndarray     # (H, W) uint8
    prompt: AttentionPrompt


def _disc(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)


def synthesize_prompt(truth_mask, artifact_mask, coverage, seed):
    """Mark a `coverage` fraction of lesion pixels indispensable and of
    artifact pixels precluded; everything else stays undecided."""
    if not 0.0 < coverage <= 1.0:
        raise PromptError(f"coverage must be in (0, 1], got {coverage}")
    rng = np.random.default_rng(seed)
    values = np.full(truth_mask.shape, -1, dtype=np.int8)
    for region, mark in ((truth_mask, 1), (artifact_mask, 0)):
        idx = np.flatnonzero(region)
        if idx.size:
            take = int(round(coverage * idx.size))
            chosen = rng.choice(idx, size=take, replace=False)
            values.flat[chosen] = mark
    return AttentionPrompt(values)


def _make_sample(spec, label, spurious_rate, rng):
    h, w = spec.h, spec.w
    img = np.full((h, w), spec.background, dtype=np.float64)

    # artifact square; brightness agrees with the label at spurious_rate
    a = spec.artifact_size
    ay = rng.integers(1, h - a - 1)
    ax = rng.integers(1, w - a - 1)
    artifact = np.zeros((h, w), dtype=np.uint8)
    artifact[ay:ay + a, ax:ax + a] = 1
    agree = rng.random() < spurious_rate
    bright = (label == 1) == agree
    img[artifact == 1] = spec.artifact_bright if bright else spec.artifact_dim

    truth = np.zeros((h, w), dtype=np.uint8)
    if label == 1:
        r = int(rng.integers(spec.radius_range[0], spec.radius_range[1] + 1))
        for _ in range(200):
            cy = int(rng.integers(r + 1, h - r - 1))
            cx = int(rng.integers(r + 1, w - r - 1))
            cand = _disc(h, w, cy, cx, r)
            if not (cand & artifact).any():
                truth = cand
                break
        else:
            raise DatasetError("could not place a lesion disjoint from the artifact")
        img[truth == 1] = spec.lesion_intensity

    if spec.noise > 0:
        img = img + rng.normal(0.0, spec.noise, size=img.shape)
    # quantize to the 8-bit grid so file round-trips are exact
    img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0

    prompt = synthesize_prompt(truth, artifact, spec.coverage,
                               int(rng.integers(0, 2 ** 31)))
    return Sample(image=img[None, :, :], label=int(label), truth_mask=truth, prompt=prompt)


def generate_dataset(spec):
    """Returns {'train': [...], 'val': [...], 'test': [...]}, class-balanced."""
    splits = {}
    for split_id, (name, count, rate) in enumerate(
            (("train", spec.n_train, spec.spurious_train),
             ("val", spec.n_val, spec.spurious_train),
             ("test", spec.n_test, spec.spurious_test))):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, split_id]))
        labels = np.zeros(count, dtype=int)
        labels[: count // 2] = 1
        rng.shuffle(labels)
        splits[name] = [_make_sample(spec, int(lab), rate, rng) for lab in labels]
    return splits


def save_dataset(splits, directory):
    os.makedirs(directory, exist_ok=True)
    rows = []
    for split, samples in splits.items():
        d = os.path.join(directory, split)
        os.makedirs(d, exist_ok=True)
        for i, s in enumerate(samples):
            netpbm.write_pnm(os.path.join(d, f"{i}.img.ppm"),
                             netpbm.unit_to_image(s.image))
            write_prompt(os.path.join(d, f"{i}.prompt.pgm"), s.prompt)
            netpbm.write_pnm(os.path.join(d, f"{i}.truth.pgm"),
                             s.truth_mask * np.uint8(255))
            rows.append((i, split, s.label))
    with open(os.path.join(directory, "labels.csv"), "w", newline="") as f:
        wcsv = csv.writer(f)
        wcsv.writerow(["index", "split", "label"])
        wcsv.writerows(rows)


def load_dataset(directory):
    labels_path = os.path.join(directory, "labels.csv")
    if not os.path.exists(labels_path):
        raise DatasetError(f"missing {labels_path}")
    by_split = {}
    with open(labels_path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            by_split.setdefault(row["split"], []).append((int(row["index"]), int(row["label"])))
    splits = {}
    for split, entries in by_split.items():
        d = os.path.join(directory, split)
        n_files = len([p for p in os.listdir(d) if p.endswith(".img.ppm")]) if os.path.isdir(d) else 0
        if n_files != len(entries):
            raise DatasetError(f"{split}: labels.csv lists {len(entries)} samples "
                               f"but {n_files} image files found")
        samples = []
        for idx, label in sorted(entries):
            img, maxval = netpbm.read_pnm(os.path.join(d, f"{idx}.img.ppm"))
            truth, _ = netpbm.read_pnm(os.path.join(d, f"{idx}.truth.pgm"))
            samples.append(Sample(
                image=netpbm.image_to_unit(img, maxval),
                label=label,
                truth_mask=(truth > 0).astype(np.uint8),
                prompt=read_prompt(os.path.join(d, f"{idx}.prompt.pgm"))))
        splits[split] = samples
    return splits
