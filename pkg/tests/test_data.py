"""Synthetic dataset generation and lossless disk round-trips."""

import numpy as np
import pytest

from vapl.data import (DatasetError, SyntheticSpec, generate_dataset,
                       load_dataset, save_dataset, synthesize_prompt)

SMALL = SyntheticSpec(n_train=20, n_val=10, n_test=20, seed=0)


@pytest.fixture(scope="module")
def splits():
    return generate_dataset(SMALL)


def test_split_sizes_and_balance(splits):
    assert [len(splits[s]) for s in ("train", "val", "test")] == [20, 10, 20]
    for name in ("train", "val", "test"):
        labels = [s.label for s in splits[name]]
        assert labels.count(1) == len(labels) // 2


def test_sample_shapes_and_ranges(splits):
    for s in splits["train"]:
        assert s.image.shape == (1, 32, 32)
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.truth_mask.shape == (32, 32)
        assert set(np.unique(s.truth_mask)) <= {0, 1}
        assert s.prompt.shape == (32, 32)


def test_positive_samples_have_lesions(splits):
    for s in splits["train"]:
        if s.label == 1:
            assert s.truth_mask.sum() > 0
            # lesion pixels are bright relative to background
            assert s.image[0][s.truth_mask == 1].mean() > 0.5
        else:
            assert s.truth_mask.sum() == 0


def test_prompts_follow_the_masks(splits):
    any_indisp = any_precl = False
    for s in splits["train"]:
        v = s.prompt.values
        # indispensable only inside the lesion
        assert np.all(s.truth_mask[v == 1] == 1)
        any_indisp |= bool((v == 1).any())
        any_precl |= bool((v == 0).any())
        # precluded marks never overlap the lesion
        assert np.all(s.truth_mask[v == 0] == 0)
    assert any_indisp and any_precl


def test_prompt_coverage_fraction():
    truth = np.zeros((10, 10), dtype=np.uint8)
    truth[2:6, 2:6] = 1  # 16 pixels
    artifact = np.zeros((10, 10), dtype=np.uint8)
    artifact[7:9, 7:9] = 1  # 4 pixels
    d = synthesize_prompt(truth, artifact, coverage=0.5, seed=0)
    assert (d.values == 1).sum() == 8
    assert (d.values == 0).sum() == 2
    assert (d.values == -1).sum() == 90


def test_generation_deterministic():
    a = generate_dataset(SMALL)
    b = generate_dataset(SMALL)
    for split in a:
        for x, y in zip(a[split], b[split]):
            assert np.array_equal(x.image, y.image) and x.label == y.label
            assert x.prompt == y.prompt
    c = generate_dataset(SyntheticSpec(n_train=20, n_val=10, n_test=20, seed=1))
    assert not np.array_equal(a["train"][0].image, c["train"][0].image)


def test_spurious_rates():
    spec = SyntheticSpec(n_train=400, n_val=10, n_test=400, seed=3)
    splits = generate_dataset(spec)

    def agree_rate(samples):
        hits = 0
        for s in samples:
            img = s.image[0]
            # artifact pixels are the bright/dim square outside the lesion
            off = (s.truth_mask == 0)
            bright = img[off].max() > 0.93
            hits += bright == (s.label == 1)
        return hits / len(samples)

    assert agree_rate(splits["train"]) == pytest.approx(spec.spurious_train, abs=0.06)
    assert agree_rate(splits["test"]) == pytest.approx(spec.spurious_test, abs=0.06)


def test_roundtrip_is_lossless(tmp_path, splits):
    save_dataset(splits, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    for split in splits:
        assert len(back[split]) == len(splits[split])
        for x, y in zip(splits[split], back[split]):
            assert np.array_equal(x.image, y.image)
            assert x.label == y.label
            assert np.array_equal(x.truth_mask, y.truth_mask)
            assert x.prompt == y.prompt


def test_load_detects_count_mismatch(tmp_path, splits):
    save_dataset(splits, tmp_path / "d")
    (tmp_path / "d" / "train" / "0.img.ppm").unlink()
    with pytest.raises(DatasetError, match="train"):
        load_dataset(tmp_path / "d")


def test_load_missing_labels(tmp_path):
    with pytest.raises(DatasetError, match="labels.csv"):
        load_dataset(tmp_path)


def test_spec_validation():
    with pytest.raises(DatasetError):
        SyntheticSpec(n_train=0)
    with pytest.raises(DatasetError):
        SyntheticSpec(h=8, w=8, radius_range=(3, 5))
