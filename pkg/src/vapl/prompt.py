"""Trinary attention prompts, perturbation sampling, and image masking.

A prompt marks each pixel indispensable (+1), precluded (0) or undecided
(-1). Perturbation resolves every undecided pixel to 1 with probability p,
to 0 otherwise; indispensable and precluded pixels are never touched.
"""

import numpy as np

from . import netpbm

INDISPENSABLE = 1
PRECLUDED = 0
UNDECIDED = -1

# PGM byte encoding of prompt values
_PGM_CODES = {0: PRECLUDED, 128: UNDECIDED, 255: INDISPENSABLE}
_PGM_BYTES = {PRECLUDED: 0, UNDECIDED: 128, INDISPENSABLE: 255}


class PromptError(Exception):
    pass


class AttentionPrompt:
    """H x W map over {-1, 0, +1}."""

    def __init__(self, values):
        values = np.asarray(values)
        if values.ndim != 2:
            raise PromptError(f"prompt must be 2-D, got shape {values.shape}")
        if not np.isin(values, (-1, 0, 1)).all():
            bad = np.unique(values[~np.isin(values, (-1, 0, 1))])
            raise PromptError(f"prompt values must be in {{-1,0,+1}}, found {bad.tolist()}")
        self.values = values.astype(np.int8)

    @property
    def shape(self):
        return self.values.shape

    def __eq__(self, other):
        return isinstance(other, AttentionPrompt) and np.array_equal(self.values, other.values)

    @classmethod
    def full_undecided(cls, h, w):
        return cls(np.full((h, w), UNDECIDED, dtype=np.int8))


def sample_perturbations(prompt, n_masks, p, seed, cell_size=1):
    """Draw N binary masks from the prompt.

    Undecided pixels flip to 1 independently with probability p; each mask
    uses a sub-seed derived from (seed, i), so mask i is reproducible on
    its own. `cell_size > 1` draws one Bernoulli per cell of a coarse grid
    instead (RISE-style), still honoring +1/0 pixels exactly.
    """
    if not 0.0 < p < 1.0:
        raise PromptError(f"p must be in (0, 1), got {p}")
    if n_masks < 1:
        raise PromptError(f"n_masks must be >= 1, got {n_masks}")
    d = prompt.values
    h, w = d.shape
    base = (d == INDISPENSABLE).astype(np.float64)
    undecided = d == UNDECIDED
    masks = []
    for i in range(n_masks):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        m = base.copy()
        if cell_size > 1:
            gh = -(-h // cell_size)
            gw = -(-w // cell_size)
            grid = rng.random((gh, gw)) < p
            fine = np.kron(grid, np.ones((cell_size, cell_size)))[:h, :w]
            m[undecided] = fine[undecided]
        else:
            m[undecided] = rng.random(int(undecided.sum())) < p
        masks.append(m)
    return masks


def binarize_prompt(prompt, undecided_as):
    """Deterministic mask: +1 -> 1, 0 -> 0, -1 -> undecided_as."""
    if undecided_as not in (0, 1):
        raise PromptError(f"undecided_as must be 0 or 1, got {undecided_as}")
    d = prompt.values
    m = (d == INDISPENSABLE).astype(np.float64)
    if undecided_as:
        m[d == UNDECIDED] = 1.0
    return m


def apply_mask(image, mask):
    """Element-wise image * mask, mask broadcast over channels."""
    image = np.asarray(image, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if image.shape[-2:] != mask.shape:
        raise PromptError(f"mask shape {mask.shape} does not match image {image.shape}")
    if mask.min() < 0.0 or mask.max() > 1.0:
        raise PromptError("mask values must lie in [0, 1]")
    return image * mask[None, :, :]


def normalize_saliency(a):
    """Scale into [0, 1] for masking: divide by the max when it exceeds 1."""
    a = np.asarray(a, dtype=np.float64)
    if a.size and a.max() > 1.0:
        return a / a.max()
    return a.copy()


# ---- file I/O ----

def read_prompt(path):
    arr, maxval = netpbm.read_pnm(path)
    if arr.ndim != 2:
        raise PromptError(f"{path}: prompt must be a PGM (single channel)")
    codes = np.unique(arr)
    bad = [int(c) for c in codes if int(c) not in _PGM_CODES]
    if bad:
        raise PromptError(f"{path}: invalid prompt pixel values {bad} (allowed: 0, 128, 255)")
    values = np.zeros(arr.shape, dtype=np.int8)
    for code, v in _PGM_CODES.items():
        values[arr == code] = v
    return AttentionPrompt(values)


def write_prompt(path, prompt):
    out = np.zeros(prompt.shape, dtype=np.uint8)
    for v, code in _PGM_BYTES.items():
        out[prompt.values == v] = code
    netpbm.write_pnm(path, out, maxval=255)


def write_saliency(path, saliency, csv_path=None):
    """16-bit PGM, value = round(65535 * A); optional CSV of raw floats."""
    a = np.asarray(saliency, dtype=np.float64)
    netpbm.write_pnm(path, np.rint(np.clip(a, 0.0, 1.0) * 65535).astype(np.uint16),
                     maxval=65535)
    if csv_path is not None:
        np.savetxt(csv_path, a, delimiter=",", fmt="%.17g")


def read_saliency(path):
    arr, maxval = netpbm.read_pnm(path)
    return arr.astype(np.float64) / float(maxval)
