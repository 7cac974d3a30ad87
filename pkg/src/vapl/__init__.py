"""Attention-prompted prediction and learning at desk scale."""

from .autograd import Tensor
from .cotrain import CoTrainState, TrainingConfig, predict, train_alternating
from .data import Sample, SyntheticSpec, generate_dataset, load_dataset, save_dataset
from .metrics import Metrics, compute_metrics
from .nn import ClassifierModel, ModelArch, cross_entropy, softmax
from .prompt import AttentionPrompt, apply_mask, binarize_prompt, sample_perturbations
from .refine import MonotoneWeightNet, confidence, l_agg, refine_prompt, weight_of

__version__ = "0.1.0"

__all__ = [
    "AttentionPrompt", "ClassifierModel", "CoTrainState", "Metrics",
    "ModelArch", "MonotoneWeightNet", "Sample", "SyntheticSpec", "Tensor",
    "TrainingConfig", "apply_mask", "binarize_prompt", "compute_metrics",
    "confidence", "cross_entropy", "generate_dataset", "l_agg", "load_dataset",
    "predict", "refine_prompt", "sample_perturbations", "save_dataset",
    "softmax", "train_alternating", "weight_of",
]
