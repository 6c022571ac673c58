"""Proxy-task training: losses, sampling, two-phase loop."""

from .losses import (
    LossBreakdown,
    LossWeights,
    RandomFeaturePyramid,
    loss_total,
    make_perceptual,
    ssim,
)
from .sampling import PairSample, sample_pair, crop_pair, make_batch
from .loop import TrainConfig, TrainResult, train, resolve_model_config

__all__ = [
    "LossBreakdown", "LossWeights", "RandomFeaturePyramid",
    "loss_total", "make_perceptual", "ssim",
    "PairSample", "sample_pair", "crop_pair", "make_batch",
    "TrainConfig", "TrainResult", "train", "resolve_model_config",
]
