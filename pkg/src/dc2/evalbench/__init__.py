"""Evaluation: metrics, FoV alignment, task protocols, ablations."""

from .metrics import psnr, ssim, mse
from .fov import AlignParams, SearchGrid, fov_align, apply_align
from .tasks import (
    EvalConfig,
    MetricReport,
    model_runner,
    copy_input_runner,
    classical_bokeh_runner,
    eval_deblur,
    eval_bokeh,
    eval_refocus,
    run_ablations,
    ablation_table,
)

__all__ = [
    "psnr", "ssim", "mse",
    "AlignParams", "SearchGrid", "fov_align", "apply_align",
    "EvalConfig", "MetricReport", "model_runner", "copy_input_runner",
    "classical_bokeh_runner", "eval_deblur", "eval_bokeh", "eval_refocus",
    "run_ablations", "ablation_table",
]
