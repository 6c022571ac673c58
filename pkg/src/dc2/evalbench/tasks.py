"""Evaluation protocols: defocus deblurring, bokeh synthesis, refocus, ablations.

All three tasks drive a *runner* (checkpointed model, copy baseline, or the
classical renderer) through the same NetInput interface and score with
PSNR/SSIM, so every number in a report is produced by one code path. One
checkpoint serves all tasks; only the target defocus map changes.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .. import synthcam
from ..dfnet import NetInput, forward_single, load_checkpoint, checkpoint_id
from ..optics import DepthMap, LensState
from ..synthcam.dataset import LoadedScene, list_scenes, load_scene
from .fov import AlignParams, SearchGrid, fov_align, apply_align
from .metrics import psnr, ssim

__all__ = [
    "MetricReport", "EvalConfig",
    "model_runner", "copy_input_runner", "classical_bokeh_runner",
    "eval_deblur", "eval_bokeh", "eval_refocus", "run_ablations",
]


@dataclass
class MetricReport:
    task: str
    model_id: str
    alignment: str                    # 'fov' or 'none'
    rows: list = field(default_factory=list)

    def add(self, scene: str, item: str, p: float, s: float, params=None):
        row = {"scene": scene, "item": item, "psnr": p, "ssim": s}
        if params is not None:
            row.update({"scale": params.scale, "tx": params.tx, "ty": params.ty})
        self.rows.append(row)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r["psnr"] for r in self.rows]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r["ssim"] for r in self.rows]))

    def write_csv(self, path) -> None:
        fields = list(self.rows[0].keys()) if self.rows else ["scene", "item"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)
            writer.writerow({fields[0]: "mean", "psnr": self.mean_psnr,
                             "ssim": self.mean_ssim}
                            if "psnr" in fields else {})

    def summary(self) -> dict:
        return {"task": self.task, "model": self.model_id,
                "alignment": self.alignment, "n": len(self.rows),
                "mean_psnr": self.mean_psnr, "mean_ssim": self.mean_ssim}


@dataclass(frozen=True)
class EvalConfig:
    seed: int = 0
    align_deblur: bool = True
    use_merged_aif: bool = False      # focus-stack merge instead of exact AIF
    pairs_per_scene: int = 6          # refocus pairs sampled per scene
    search: SearchGrid = field(default_factory=SearchGrid)


def model_runner(ckpt_path):
    """Runner backed by a checkpoint; scores under its content hash."""
    model, _ = load_checkpoint(ckpt_path)

    def run(inp: NetInput, ctx: dict) -> np.ndarray:
        out = forward_single(model, inp)
        return out.blended[-1][0].permute(1, 2, 0).numpy().astype(np.float64)

    run.model_id = checkpoint_id(ckpt_path)
    return run


def copy_input_runner(name: str = "copy-input"):
    """Pass-through baseline: the prediction is the W input itself."""

    def run(inp: NetInput, ctx: dict) -> np.ndarray:
        return inp.w_image

    run.model_id = name
    return run


def classical_bokeh_runner():
    """Classical layered-renderer baseline for the bokeh task: blurs the AIF
    with the target slice's physical lens state."""

    def run(inp: NetInput, ctx: dict) -> np.ndarray:
        scene: LoadedScene = ctx["scene"]
        lens: LensState = ctx["tgt_lens"]
        rgbd = synthcam.SceneRGBD(inp.w_image, DepthMap(scene.depth.values_mm))
        img, _ = synthcam.render_defocused(rgbd, scene.rig.w_cam, lens)
        return img

    run.model_id = "classical-renderer"
    return run


def _score(report: MetricReport, scene_name: str, item: str,
           pred: np.ndarray, gt: np.ndarray, align: bool, grid: SearchGrid):
    if align:
        params, aligned = fov_align(pred, gt, grid)
        _, rect = apply_align(pred, params)
        y0, y1, x0, x1 = rect
        a, b = aligned[y0:y1, x0:x1], gt[y0:y1, x0:x1]
        report.add(scene_name, item, psnr(a, b), ssim(a, b), params)
    else:
        report.add(scene_name, item, psnr(pred, gt), ssim(pred, gt))


def _scenes(dataset_dir) -> list:
    return [load_scene(f) for f in list_scenes(dataset_dir)]


def eval_deblur(runner, dataset_dir, cfg: EvalConfig = EvalConfig()) -> MetricReport:
    """Zero target map against the all-in-focus ground truth.

    Every runner goes through the same FoV alignment before scoring,
    pass-through baselines included.
    """
    report = MetricReport("deblur", getattr(runner, "model_id", "?"),
                          "fov" if cfg.align_deblur else "none")
    for scene in _scenes(dataset_dir):
        gt = (synthcam.merge_by_sharpness(scene.slices)
              if cfg.use_merged_aif else scene.aif)
        zeros = np.zeros(scene.aif.shape[:2])
        for i in range(scene.n_slices):
            inp = NetInput(w_image=scene.slices[i], uw_warped=scene.uw_warped,
                           occlusion=scene.occlusion,
                           ref_defocus=scene.defocus[i], tgt_defocus=zeros)
            pred = runner(inp, {"scene": scene, "slice": i})
            _score(report, scene.folder.name, f"slice{i}", pred, gt,
                   cfg.align_deblur, cfg.search)
    return report


def eval_bokeh(runner, dataset_dir, cfg: EvalConfig = EvalConfig()) -> MetricReport:
    """All-in-focus input, per-slice target defocus maps, scored per slice."""
    report = MetricReport("bokeh", getattr(runner, "model_id", "?"), "none")
    for scene in _scenes(dataset_dir):
        aif = scene.aif
        zeros = np.zeros(aif.shape[:2])
        for j in range(scene.n_slices):
            inp = NetInput(w_image=aif, uw_warped=scene.uw_warped,
                           occlusion=scene.occlusion,
                           ref_defocus=zeros, tgt_defocus=scene.defocus[j])
            pred = runner(inp, {"scene": scene, "slice": j,
                                "tgt_lens": scene.lenses[j]})
            _score(report, scene.folder.name, f"slice{j}", pred,
                   scene.slices[j], False, cfg.search)
    return report


def eval_refocus(runner, dataset_dir, cfg: EvalConfig = EvalConfig()) -> MetricReport:
    """Seed-deterministic (reference, target) pairs; never ref == tgt."""
    report = MetricReport("refocus", getattr(runner, "model_id", "?"), "none")
    rng = np.random.default_rng(cfg.seed)
    for scene in _scenes(dataset_dir):
        for k in range(cfg.pairs_per_scene):
            i, j = (int(v) for v in rng.choice(scene.n_slices, 2, replace=False))
            inp = NetInput(w_image=scene.slices[i], uw_warped=scene.uw_warped,
                           occlusion=scene.occlusion,
                           ref_defocus=scene.defocus[i],
                           tgt_defocus=scene.defocus[j])
            pred = runner(inp, {"scene": scene, "ref": i, "tgt": j})
            _score(report, scene.folder.name, f"{i}->{j}", pred,
                   scene.slices[j], False, cfg.search)
    return report


def run_ablations(dataset_dir, checkpoints: dict,
                  cfg: EvalConfig = EvalConfig()) -> list:
    """One refocus report per ablation checkpoint; 'full' must be present.

    Returns summary rows; render with :func:`ablation_table`.
    """
    if "full" not in checkpoints:
        raise ValueError("ablation set must include the 'full' checkpoint")
    rows = []
    for name, ckpt in checkpoints.items():
        report = eval_refocus(model_runner(ckpt), dataset_dir, cfg)
        rows.append({"config": name, "mean_psnr": report.mean_psnr,
                     "mean_ssim": report.mean_ssim, "n": len(report.rows),
                     "checkpoint": str(ckpt)})
    return rows


def ablation_table(rows: list, csv_path=None) -> str:
    """CSV (optional) + markdown rendering of ablation summaries."""
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    lines = ["| config | mean PSNR (dB) | mean SSIM | n |",
             "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {r['config']} | {r['mean_psnr']:.2f} | "
                     f"{r['mean_ssim']:.4f} | {r['n']} |")
    return "\n".join(lines)
