"""Two-phase training loop for the detail fusion network."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..dfnet import ModelConfig, build_model, save_checkpoint
from ..synthcam.dataset import list_scenes, load_scene
from .losses import LossWeights, loss_total, make_perceptual
from .sampling import make_batch

__all__ = ["TrainConfig", "TrainResult", "train", "resolve_model_config"]

_ABLATIONS = ("none", "w-only", "uw-only", "no-occlusion")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    crop: int = 256
    lr_phase1: float = 1e-4
    steps_phase1: int = 2000
    lr_phase2: float = 1e-5
    steps_phase2: int = 1000
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    perceptual: str = "random"      # 'random' | 'none'
    model_preset: str = "tiny"      # 'tiny' | 'full'
    ablation: str = "none"
    log_every: int = 50
    ckpt_every: int = 0             # 0: final checkpoint only

    def __post_init__(self):
        if self.crop % 8:
            raise ValueError("crop must be divisible by 8")
        if self.steps_phase1 < 0 or self.steps_phase2 < 0:
            raise ValueError("step counts must be >= 0")
        if self.lr_phase1 <= 0 or self.lr_phase2 <= 0:
            raise ValueError("learning rates must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.ablation not in _ABLATIONS:
            raise ValueError(f"ablation must be one of {_ABLATIONS}")
        if self.model_preset not in ("tiny", "full"):
            raise ValueError("model_preset must be 'tiny' or 'full'")

    @property
    def total_steps(self) -> int:
        return self.steps_phase1 + self.steps_phase2

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["weights"] = vars(self.weights).copy()
        return d


def resolve_model_config(cfg: TrainConfig) -> ModelConfig:
    paths = "both"
    use_occ = True
    if cfg.ablation == "w-only":
        paths = "w-only"
    elif cfg.ablation == "uw-only":
        paths = "uw-only"
    elif cfg.ablation == "no-occlusion":
        use_occ = False
    if cfg.model_preset == "tiny":
        return ModelConfig.tiny(paths=paths, use_occlusion_input=use_occ)
    return ModelConfig(paths=paths, use_occlusion_input=use_occ)


@dataclass
class TrainResult:
    checkpoint: Path
    rows: list                  # logged metric dicts
    initial_total: float
    final_total: float


def train(dataset_dir, config: TrainConfig, out_ckpt, log_csv=None,
          progress=None) -> TrainResult:
    """Run the two-phase schedule and write the final checkpoint.

    Deterministic for a fixed seed: sampling uses one numpy generator, model
    init and torch ops are seeded, data loading is single-worker.
    Raises on an empty dataset; aborts with a diagnostic if the loss goes
    non-finite.
    """
    folders = list_scenes(dataset_dir)
    if not folders:
        raise FileNotFoundError(f"no scenes under {dataset_dir}")
    scenes = [load_scene(f) for f in folders]
    h, w = scenes[0].aif.shape[:2]
    if config.crop > min(h, w):
        raise ValueError(f"crop {config.crop} exceeds scene dims {(h, w)}")

    torch.manual_seed(config.seed)
    torch.set_flush_denormal(True)
    rng = np.random.default_rng(config.seed)
    model = build_model(resolve_model_config(config), seed=config.seed)
    model.train()
    perceptual = make_perceptual(config.perceptual)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr_phase1)

    rows = []
    initial_total = final_total = float("nan")
    out_ckpt = Path(out_ckpt)

    def log_row(step, lr, breakdown):
        sums = breakdown.component_sums()
        row = {"step": step, "lr": lr, **sums}
        rows.append(row)
        if progress is not None:
            progress(row)

    t_start = time.time()
    for step in range(1, config.total_steps + 1):
        lr = config.lr_phase1 if step <= config.steps_phase1 else config.lr_phase2
        for group in opt.param_groups:
            group["lr"] = lr

        batch, target = make_batch(scenes, config.batch_size, config.crop, rng)
        out = model(batch)
        breakdown = loss_total(out, target, perceptual=perceptual,
                               weights=config.weights)
        if not torch.isfinite(breakdown.total):
            raise RuntimeError(
                f"non-finite loss at step {step}: "
                f"{breakdown.component_sums()} (lr={lr}, seed={config.seed})")
        opt.zero_grad()
        breakdown.total.backward()
        opt.step()

        total_f = float(breakdown.total.detach())
        if step == 1:
            initial_total = total_f
        final_total = total_f
        if step == 1 or step % config.log_every == 0 or step == config.total_steps:
            log_row(step, lr, breakdown)
        if config.ckpt_every and step % config.ckpt_every == 0:
            save_checkpoint(out_ckpt.with_suffix(f".step{step}.ckpt"), model,
                            meta=_meta(config, step, dataset_dir))

    model.eval()
    save_checkpoint(out_ckpt, model,
                    meta=_meta(config, config.total_steps, dataset_dir,
                               elapsed_s=time.time() - t_start,
                               final_total=final_total))
    if log_csv is not None and rows:
        with open(log_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return TrainResult(checkpoint=out_ckpt, rows=rows,
                       initial_total=initial_total, final_total=final_total)


def _meta(config: TrainConfig, step: int, dataset_dir, **extra) -> dict:
    return {"train_config": config.to_dict(), "step": step,
            "dataset": str(dataset_dir), **extra}
