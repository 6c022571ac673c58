"""Composite reconstruction loss over all output scales.

Per scale: L1 on pixels, L1 on stacked forward-difference gradients,
(1 - SSIM) and a perceptual feature distance, all unit-weighted by default
and summed across the four scales.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..dfnet import MultiScaleOutput, SCALE_FACTORS

__all__ = ["LossBreakdown", "LossWeights", "ssim", "loss_total",
           "RandomFeaturePyramid", "make_perceptual"]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _gaussian1d(window: int, sigma: float, dtype, device) -> torch.Tensor:
    half = window // 2
    xs = torch.arange(-half, half + 1, dtype=dtype, device=device)
    k = torch.exp(-(xs ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def ssim(x: torch.Tensor, y: torch.Tensor, window: int = SSIM_WINDOW,
         sigma: float = SSIM_SIGMA, k1: float = SSIM_K1, k2: float = SSIM_K2,
         data_range: float = 1.0) -> torch.Tensor:
    """Mean gaussian-weighted SSIM over the valid (margin-cropped) region.

    Images smaller than the window fall back to the largest odd window that
    fits, with sigma scaled proportionally.
    """
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    h, w = x.shape[-2:]
    fit = min(window, h if h % 2 else h - 1, w if w % 2 else w - 1)
    if fit < window:
        sigma = sigma * fit / window
        window = fit
    c = x.shape[1]
    planes = torch.cat([x, y, x * x, y * y, x * y], dim=1)
    g = _gaussian1d(window, sigma, x.dtype, x.device)
    k_row = g.view(1, 1, 1, window).expand(5 * c, 1, 1, window)
    k_col = g.view(1, 1, window, 1).expand(5 * c, 1, window, 1)
    filtered = F.conv2d(F.conv2d(planes, k_row, groups=5 * c), k_col, groups=5 * c)
    mu_x, mu_y, xx, yy, xy = torch.split(filtered, c, dim=1)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return (num / den).mean()


def _forward_diff(img: torch.Tensor) -> torch.Tensor:
    """Stacked (dx, dy) forward differences with replicate boundary (edge diff 0)."""
    gx = img[..., :, 1:] - img[..., :, :-1]
    gy = img[..., 1:, :] - img[..., :-1, :]
    gx = F.pad(gx, (0, 1, 0, 0))
    gy = F.pad(gy, (0, 0, 0, 1))
    return torch.cat([gx, gy], dim=1)


class RandomFeaturePyramid(nn.Module):
    """Fixed random-weight conv pyramid used as the default perceptual backend.

    Three stride-2 stages with a seed-deterministic init; weights never train.
    Random deep features are a serviceable stand-in for a pretrained network
    at this scale, and the backend is swappable via :func:`make_perceptual`.
    """

    SEED = 0x0DC2

    def __init__(self):
        super().__init__()
        gen = torch.Generator().manual_seed(self.SEED)
        chans = [3, 12, 16, 20]
        layers = []
        for cin, cout in zip(chans, chans[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            nn.init.kaiming_uniform_(conv.weight, a=0.2, generator=gen)
            nn.init.zeros_(conv.bias)
            layers.append(conv)
        self.convs = nn.ModuleList(layers)
        self.act = nn.SiLU()
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, x: torch.Tensor) -> list:
        feats = []
        for conv in self.convs:
            x = self.act(conv(x))
            feats.append(x)
        return feats

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        fa = self.features(a)
        with torch.no_grad():
            fb = self.features(b)
        dist = sum((x - y).abs().mean() for x, y in zip(fa, fb))
        return dist / len(fa)


def make_perceptual(kind: str):
    """Perceptual backend selector: 'random' or 'none' (extension point for
    pretrained feature networks)."""
    if kind == "random":
        return RandomFeaturePyramid()
    if kind == "none":
        return None
    raise ValueError(f"unknown perceptual backend {kind!r}")


@dataclass(frozen=True)
class LossWeights:
    l1_pixel: float = 1.0
    l1_grad: float = 1.0
    ssim: float = 1.0
    perceptual: float = 1.0


def _val(x) -> float:
    return float(x.detach()) if torch.is_tensor(x) else float(x)


@dataclass
class LossBreakdown:
    """Per-scale components plus the grand total (torch scalars)."""

    per_scale: list            # one dict per scale factor, coarse to fine
    total: torch.Tensor
    scale_factors: tuple = SCALE_FACTORS

    def component_sums(self) -> dict:
        out = {}
        for key in ("l1_pixel", "l1_grad", "ssim", "perceptual", "total"):
            out[key] = float(sum(_val(s[key]) for s in self.per_scale))
        return out

    def floats(self) -> list:
        return [{k: _val(v) for k, v in s.items()} for s in self.per_scale]


def loss_total(output: MultiScaleOutput, target_w: torch.Tensor,
               perceptual: nn.Module | None = None,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Sum the four-term reconstruction loss over every output scale.

    ``target_w`` is the full-resolution target; coarser targets come from
    area averaging.
    """
    if target_w.shape[-2:] != output.blended[-1].shape[-2:]:
        raise ValueError("target does not match the full-scale output dims")
    per_scale = []
    total = None
    for blended, f in zip(output.blended, SCALE_FACTORS):
        t = F.avg_pool2d(target_w, f) if f > 1 else target_w
        l1_pix = (blended - t).abs().mean()
        l1_grad = (_forward_diff(blended) - _forward_diff(t)).abs().mean()
        ssim_term = 1.0 - ssim(blended, t)
        if perceptual is not None:
            perc = perceptual(blended, t)
        else:
            perc = torch.zeros((), dtype=blended.dtype)
        scale_total = (weights.l1_pixel * l1_pix + weights.l1_grad * l1_grad
                       + weights.ssim * ssim_term + weights.perceptual * perc)
        per_scale.append({"l1_pixel": l1_pix, "l1_grad": l1_grad,
                          "ssim": ssim_term, "perceptual": perc,
                          "total": scale_total})
        total = scale_total if total is None else total + scale_total
    return LossBreakdown(per_scale=per_scale, total=total)
