"""Detail fusion network: W and UW refinement paths plus mask-predicting fusion.

Both refinement paths are encoder-decoder nets whose per-scale heads predict
dynamic 3x3 kernels, a residual and a coarse/fine blend, so each scale can
sharpen, blur or pass content through per pixel. The fusion module runs one
dilated-conv pyramid block per scale, coarse to fine, feeding each block the
refined pair and the upsampled previous mask (with a residual connection on
the mask logits), and normalises the two mask channels with a softmax so the
blended output is always a pointwise convex combination.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig, N_SCALES, SCALE_FACTORS

__all__ = ["NetInput", "MultiScaleOutput", "DFNet", "build_model", "radial_mask",
           "forward_single", "inspect"]


def radial_mask(full_dims: tuple[int, int], crop_offset: tuple[int, int],
                crop_dims: tuple[int, int]) -> np.ndarray:
    """Distance-from-full-image-center plane for a crop, normalised so the
    full image's (0, 0) corner is exactly 1.

    ``full_dims``/``crop_dims`` are (height, width); ``crop_offset`` is (x, y)
    in full-image pixels.
    """
    fh, fw = full_dims
    ch, cw = crop_dims
    ox, oy = crop_offset
    if ox < 0 or oy < 0 or ox + cw > fw or oy + ch > fh:
        raise ValueError(f"crop {crop_dims}@{crop_offset} leaves full image {full_dims}")
    cx, cy = fw / 2.0, fh / 2.0
    xs = np.arange(ox, ox + cw, dtype=np.float64)
    ys = np.arange(oy, oy + ch, dtype=np.float64)
    dist = np.hypot(xs[None, :] - cx, ys[:, None] - cy)
    return dist / np.hypot(cx, cy)


@dataclass
class NetInput:
    """Full set of network planes for one sample (numpy, HxW layout)."""

    w_image: np.ndarray        # (H, W, 3)
    uw_warped: np.ndarray      # (H, W, 3)
    occlusion: np.ndarray      # (H, W)
    ref_defocus: np.ndarray    # (H, W) CoC radii in px
    tgt_defocus: np.ndarray    # (H, W)
    crop_offset: tuple[int, int] = (0, 0)
    full_dims: tuple[int, int] = None     # (H, W) of the source image

    def __post_init__(self):
        h, w = self.w_image.shape[:2]
        if self.full_dims is None:
            self.full_dims = (h, w)
        for name in ("uw_warped", "occlusion", "ref_defocus", "tgt_defocus"):
            if getattr(self, name).shape[:2] != (h, w):
                raise ValueError(f"{name} does not match w_image dims")
        if np.any(self.ref_defocus < 0) or np.any(self.tgt_defocus < 0):
            raise ValueError("defocus planes must be non-negative")

    @property
    def radial(self) -> np.ndarray:
        h, w = self.w_image.shape[:2]
        return radial_mask(self.full_dims, self.crop_offset, (h, w))

    def to_tensors(self) -> dict:
        def chw(a):
            a = np.asarray(a, dtype=np.float32)
            if a.ndim == 2:
                a = a[..., None]
            return torch.from_numpy(np.ascontiguousarray(a.transpose(2, 0, 1)))
        return {
            "w": chw(self.w_image), "uw": chw(self.uw_warped),
            "occlusion": chw(self.occlusion),
            "ref_defocus": chw(self.ref_defocus), "tgt_defocus": chw(self.tgt_defocus),
            "radial": chw(self.radial),
        }


def collate(inputs: list[NetInput]) -> dict:
    stacked = {}
    for key in ("w", "uw", "occlusion", "ref_defocus", "tgt_defocus", "radial"):
        stacked[key] = torch.stack([inp.to_tensors()[key] for inp in inputs])
    return stacked


@dataclass
class MultiScaleOutput:
    """Per-scale tensors, coarse to fine: scale factors (8, 4, 2, 1)."""

    refined_w: list
    refined_uw: list
    masks: list        # (B, 2, h, w) each, channels sum to 1
    blended: list

    scale_factors = SCALE_FACTORS

    def full(self, key: str = "blended") -> torch.Tensor:
        return getattr(self, key)[-1]


def _apply_dynamic_kernel(img: torch.Tensor, kernels: torch.Tensor) -> torch.Tensor:
    """Per-pixel 3x3 filtering: img (B,C,H,W), kernels (B,9,H,W) summing to 1."""
    b, c, h, w = img.shape
    padded = F.pad(img, (1, 1, 1, 1), mode="replicate")
    win = F.unfold(padded, kernel_size=3).view(b, c, 9, h, w)
    return (win * kernels.unsqueeze(1)).sum(dim=2)


def _conv(in_ch, out_ch, separable, stride=1, dilation=1):
    pad = dilation
    if separable and in_ch >= 4:
        return nn.Sequential(
            nn.Conv2d(in_ch, in_ch, 3, stride=stride, padding=pad,
                      dilation=dilation, groups=in_ch),
            nn.Conv2d(in_ch, out_ch, 1),
        )
    return nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=pad, dilation=dilation)


class _RefineHead(nn.Module):
    """Predicts a 3x3 kernel for the in-scale base image, per-pixel RGB gains,
    an optional second kernel for the carried coarse output, a blend logit
    and an RGB residual.

    The gains matter: softmax kernels are convex, so without them a path
    could never scale colours, and the UW path must undo the rig's white
    balance mismatch. With ``upsample`` the prediction runs at the feature
    resolution and the result planes are bilinearly upsampled before being
    applied, so the scale-1 output never needs full-resolution convolutions.
    """

    def __init__(self, feat_ch: int, separable: bool, carry_kernel: bool,
                 upsample: int = 1):
        super().__init__()
        self.carry_kernel = carry_kernel
        self.out_ch = 25 if carry_kernel else 16
        self.conv = _conv(feat_ch, self.out_ch, separable)
        self.upsample = upsample

    def forward(self, feat, base_img, carried):
        raw = self.conv(feat)
        if self.upsample > 1:
            raw = F.interpolate(raw, scale_factor=self.upsample, mode="bilinear",
                                align_corners=False)
        k_base = torch.softmax(raw[:, 0:9], dim=1)
        n = 18 if self.carry_kernel else 9
        alpha = torch.sigmoid(raw[:, n:n + 1])
        residual = 0.1 * raw[:, n + 1:n + 4]
        gain = 1.0 + 0.5 * torch.tanh(raw[:, n + 4:n + 7])
        out = gain * _apply_dynamic_kernel(base_img, k_base)
        if carried is not None:
            if self.carry_kernel:
                carried = _apply_dynamic_kernel(carried, torch.softmax(raw[:, 9:18], dim=1))
            out = alpha * out + (1 - alpha) * carried
        return torch.clamp(out + residual, 0.0, 1.0)


class RefinementPath(nn.Module):
    """Four-scale encoder-decoder emitting refined images at 1/8..1/1.

    ``full_res_path`` keeps features at every scale including 1x; the lean
    variant stems with stride 2 and reuses the 1/2-res features for the 1x
    head (kernel planes upsampled), which is where CPU budgets go to die
    otherwise.
    """

    def __init__(self, in_ch: int, cfg: ModelConfig):
        super().__init__()
        b = cfg.base_channels
        sep = cfg.separable
        act = nn.SiLU
        self.full_res = cfg.full_res_path

        def stage(cin, cout, stride=1, n=cfg.refine_blocks):
            layers = [_conv(cin, cout, sep, stride=stride), act()]
            for _ in range(n - 1):
                layers += [_conv(cout, cout, sep), act()]
            return nn.Sequential(*layers)

        if self.full_res:
            chans = [b, 2 * b, 3 * b, 4 * b]  # scales 1, 1/2, 1/4, 1/8
            self.stem = stage(in_ch, chans[0])
            self.enc = nn.ModuleList([stage(chans[i], chans[i + 1], stride=2)
                                      for i in range(3)])
            self.mid = stage(chans[3], chans[3])
            self.dec = nn.ModuleList([stage(chans[3 - i] + chans[2 - i], chans[2 - i])
                                      for i in range(3)])
            self.heads = nn.ModuleList(
                [_RefineHead(chans[3 - i], sep, cfg.carry_kernel) for i in range(4)])
        else:
            chans = [b, int(1.5 * b), 2 * b]  # scales 1/2, 1/4, 1/8
            self.stem = stage(in_ch, chans[0], stride=2)
            self.enc = nn.ModuleList([stage(chans[i], chans[i + 1], stride=2)
                                      for i in range(2)])
            self.mid = stage(chans[2], chans[2])
            self.dec = nn.ModuleList([stage(chans[2 - i] + chans[1 - i], chans[1 - i])
                                      for i in range(2)])
            self.heads = nn.ModuleList([
                _RefineHead(chans[2], sep, cfg.carry_kernel),     # 1/8
                _RefineHead(chans[1], sep, cfg.carry_kernel),     # 1/4
                _RefineHead(chans[0], sep, cfg.carry_kernel),     # 1/2
                _RefineHead(chans[0], sep, cfg.carry_kernel, upsample=2),  # 1x
            ])

    def forward(self, planes: torch.Tensor, image: torch.Tensor) -> list:
        bases = [F.avg_pool2d(image, f) if f > 1 else image for f in SCALE_FACTORS]

        skips = [self.stem(planes)]
        for enc in self.enc:
            skips.append(enc(skips[-1]))
        feat = self.mid(skips[-1])

        refined = [self.heads[0](feat, bases[0], None)]
        for i, dec in enumerate(self.dec):
            up = F.interpolate(feat, scale_factor=2, mode="bilinear", align_corners=False)
            feat = dec(torch.cat([up, skips[len(self.dec) - 1 - i]], dim=1))
            carried = F.interpolate(refined[-1], scale_factor=2, mode="bilinear",
                                    align_corners=False)
            refined.append(self.heads[i + 1](feat, bases[i + 1], carried))

        if not self.full_res:
            carried = F.interpolate(refined[-1], scale_factor=2, mode="bilinear",
                                    align_corners=False)
            refined.append(self.heads[3](feat, bases[3], carried))
        return refined  # coarse to fine


class _AsppStage(nn.Module):
    def __init__(self, in_ch, out_ch, rates, separable):
        super().__init__()
        self.branches = nn.ModuleList(
            [_conv(in_ch, out_ch, separable, dilation=r) for r in rates])
        self.project = nn.Conv2d(out_ch * len(rates), out_ch, 1)

    def forward(self, x):
        return self.project(torch.cat([b(x) for b in self.branches], dim=1))


class FusionBlock(nn.Module):
    """One per-scale blending block: stacked multi-rate dilated stages."""

    def __init__(self, in_ch, rates, channels, separable, entry_channels=0):
        super().__init__()
        self.entry = None
        if entry_channels and in_ch > entry_channels:
            self.entry = nn.Conv2d(in_ch, entry_channels, 1)
            in_ch = entry_channels
        stages = []
        cur = in_ch
        for ch in channels:
            stages.append(_AsppStage(cur, ch, rates, separable))
            cur = ch
        self.stages = nn.ModuleList(stages)
        self.act = nn.SiLU()

    def forward(self, x):
        if self.entry is not None:
            x = self.act(self.entry(x))
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i < len(self.stages) - 1:
                x = self.act(x)
        return x  # (B, 2, h, w) mask logits


class DFNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        if config.paths in ("both", "w-only"):
            self.w_path = RefinementPath(config.w_in_channels, config)
        if config.paths in ("both", "uw-only"):
            self.uw_path = RefinementPath(config.uw_in_channels, config)
        if config.paths == "both":
            # refined pair + defocus maps + occlusion/radial. The defocus maps
            # are essential here: they tell the mask predictor where the W
            # content lacks detail (large reference CoC) versus where it is
            # already the best source, which image content alone undersells.
            fusion_in = 6 + 2 + (1 if config.use_occlusion_input else 0) \
                + (1 if config.use_radial_mask else 0)
            blocks = []
            for i, entry in enumerate(config.aspp):
                in_ch = fusion_in + (2 if i > 0 else 0)  # + upsampled previous mask
                blocks.append(FusionBlock(in_ch, entry["rates"], entry["channels"],
                                          config.separable,
                                          entry_channels=config.fusion_entry_channels))
            self.fusion = nn.ModuleList(blocks)

    def _gather(self, batch, keys):
        planes = []
        s = self.config.defocus_scale
        for key in keys:
            t = batch[key]
            if key in ("ref_defocus", "tgt_defocus"):
                t = t * s
            planes.append(t)
        return torch.cat(planes, dim=1)

    def forward(self, batch: dict) -> MultiScaleOutput:
        cfg = self.config
        h, w = batch["w"].shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"input dims must be divisible by 8, got {(h, w)}")

        w_keys = ["w", "ref_defocus", "tgt_defocus"]
        uw_keys = ["uw"] + (["occlusion"] if cfg.use_occlusion_input else []) \
            + ["tgt_defocus"]
        if cfg.use_radial_mask:
            w_keys.append("radial")
            uw_keys.append("radial")

        if cfg.paths == "w-only":
            refined_w = self.w_path(self._gather(batch, w_keys), batch["w"])
            refined_uw = [torch.zeros_like(r) for r in refined_w]
            masks = [self._fixed_mask(r, 0) for r in refined_w]
        elif cfg.paths == "uw-only":
            refined_uw = self.uw_path(self._gather(batch, uw_keys), batch["uw"])
            refined_w = [torch.zeros_like(r) for r in refined_uw]
            masks = [self._fixed_mask(r, 1) for r in refined_uw]
        else:
            refined_w = self.w_path(self._gather(batch, w_keys), batch["w"])
            refined_uw = self.uw_path(self._gather(batch, uw_keys), batch["uw"])
            masks = self._fuse(batch, refined_w, refined_uw)

        blended = [m[:, 0:1] * rw + m[:, 1:2] * ruw
                   for m, rw, ruw in zip(masks, refined_w, refined_uw)]
        return MultiScaleOutput(refined_w=refined_w, refined_uw=refined_uw,
                                masks=masks, blended=blended)

    @staticmethod
    def _fixed_mask(ref: torch.Tensor, channel: int) -> torch.Tensor:
        b, _, h, w = ref.shape
        m = torch.zeros(b, 2, h, w, dtype=ref.dtype, device=ref.device)
        m[:, channel] = 1.0
        return m

    def _fuse(self, batch, refined_w, refined_uw):
        cfg = self.config
        s = cfg.defocus_scale
        extra = [batch["ref_defocus"] * s, batch["tgt_defocus"] * s]
        if cfg.use_occlusion_input:
            extra.append(batch["occlusion"])
        if cfg.use_radial_mask:
            extra.append(batch["radial"])
        masks = []
        prev_mask = None
        for i, block in enumerate(self.fusion):
            f = SCALE_FACTORS[i]
            # The finest block may run at 1/2 resolution; its softmax mask is
            # upsampled afterwards, which preserves sum-to-1 exactly.
            half_finest = cfg.fusion_finest_at_half and f == 1
            eval_f = 2 if half_finest else f
            rw, ruw = refined_w[i], refined_uw[i]
            if half_finest:
                rw, ruw = F.avg_pool2d(rw, 2), F.avg_pool2d(ruw, 2)
            planes = [rw, ruw]
            planes += [F.avg_pool2d(e, eval_f) if eval_f > 1 else e for e in extra]
            if prev_mask is not None:
                if half_finest:
                    up = prev_mask  # previous (1/2) mask is already at eval res
                else:
                    up = F.interpolate(prev_mask, scale_factor=2, mode="bilinear",
                                       align_corners=False)
                planes.append(up)
                logits = block(torch.cat(planes, dim=1)) + up  # residual on logits
            else:
                logits = block(torch.cat(planes, dim=1))
            mask = torch.softmax(logits, dim=1)
            prev_mask = mask
            if half_finest:
                mask = F.interpolate(mask, scale_factor=2, mode="bilinear",
                                     align_corners=False)
            masks.append(mask)
        return masks


def build_model(config: ModelConfig, seed: int = 0) -> DFNet:
    """Construct and deterministically initialise a DFNet."""
    model = DFNet(config)
    gen = torch.Generator().manual_seed(seed)
    for m in model.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_uniform_(m.weight, a=0.2, generator=gen)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    for path_name in ("w_path", "uw_path"):
        path = getattr(model, path_name, None)
        if path is None:
            continue
        for head in path.heads:
            conv = head.conv[-1] if isinstance(head.conv, nn.Sequential) else head.conv
            n = 18 if head.carry_kernel else 9
            with torch.no_grad():
                conv.weight.mul_(0.1)
                conv.bias[4] = 2.0    # base-kernel centre tap: near-identity start
                if head.carry_kernel:
                    conv.bias[13] = 2.0   # carry-kernel centre tap
                conv.bias[n] = 1.5    # favour the in-scale base image early
    if hasattr(model, "fusion"):
        for block in model.fusion:
            with torch.no_grad():
                # bias the untrained model toward passing W through (~0.8/0.2)
                block.stages[-1].project.bias.copy_(torch.tensor([0.693, -0.693]))
    return model


def forward_single(model: DFNet, inp: NetInput) -> MultiScaleOutput:
    """Run one sample without gradients; outputs stay torch (B=1)."""
    model.eval()
    with torch.no_grad():
        return model(collate([inp]))


def inspect(model: DFNet, inp: NetInput, panel_path=None) -> dict:
    """Full-resolution intermediates from the same graph as forward."""
    out = forward_single(model, inp)

    def np_img(t):
        return t[0].permute(1, 2, 0).numpy().astype(np.float64)

    result = {
        "refined_w": np_img(out.refined_w[-1]),
        "refined_uw": np_img(out.refined_uw[-1]),
        "mask_w": out.masks[-1][0, 0].numpy().astype(np.float64),
        "mask_uw": out.masks[-1][0, 1].numpy().astype(np.float64),
        "blended": np_img(out.blended[-1]),
    }
    if panel_path is not None:
        from .. import fileio
        def rgb(a):
            return np.repeat(a[..., None], 3, axis=2) if a.ndim == 2 else a
        top = np.concatenate([inp.w_image, inp.uw_warped, result["blended"]], axis=1)
        bottom = np.concatenate([result["refined_w"], result["refined_uw"],
                                 rgb(result["mask_uw"])], axis=1)
        fileio.save_image(panel_path, np.concatenate([top, bottom], axis=0))
    return result
