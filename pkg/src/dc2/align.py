"""UW-to-W alignment: backward warping, pyramid block matching, occlusion estimation.

A :class:`WarpField` lives on the target (W) pixel grid and stores, per pixel,
the displacement to the sampling position in the source (UW) frame. Both the
oracle warps produced by the synthetic rig and the estimated warps from block
matching use this one type, so downstream consumers never care which mode
produced the field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from . import fileio

__all__ = [
    "WarpField",
    "BlockMatchConfig",
    "warp",
    "sample_bilinear",
    "estimate_warp",
    "estimate_occlusion",
]


@dataclass
class WarpField:
    """Per-pixel (dx, dy) displacement at target resolution plus a validity mask."""

    flow: np.ndarray           # (H, W, 2) float, [..., 0] = dx, [..., 1] = dy
    validity: np.ndarray = None  # (H, W) bool

    def __post_init__(self):
        self.flow = np.asarray(self.flow, dtype=np.float64)
        if self.flow.ndim != 3 or self.flow.shape[2] != 2:
            raise ValueError(f"flow must be (H, W, 2), got {self.flow.shape}")
        if not np.all(np.isfinite(self.flow)):
            raise ValueError("flow contains non-finite displacements")
        if self.validity is None:
            self.validity = np.ones(self.flow.shape[:2], dtype=bool)
        else:
            self.validity = np.asarray(self.validity, dtype=bool)
            if self.validity.shape != self.flow.shape[:2]:
                raise ValueError("validity shape mismatch")

    @property
    def shape(self) -> tuple[int, int]:
        return self.flow.shape[:2]

    def sample_positions(self) -> tuple[np.ndarray, np.ndarray]:
        h, w = self.shape
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        return xs + self.flow[..., 0], ys + self.flow[..., 1]

    def in_bounds(self, src_shape: tuple[int, int]) -> np.ndarray:
        """True where the sampling position falls inside the source frame."""
        xs, ys = self.sample_positions()
        sh, sw = src_shape[:2]
        return (xs >= 0) & (xs <= sw - 1) & (ys >= 0) & (ys <= sh - 1)

    @classmethod
    def zero(cls, h: int, w: int) -> "WarpField":
        return cls(np.zeros((h, w, 2)))

    def save(self, path) -> None:
        fileio.write_raw_map(path, self.flow)

    @classmethod
    def load(cls, path) -> "WarpField":
        flow = fileio.read_raw_map(path)
        if flow.ndim != 3:
            raise ValueError(f"{path} is not a 2-channel warp file")
        return cls(flow.astype(np.float64))


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                    fill: float = 0.0) -> np.ndarray:
    """Bilinear lookup of ``img`` at float positions; out-of-bounds gives ``fill``."""
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    inb = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    x = np.clip(xs, 0, w - 1)
    y = np.clip(ys, 0, h - 1)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    out = (img[y0, x0] * (1 - fx) * (1 - fy)
           + img[y0, x1] * fx * (1 - fy)
           + img[y1, x0] * (1 - fx) * fy
           + img[y1, x1] * fx * fy)
    out[~inb] = fill
    return out[..., 0] if squeeze else out


def warp(image: np.ndarray, warp_field: WarpField, fill: float = 0.0) -> np.ndarray:
    """Backward-warp ``image`` onto the field's target grid.

    Invalid samples (outside the source frame or flagged in the field) are
    filled with ``fill``; use :func:`warp_valid` for the corresponding mask.
    """
    image = np.asarray(image, dtype=np.float64)
    xs, ys = warp_field.sample_positions()
    out = sample_bilinear(image, xs, ys, fill=fill)
    bad = ~(warp_field.validity & warp_field.in_bounds(image.shape[:2]))
    out[bad] = fill
    return out


def warp_valid(image_shape: tuple[int, int], warp_field: WarpField) -> np.ndarray:
    """Mask of target pixels that received a real (in-bounds, valid) sample."""
    return warp_field.validity & warp_field.in_bounds(image_shape)


@dataclass(frozen=True)
class BlockMatchConfig:
    levels: int = 4
    block: int = 16
    search: int = 4          # +- pixels searched per pyramid level
    texture_floor: float = 1e-3  # per-block std below which a block is untrusted


def _to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    return img if img.ndim == 2 else img.mean(axis=2)


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h // 2 * 2, w // 2 * 2
    c = img[:h2, :w2]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _block_reduce_sum(arr: np.ndarray, block: int) -> np.ndarray:
    h, w = arr.shape
    ph, pw = (-h) % block, (-w) % block
    if ph or pw:
        arr = np.pad(arr, ((0, ph), (0, pw)), mode="edge")
    nh, nw = arr.shape[0] // block, arr.shape[1] // block
    return arr.reshape(nh, block, nw, block).sum(axis=(1, 3))


def _shift_masked(img: np.ndarray, ok: np.ndarray, ox: int, oy: int):
    """img(p + (ox, oy)); samples leaving the frame are zeroed and unmasked."""
    h, w = img.shape
    out = np.zeros_like(img)
    mask = np.zeros_like(ok)
    ys0, ys1 = max(0, -oy), min(h, h - oy)
    xs0, xs1 = max(0, -ox), min(w, w - ox)
    if ys0 < ys1 and xs0 < xs1:
        out[ys0:ys1, xs0:xs1] = img[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
        mask[ys0:ys1, xs0:xs1] = ok[ys0 + oy:ys1 + oy, xs0 + ox:xs1 + ox]
    return out, mask


def _warp_with_mask(src: np.ndarray, flow: np.ndarray):
    field = WarpField(flow)
    warped = sample_bilinear(src, *field.sample_positions(), fill=0.0)
    return warped, field.in_bounds(src.shape).astype(np.float64)


def estimate_warp(src: np.ndarray, ref: np.ndarray,
                  config: BlockMatchConfig = BlockMatchConfig()) -> WarpField:
    """Coarse-to-fine block-matching flow from ``ref`` (target grid) into ``src``.

    Each pyramid level first searches a global integer offset over the valid
    overlap, then refines per block; a small magnitude penalty makes ties
    resolve toward the smallest displacement, so identical inputs yield an
    exactly zero field. Blocks whose reference content is flat (std below the
    texture floor) keep the propagated displacement and report validity 0.
    """
    gs, gr = _to_gray(src), _to_gray(ref)
    if gs.shape != gr.shape:
        raise ValueError("block matching expects equal source/target dims")

    pyr_s, pyr_r = [gs], [gr]
    for _ in range(config.levels - 1):
        pyr_s.append(_downsample2(pyr_s[-1]))
        pyr_r.append(_downsample2(pyr_r[-1]))

    offsets = [(ox, oy)
               for ox in range(-config.search, config.search + 1)
               for oy in range(-config.search, config.search + 1)]
    offsets.sort(key=lambda o: (abs(o[0]) + abs(o[1]), abs(o[0]), abs(o[1])))
    penalty = 1e-7 * np.array([ox * ox + oy * oy for ox, oy in offsets])

    def block_costs(r, warped, ok, block):
        costs, counts = [], []
        for ox, oy in offsets:
            sh, m = _shift_masked(warped, ok, ox, oy)
            diff = (r - sh) * m
            costs.append(_block_reduce_sum(diff * diff, block))
            counts.append(_block_reduce_sum(m, block))
        return np.stack(costs), np.stack(counts)

    flow = np.zeros(pyr_r[-1].shape + (2,), dtype=np.float64)
    valid_blocks = None
    for level in range(config.levels - 1, -1, -1):
        r, s = pyr_r[level], pyr_s[level]
        h, w = r.shape
        if flow.shape[:2] != (h, w):
            flow = cv2.resize(flow * 2.0, (w, h), interpolation=cv2.INTER_LINEAR)

        # Pass 1: global integer offset over the whole valid overlap.
        warped, ok = _warp_with_mask(s, flow)
        costs, counts = block_costs(r, warped, ok, config.block)
        tot = costs.sum(axis=(1, 2)) / np.maximum(counts.sum(axis=(1, 2)), 1.0)
        g = np.argmin(tot + penalty)
        flow = flow + np.asarray(offsets[g], dtype=np.float64)

        # Pass 2: per-block residual around the refined flow.
        warped, ok = _warp_with_mask(s, flow)
        costs, counts = block_costs(r, warped, ok, config.block)
        norm = costs / np.maximum(counts, 1.0) + penalty[:, None, None]
        norm[counts < 0.25 * config.block ** 2] = np.inf  # mostly-invalid blocks
        best = np.argmin(norm, axis=0)
        resid = np.asarray(offsets, dtype=np.float64)[best]

        block_mean = _block_reduce_sum(r, config.block) / config.block ** 2
        nBy, nBx = block_mean.shape
        mean_up = np.repeat(np.repeat(block_mean, config.block, 0), config.block, 1)[:h, :w]
        block_var = _block_reduce_sum((r - mean_up) ** 2, config.block) / config.block ** 2
        textured = np.sqrt(block_var) > config.texture_floor
        resid[~textured] = 0.0

        centers_y = np.minimum(np.arange(nBy) * config.block + config.block // 2, h - 1)
        centers_x = np.minimum(np.arange(nBx) * config.block + config.block // 2, w - 1)
        block_flow = flow[np.ix_(centers_y, centers_x)] + resid
        block_flow[..., 0] = ndimage.median_filter(block_flow[..., 0], size=3, mode="nearest")
        block_flow[..., 1] = ndimage.median_filter(block_flow[..., 1], size=3, mode="nearest")

        flow = cv2.resize(block_flow, (w, h), interpolation=cv2.INTER_LINEAR)
        valid_blocks = textured

    h, w = pyr_r[0].shape
    validity = cv2.resize(valid_blocks.astype(np.uint8), (w, h),
                          interpolation=cv2.INTER_NEAREST).astype(bool)
    out = WarpField(flow, validity)
    out.validity &= out.in_bounds((h, w))
    return out


def estimate_occlusion(warp_fwd: WarpField, warp_bwd: WarpField,
                       threshold_px: float = 1.5) -> np.ndarray:
    """Occlusion mask on the forward field's grid via forward-backward consistency.

    A pixel is occluded when the round trip target -> source -> target lands
    strictly more than ``threshold_px`` away from where it started, or when
    either field has no valid sample for it.
    """
    if threshold_px < 0:
        raise ValueError("threshold_px must be >= 0")
    xs, ys = warp_fwd.sample_positions()
    bh, bw = warp_bwd.shape
    inb = (xs >= 0) & (xs <= bw - 1) & (ys >= 0) & (ys <= bh - 1)
    back = sample_bilinear(warp_bwd.flow, xs, ys, fill=np.nan)
    rt = warp_fwd.flow + back
    err = np.sqrt(rt[..., 0] ** 2 + rt[..., 1] ** 2)
    bwd_ok = sample_bilinear(warp_bwd.validity.astype(np.float64), xs, ys, fill=0.0) > 0.999
    occluded = ~warp_fwd.validity | ~inb | ~bwd_ok
    occluded |= np.where(np.isfinite(err), err > threshold_px, True)
    return occluded.astype(np.float64)
