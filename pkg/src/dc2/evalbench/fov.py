"""Brute-force field-of-view alignment: exhaustive scale + translation search.

The search evaluates MSE over one fixed central window for every candidate
(same pixel set for all, so candidates compare fairly), using FFT
cross-correlation to sweep all integer translations of a scale at once.
Candidates are ordered identity-first so exact ties keep the smallest
transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..align import sample_bilinear

__all__ = ["AlignParams", "SearchGrid", "fov_align", "apply_align"]


@dataclass(frozen=True)
class AlignParams:
    scale: float
    tx: float
    ty: float

    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.tx == 0.0 and self.ty == 0.0


@dataclass(frozen=True)
class SearchGrid:
    scale_range: tuple[float, float] = (0.95, 1.05)
    scale_steps: int = 21
    trans_range: float = 8.0
    trans_steps: int = 17

    def scales(self) -> np.ndarray:
        return np.linspace(self.scale_range[0], self.scale_range[1], self.scale_steps)

    def translations(self) -> np.ndarray:
        return np.linspace(-self.trans_range, self.trans_range, self.trans_steps)


def apply_align(img: np.ndarray, params: AlignParams) -> tuple[np.ndarray, tuple]:
    """aligned(p) = img((p - t - c) / s + c); returns (aligned, valid rect).

    The rect (y0, y1, x0, x1) bounds the pixels whose samples stayed inside
    the source frame.
    """
    h, w = img.shape[:2]
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = (xs - params.tx - cx) / params.scale + cx
    sy = (ys - params.ty - cy) / params.scale + cy
    aligned = sample_bilinear(img, sx, sy, fill=0.0)
    # solve for the target-pixel range whose source positions are in bounds
    x0 = int(np.ceil(params.scale * (0 - cx) + cx + params.tx))
    x1 = int(np.floor(params.scale * (w - 1 - cx) + cx + params.tx))
    y0 = int(np.ceil(params.scale * (0 - cy) + cy + params.ty))
    y1 = int(np.floor(params.scale * (h - 1 - cy) + cy + params.ty))
    rect = (max(y0, 0), min(y1 + 1, h), max(x0, 0), min(x1 + 1, w))
    return aligned, rect


def _central_window(h: int, w: int, grid: SearchGrid) -> tuple:
    s_min = min(grid.scales())
    margin_x = int(np.ceil(grid.trans_range + (1 - s_min) * w / 2 + 2))
    margin_y = int(np.ceil(grid.trans_range + (1 - s_min) * h / 2 + 2))
    if 2 * margin_x + 8 > w or 2 * margin_y + 8 > h:
        raise ValueError(f"image {(h, w)} too small for the search grid")
    return margin_y, h - margin_y, margin_x, w - margin_x


def fov_align(img: np.ndarray, ref: np.ndarray,
              grid: SearchGrid = SearchGrid()) -> tuple[AlignParams, np.ndarray]:
    """Best (scale, tx, ty) over the grid by window MSE against ``ref``,
    then the transformed image. Identity is always a candidate, so the
    result never scores worse than no alignment."""
    img = np.asarray(img, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if img.shape != ref.shape:
        raise ValueError("fov_align expects equal dims")
    squeeze = img.ndim == 2
    if squeeze:
        img, ref = img[..., None], ref[..., None]
    h, w = img.shape[:2]
    y0, y1, x0, x1 = _central_window(h, w, grid)
    ref_c = ref[y0:y1, x0:x1]
    n_win = ref_c.shape[0] * ref_c.shape[1] * ref_c.shape[2]
    sum_ref2 = float((ref_c ** 2).sum())

    trans = grid.translations()
    integral = np.allclose(trans, np.round(trans))
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    # candidate preference: identity first, then smallest transform
    scale_order = sorted(grid.scales(), key=lambda s: (abs(s - 1.0), s))
    t_idx = sorted(range(len(trans)), key=lambda i: (abs(trans[i]), trans[i]))

    best = None  # (mse, AlignParams)
    for s in scale_order:
        sx = (xs - cx) / s + cx
        sy = (ys - cy) / s + cy
        base = sample_bilinear(img, sx, sy, fill=0.0)
        if integral:
            r = int(grid.trans_range)
            # window sums of base^2 and cross terms for every integer shift
            ones = np.ones(ref_c.shape[:2])
            base2 = (base ** 2).sum(axis=2)
            patch2 = base2[y0 - r:y1 + r, x0 - r:x1 + r]
            win2 = signal.fftconvolve(patch2, ones[::-1, ::-1], mode="valid")
            cross = np.zeros_like(win2)
            for c in range(img.shape[2]):
                patch = base[y0 - r:y1 + r, x0 - r:x1 + r, c]
                cross += signal.fftconvolve(patch, ref_c[::-1, ::-1, c], mode="valid")
            # win2/cross index (dy+r, dx+r) corresponds to shift t=(dx, dy):
            # aligned(p) = base(p - t) compared on the window
            for iy in t_idx:
                for ix in t_idx:
                    dy, dx = int(trans[iy]), int(trans[ix])
                    m = (win2[r - dy, r - dx] - 2 * cross[r - dy, r - dx]
                         + sum_ref2) / n_win
                    if best is None or m < best[0] - 1e-15:
                        best = (m, AlignParams(float(s), float(dx), float(dy)))
        else:
            for iy in t_idx:
                for ix in t_idx:
                    p = AlignParams(float(s), float(trans[ix]), float(trans[iy]))
                    aligned, _ = apply_align(img, p)
                    m = float(np.mean((aligned[y0:y1, x0:x1] - ref_c) ** 2))
                    if best is None or m < best[0] - 1e-15:
                        best = (m, p)

    params = best[1]
    aligned, _ = apply_align(img, params)
    if squeeze:
        aligned = aligned[..., 0]
    return params, aligned
