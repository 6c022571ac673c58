"""Checkpoint-backed rendering engine shared by the CLI and the HTTP service.

Inputs larger than the configured tile are processed in overlapping tiles
whose radial masks use the true full-image offsets, then feather-blended;
that reuses the crop-position conditioning the network saw in training.
"""

from __future__ import annotations

import numpy as np

from ..dfnet import NetInput, forward_single, load_checkpoint, checkpoint_id

__all__ = ["RenderEngine"]


def _tile_starts(length: int, tile: int, stride: int) -> list[int]:
    if length <= tile:
        return [0]
    starts = list(range(0, length - tile, stride))
    starts.append(length - tile)
    return sorted(set(starts))


def _feather(tile_h: int, tile_w: int, y0: int, x0: int, h: int, w: int,
             overlap: int) -> np.ndarray:
    """Weight window: zero across the outer quarter-overlap (the most
    context-starved tile pixels), ramping to 1 over the rest of the overlap;
    flat along image borders, where no neighbour exists."""
    trim = overlap // 4
    def axis_win(n, start, total):
        win = np.ones(n)
        ramp = np.zeros(overlap)
        ramp[trim:] = np.linspace(1.0 / (overlap - trim), 1.0, overlap - trim)
        if start > 0:
            win[:overlap] = np.minimum(win[:overlap], ramp)
        if start + n < total:
            win[-overlap:] = np.minimum(win[-overlap:], ramp[::-1])
        return win
    return np.outer(axis_win(tile_h, y0, h), axis_win(tile_w, x0, w))


class RenderEngine:
    def __init__(self, ckpt_path, max_tile: int = 512, overlap: int = 32):
        if overlap < 8 or overlap >= max_tile // 2:
            raise ValueError("need 8 <= overlap < max_tile/2")
        self.model, self.meta = load_checkpoint(ckpt_path)
        self.checkpoint_id = checkpoint_id(ckpt_path)
        self.max_tile = max_tile
        self.overlap = overlap

    def _forward_plain(self, planes: dict, crop_offset, full_dims) -> np.ndarray:
        """One forward pass, transparently padding dims to multiples of 8."""
        h, w = planes["w"].shape[:2]
        ph, pw = (-h) % 8, (-w) % 8
        if ph or pw:
            def pad(a):
                width = ((0, ph), (0, pw)) + (((0, 0),) if a.ndim == 3 else ())
                return np.pad(a, width, mode="edge")
            planes = {k: pad(v) for k, v in planes.items()}
            fh, fw = full_dims
            full_dims = (fh + ph, fw + pw)
        inp = NetInput(w_image=planes["w"], uw_warped=planes["uw_warped"],
                       occlusion=planes["occlusion"],
                       ref_defocus=planes["ref_defocus"],
                       tgt_defocus=planes["tgt_defocus"],
                       crop_offset=crop_offset, full_dims=full_dims)
        out = forward_single(self.model, inp)
        img = out.blended[-1][0].permute(1, 2, 0).numpy().astype(np.float64)
        return img[:h, :w]

    def render(self, planes: dict, force_tile: int | None = None) -> np.ndarray:
        """Full-resolution defocus-controlled render.

        ``planes``: w, uw_warped, occlusion, ref_defocus, tgt_defocus at one
        shared resolution. ``force_tile`` overrides the tile size (used by
        the tiling parity checks).
        """
        h, w = planes["w"].shape[:2]
        tile = force_tile or self.max_tile
        if h <= tile and w <= tile:
            return self._forward_plain(planes, (0, 0), (h, w))

        stride = tile - self.overlap
        acc = np.zeros((h, w, 3))
        weight = np.zeros((h, w))
        for y0 in _tile_starts(h, tile, stride):
            for x0 in _tile_starts(w, tile, stride):
                th = min(tile, h - y0)
                tw = min(tile, w - x0)
                sub = {k: v[y0:y0 + th, x0:x0 + tw] for k, v in planes.items()}
                pred = self._forward_plain(sub, (x0, y0), (h, w))
                win = _feather(th, tw, y0, x0, h, w, self.overlap)
                acc[y0:y0 + th, x0:x0 + tw] += pred * win[..., None]
                weight[y0:y0 + th, x0:x0 + tw] += win
        return acc / np.maximum(weight, 1e-12)[..., None]
