"""Refocus pair sampling and patch cropping with radial-mask bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..dfnet import NetInput, collate
from ..synthcam.dataset import LoadedScene

__all__ = ["PairSample", "sample_pair", "crop_pair", "make_batch"]


@dataclass
class PairSample:
    """Full-resolution planes for one (reference, target) slice pair."""

    planes: dict            # w, uw_warped, occlusion, ref_defocus, tgt_defocus
    target: np.ndarray      # the target W slice
    ref_index: int
    tgt_index: int


def sample_pair(scene: LoadedScene, rng: np.random.Generator) -> PairSample:
    """Two distinct slice indices, uniform without replacement."""
    n = scene.n_slices
    if n < 2:
        raise ValueError(f"{scene.folder}: need at least 2 slices, have {n}")
    i, j = rng.choice(n, size=2, replace=False)
    p = scene.net_planes(int(i), int(j))
    target = p.pop("target")
    return PairSample(planes=p, target=target, ref_index=int(i), tgt_index=int(j))


def crop_pair(pair: PairSample, crop: int,
              rng: np.random.Generator) -> tuple[NetInput, np.ndarray]:
    """One crop window applied to every plane; the radial mask keeps the
    crop's position in full-image coordinates."""
    h, w = pair.target.shape[:2]
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} exceeds image dims {(h, w)}")
    oy = int(rng.integers(0, h - crop + 1))
    ox = int(rng.integers(0, w - crop + 1))
    sl = np.s_[oy:oy + crop, ox:ox + crop]
    inp = NetInput(
        w_image=pair.planes["w"][sl],
        uw_warped=pair.planes["uw_warped"][sl],
        occlusion=pair.planes["occlusion"][sl],
        ref_defocus=pair.planes["ref_defocus"][sl],
        tgt_defocus=pair.planes["tgt_defocus"][sl],
        crop_offset=(ox, oy),
        full_dims=(h, w),
    )
    return inp, pair.target[sl]


def make_batch(scenes: list, batch_size: int, crop: int,
               rng: np.random.Generator) -> tuple[dict, torch.Tensor]:
    """Sample ``batch_size`` independent (scene, pair, crop) draws."""
    inputs, targets = [], []
    for _ in range(batch_size):
        scene = scenes[int(rng.integers(len(scenes)))]
        pair = sample_pair(scene, rng)
        inp, tgt = crop_pair(pair, crop, rng)
        inputs.append(inp)
        targets.append(tgt)
    batch = collate(inputs)
    target = torch.stack([
        torch.from_numpy(np.ascontiguousarray(t.transpose(2, 0, 1))).float()
        for t in targets])
    return batch, target
