"""Dataset builder and loader: one directory per scene, flat and diffable.

Scene folder layout:

    scene_000/
      aif.png          16-bit all-in-focus W view
      depth.raw        raw float map (H, W) metric mm
      w_000.png ...    16-bit W focus slices
      uw.png           16-bit shared ultra-wide frame (colour-transformed)
      warp.raw         raw float map (H, W, 2), UW sampling positions per W pixel
      occlusion.png    8-bit mask, 255 = unreliable
      meta.json        rig + slice focus distances + generator config

Per-slice defocus maps are *not* stored; loaders recompute them from depth and
metadata, which keeps them trivially consistent with the optics model.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import align, fileio, optics
from ..optics import DepthMap, LensState
from .render import FocusStack, generate_stack
from .rig import CameraRig, default_rig
from .scenes import SceneConfig, generate_scene

__all__ = ["build_dataset", "write_scene", "load_scene", "list_scenes", "LoadedScene"]

META_SCHEMA = 1


def write_scene(folder, stack: FocusStack, occlusion_mode: str = "estimated") -> None:
    """Write one focus stack atomically (temp dir + rename).

    ``occlusion_mode``: 'estimated' stores the forward-backward-consistency
    mask (what training consumes by default), 'exact' stores the z-buffer
    ground truth.
    """
    folder = Path(folder)
    if occlusion_mode not in ("estimated", "exact"):
        raise ValueError(f"unknown occlusion_mode {occlusion_mode!r}")
    first = stack.slices[0]
    if occlusion_mode == "estimated":
        occ = align.estimate_occlusion(first.true_warp, first.true_warp_bwd)
    else:
        occ = first.occlusion_mask

    tmp = Path(tempfile.mkdtemp(dir=folder.parent, prefix=folder.name + ".tmp"))
    try:
        fileio.save_image(tmp / "aif.png", stack.scene.aif_image)
        fileio.write_raw_map(tmp / "depth.raw", stack.scene.depth.values_mm)
        fileio.save_image(tmp / "uw.png", first.uw_frame)
        first.true_warp.save(tmp / "warp.raw")
        fileio.save_mask(tmp / "occlusion.png", occ)
        slices_meta = []
        for i, cap in enumerate(stack.slices):
            name = f"w_{i:03d}.png"
            fileio.save_image(tmp / name, cap.w_slice)
            slices_meta.append({"file": name,
                                "focus_distance_mm": cap.lens_w.focus_distance_mm})
        meta = {
            "schema": META_SCHEMA,
            "seed": stack.scene.seed,
            "rig": stack.rig.to_dict(),
            "slices": slices_meta,
            "occlusion_mode": occlusion_mode,
            "scene_config": (stack.scene.config.to_dict()
                             if stack.scene.config is not None else None),
        }
        (tmp / "meta.json").write_text(json.dumps(meta, indent=2))
        if folder.exists():
            raise FileExistsError(f"{folder} already exists")
        os.replace(tmp, folder)
    finally:
        if tmp.exists():
            import shutil
            shutil.rmtree(tmp, ignore_errors=True)


def build_dataset(out_dir, n_scenes: int, n_slices: int, seed: int,
                  rig: CameraRig = None, scene_config: SceneConfig = None,
                  occlusion_mode: str = "estimated",
                  progress=None) -> list[Path]:
    """Generate ``n_scenes`` focus stacks under ``out_dir``; deterministic in seed."""
    if n_scenes < 1 or n_slices < 2:
        raise ValueError("need n_scenes >= 1 and n_slices >= 2")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rig is None:
        rig = scene_config.rig if scene_config is not None else default_rig()
    if scene_config is None:
        scene_config = SceneConfig(rig=rig)
    elif scene_config.rig is not rig:
        scene_config = SceneConfig(n_layers=scene_config.n_layers,
                                   texture_kind=scene_config.texture_kind,
                                   depth_range=scene_config.depth_range, rig=rig)

    rng = np.random.default_rng(seed)
    folders = []
    for i in range(n_scenes):
        scene_seed = int(rng.integers(0, 2 ** 31 - 1))
        n_layers = scene_config.n_layers
        cfg = SceneConfig(n_layers=n_layers, texture_kind=scene_config.texture_kind,
                          depth_range=scene_config.depth_range, rig=rig)
        scene = generate_scene(scene_seed, cfg)
        stack = generate_stack(scene, rig, n_slices)
        folder = out_dir / f"scene_{i:03d}"
        write_scene(folder, stack, occlusion_mode=occlusion_mode)
        folders.append(folder)
        if progress is not None:
            progress(i + 1, n_scenes)
    return folders


def list_scenes(dataset_dir) -> list[Path]:
    d = Path(dataset_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"dataset directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.is_dir() and (p / "meta.json").exists())


@dataclass
class LoadedScene:
    """In-memory view of one scene folder, defocus maps recomputed from metadata."""

    folder: Path
    rig: CameraRig
    aif: np.ndarray
    depth: DepthMap
    uw: np.ndarray
    uw_warped: np.ndarray
    occlusion: np.ndarray
    warp_field: align.WarpField
    lenses: list                  # list[LensState], ascending
    slices: list                  # list[np.ndarray] W slices
    defocus: list                 # list[np.ndarray] per-slice CoC radii (px)
    defocus_uw_on_w: np.ndarray   # UW CoC radii evaluated on the W depth grid

    @property
    def n_slices(self) -> int:
        return len(self.slices)

    def net_planes(self, ref_idx: int, tgt_idx: int) -> dict:
        """Planes for one (reference, target) refocus pair, full resolution."""
        return {
            "w": self.slices[ref_idx],
            "uw_warped": self.uw_warped,
            "occlusion": self.occlusion,
            "ref_defocus": self.defocus[ref_idx],
            "tgt_defocus": self.defocus[tgt_idx],
            "target": self.slices[tgt_idx],
        }


def load_scene(folder) -> LoadedScene:
    folder = Path(folder)
    meta = json.loads((folder / "meta.json").read_text())
    rig = CameraRig.from_dict(meta["rig"])
    depth = DepthMap(fileio.read_raw_map(folder / "depth.raw"))
    warp_field = align.WarpField.load(folder / "warp.raw")
    warp_field.validity &= warp_field.in_bounds((rig.uw_cam.height_px, rig.uw_cam.width_px))
    uw = fileio.load_image(folder / "uw.png")
    slices, lenses, maps = [], [], []
    for s in meta["slices"]:
        lens = LensState(float(s["focus_distance_mm"]))
        img = fileio.load_image(folder / s["file"])
        slices.append(img)
        lenses.append(lens)
        maps.append(optics.defocus_map(rig.w_cam, lens, depth).radii_px)
    # UW CoC for the scene points visible in W; evaluated on the W grid, so it
    # goes through coc_radius_mm directly (the UW frame has its own grid).
    uw_on_w = np.zeros(depth.shape)
    valid = depth.valid_mask()
    uw_on_w[valid] = optics.coc_radius_mm(
        rig.uw_cam, rig.uw_lens, depth.values_mm[valid]
    ) / rig.uw_cam.pixel_pitch_mm_per_px
    return LoadedScene(
        folder=folder,
        rig=rig,
        aif=fileio.load_image(folder / "aif.png"),
        depth=depth,
        uw=uw,
        uw_warped=align.warp(uw, warp_field),
        occlusion=fileio.load_mask(folder / "occlusion.png"),
        warp_field=warp_field,
        lenses=lenses,
        slices=slices,
        defocus=maps,
        defocus_uw_on_w=uw_on_w,
    )
