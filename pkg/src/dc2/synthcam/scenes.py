"""Procedural RGBD scenes: fronto-parallel textured layers with exact geometry.

A scene is a stack of world-space layers (a full-frame background plus
elliptical foreground blobs), each at a constant metric depth with a
procedural texture evaluated directly in world millimetres. Because layers
are analytic, any camera pose renders an exact view: per-pixel colour, depth
and visible-layer id, with no resampling error. That is what makes the
ground-truth warps and occlusion masks of the dual rig exact by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..optics import CameraIntrinsics, DepthMap
from .rig import CameraRig, default_rig

__all__ = ["Layer", "SceneConfig", "SceneRGBD", "generate_scene", "compose_view"]

_TEXTURE_KINDS = ("checker", "noise", "gradient", "smooth")


@dataclass(frozen=True)
class Layer:
    """One textured primitive: 'background' covers everything at its depth."""

    depth_mm: float
    kind: str                      # 'background' | 'ellipse'
    shape: dict = None             # ellipse: cx, cy, rx, ry, angle (world mm / rad)
    texture: dict = None           # see _texture_rgb


@dataclass(frozen=True)
class SceneConfig:
    n_layers: int = 3
    texture_kind: str = "mixed"    # 'mixed' or one of checker/noise/gradient
    depth_range: tuple[float, float] = (500.0, 3500.0)
    rig: CameraRig = field(default_factory=default_rig)

    def __post_init__(self):
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        near, far = self.depth_range
        if not (0 < near < far):
            raise ValueError(f"bad depth_range {self.depth_range}")
        if self.texture_kind != "mixed" and self.texture_kind not in _TEXTURE_KINDS:
            raise ValueError(f"unknown texture_kind {self.texture_kind!r}")

    def to_dict(self) -> dict:
        return {
            "n_layers": self.n_layers,
            "texture_kind": self.texture_kind,
            "depth_range": list(self.depth_range),
        }


@dataclass
class SceneRGBD:
    """W-view all-in-focus image + exact depth, plus the generating layer model."""

    aif_image: np.ndarray
    depth: DepthMap
    seed: int = 0
    layers: list = None            # list[Layer], near to far; None for external RGBD
    layer_ids: np.ndarray = None   # W-view visible layer index, when layers exist
    config: SceneConfig = None

    def __post_init__(self):
        self.aif_image = np.asarray(self.aif_image, dtype=np.float64)
        if self.aif_image.ndim != 3 or self.aif_image.shape[2] != 3:
            raise ValueError(f"aif_image must be (H, W, 3), got {self.aif_image.shape}")
        if self.aif_image.shape[:2] != self.depth.shape:
            raise ValueError("image and depth dimensions differ")
        if self.config is not None:
            near, far = self.config.depth_range
            v = self.depth.values_mm[self.depth.valid_mask()]
            if v.size and (v.min() < near - 1e-6 or v.max() > far + 1e-6):
                raise ValueError("depth leaves the configured range")

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def _value_noise(grid: np.ndarray, x: np.ndarray, y: np.ndarray, cell_mm: float) -> np.ndarray:
    """Periodic value noise sampled at world coordinates."""
    n = grid.shape[0]
    u, v = x / cell_mm, y / cell_mm
    i0, j0 = np.floor(u).astype(np.intp), np.floor(v).astype(np.intp)
    fu, fv = _smoothstep(u - i0), _smoothstep(v - j0)
    i0, j0 = i0 % n, j0 % n
    i1, j1 = (i0 + 1) % n, (j0 + 1) % n
    g = grid
    return ((g[j0, i0] * (1 - fu) + g[j0, i1] * fu) * (1 - fv)
            + (g[j1, i0] * (1 - fu) + g[j1, i1] * fu) * fv)


def _texture_rgb(tex: dict, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate a layer texture at world (x, y) mm. Always high-frequency enough
    that defocus blur is visibly destructive."""
    c0 = np.asarray(tex["c0"])
    c1 = np.asarray(tex["c1"])
    kind = tex["kind"]
    if kind == "checker":
        ca, sa = np.cos(tex["angle"]), np.sin(tex["angle"])
        xr = ca * x + sa * y
        yr = -sa * x + ca * y
        cells = np.floor(xr / tex["period_mm"]) + np.floor(yr / tex["period_mm"])
        t = (cells % 2.0)
    elif kind == "noise":
        base = _value_noise(tex["grid"], x, y, tex["cell_mm"])
        fine = _value_noise(tex["grid2"], x, y, tex["cell_mm"] / 3.1)
        t = np.clip(0.15 + 0.7 * (0.65 * base + 0.35 * fine), 0.0, 1.0)
    elif kind == "gradient":
        ca, sa = np.cos(tex["angle"]), np.sin(tex["angle"])
        proj = ca * x + sa * y
        ramp = 0.5 + 0.5 * np.sin(2 * np.pi * proj / tex["span_mm"])
        stripes = 0.5 + 0.5 * np.sin(2 * np.pi * proj / tex["period_mm"] + tex["phase"])
        t = 0.45 * ramp + 0.55 * stripes
    elif kind == "smooth":
        # band-limited: broad value noise plus a gentle diagonal sine
        base = _value_noise(tex["grid"], x, y, tex["cell_mm"])
        ca, sa = np.cos(tex["angle"]), np.sin(tex["angle"])
        wave = 0.5 + 0.5 * np.sin(2 * np.pi * (ca * x + sa * y) / tex["period_mm"])
        t = 0.65 * base + 0.35 * wave
    else:
        raise ValueError(f"unknown texture kind {kind!r}")
    rgb = c0[None, None, :] + (c1 - c0)[None, None, :] * t[..., None]
    return np.clip(rgb, 0.02, 0.98)


def _view_halfspan_mm(cam: CameraIntrinsics, depth_mm: float) -> tuple[float, float]:
    fx = cam.focal_length_px
    return (cam.width_px / 2 * depth_mm / fx, cam.height_px / 2 * depth_mm / fx)


def _make_texture(rng: np.random.Generator, kind: str, view_w_mm: float,
                  px_mm: float) -> dict:
    """px_mm is the W-camera pixel footprint at the layer depth; texture scales
    are chosen in the 4..14 pixel range so blur radii of a few px matter."""
    hue = rng.uniform(0, 1, size=3)
    c0 = 0.15 + 0.6 * hue
    c1 = np.clip(c0 + rng.uniform(0.35, 0.6) * rng.choice([-1, 1]), 0.05, 0.95)
    tex = {"kind": kind, "c0": c0, "c1": np.asarray(c1, dtype=np.float64)}
    if kind == "checker":
        tex["period_mm"] = float(rng.uniform(4, 14) * px_mm)
        tex["angle"] = float(rng.uniform(0, np.pi))
    elif kind == "noise":
        tex["grid"] = rng.uniform(0, 1, size=(32, 32))
        tex["grid2"] = rng.uniform(0, 1, size=(32, 32))
        tex["cell_mm"] = float(rng.uniform(6, 16) * px_mm)
    elif kind == "gradient":
        tex["angle"] = float(rng.uniform(0, np.pi))
        tex["span_mm"] = float(view_w_mm * rng.uniform(0.8, 1.6))
        tex["period_mm"] = float(rng.uniform(5, 12) * px_mm)
        tex["phase"] = float(rng.uniform(0, 2 * np.pi))
    elif kind == "smooth":
        tex["grid"] = rng.uniform(0, 1, size=(16, 16))
        tex["cell_mm"] = float(rng.uniform(16, 28) * px_mm)
        tex["angle"] = float(rng.uniform(0, np.pi))
        tex["period_mm"] = float(rng.uniform(16, 26) * px_mm)
    return tex


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> SceneRGBD:
    """Deterministic layered RGBD scene for the config's rig.

    Layer depths are spread uniformly in diopters across the depth range (the
    farthest layer is the full-frame background); foreground blobs occupy
    distinct image cells so every layer stays visible from both cameras.
    """
    rng = np.random.default_rng(seed)
    cam = config.rig.w_cam
    near, far = config.depth_range
    n = config.n_layers

    if n == 1:
        depths = [0.5 * (near + far)]
    else:
        dpt = np.linspace(1 / far, 1 / near, n)
        step = (dpt[-1] - dpt[0]) / max(n - 1, 1)
        dpt = dpt + rng.uniform(-0.15, 0.15, size=n) * step
        dpt = np.clip(dpt, 1 / far, 1 / near)
        dpt[0] = 1 / far  # keep the background pinned to the far plane
        depths = sorted(1 / dpt)  # ascending: near to far

    layers = []
    # Foreground blobs: shuffled cells of a grid sized to hold them all.
    n_fg = n - 1
    grid_n = int(np.ceil(np.sqrt(max(n_fg, 1))))
    cells = [(i, j) for j in range(grid_n) for i in range(grid_n)]
    cells = [cells[k] for k in rng.permutation(len(cells))]

    kind_pool = ["checker", "noise", "gradient"]  # 'mixed' draws the high-frequency trio
    for idx, depth in enumerate(depths):
        is_bg = idx == n - 1
        half_w, half_h = _view_halfspan_mm(cam, depth)
        px_mm = depth / cam.focal_length_px
        kind = (config.texture_kind if config.texture_kind != "mixed"
                else kind_pool[int(rng.integers(len(kind_pool)))])
        tex = _make_texture(rng, kind, 2 * half_w, px_mm)
        if is_bg:
            layers.append(Layer(depth_mm=float(depth), kind="background", texture=tex))
        else:
            ci, cj = cells[idx]
            cw, ch = 2 * half_w / grid_n, 2 * half_h / grid_n
            cx = -half_w + (ci + 0.5) * cw + rng.uniform(-0.18, 0.18) * cw
            cy = -half_h + (cj + 0.5) * ch + rng.uniform(-0.18, 0.18) * ch
            shape = {
                "cx": float(cx), "cy": float(cy),
                "rx": float(rng.uniform(0.32, 0.48) * cw),
                "ry": float(rng.uniform(0.32, 0.48) * ch),
                "angle": float(rng.uniform(0, np.pi)),
            }
            layers.append(Layer(depth_mm=float(depth), kind="ellipse",
                                shape=shape, texture=tex))

    layers.sort(key=lambda l: l.depth_mm)  # near first for compositing
    rgb, depth_map, layer_ids = compose_view(layers, cam, translation_mm=(0.0, 0.0))
    return SceneRGBD(aif_image=rgb, depth=DepthMap(depth_map), seed=seed,
                     layers=layers, layer_ids=layer_ids, config=config)


def compose_view(layers: list, cam: CameraIntrinsics,
                 translation_mm: tuple[float, float] = (0.0, 0.0)):
    """Exact pinhole view of the layer stack from a translated camera.

    Returns (rgb, depth_mm, layer_id) arrays at the camera's resolution.
    The layer list must contain a background (it guarantees full coverage).
    """
    if not layers:
        raise ValueError("empty layer list")
    h, w = cam.height_px, cam.width_px
    ppx, ppy = cam.principal_point_px
    tx, ty = translation_mm
    fx = cam.focal_length_px
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))

    rgb = np.zeros((h, w, 3))
    depth = np.zeros((h, w))
    lid = np.full((h, w), -1, dtype=np.int32)
    unfilled = np.ones((h, w), dtype=bool)

    for i, layer in enumerate(sorted(layers, key=lambda l: l.depth_mm)):
        z = layer.depth_mm
        x = (us - ppx) * z / fx + tx
        y = (vs - ppy) * z / fx + ty
        if layer.kind == "background":
            support = np.ones((h, w), dtype=bool)
        else:
            s = layer.shape
            dx, dy = x - s["cx"], y - s["cy"]
            ca, sa = np.cos(s["angle"]), np.sin(s["angle"])
            support = (((ca * dx + sa * dy) / s["rx"]) ** 2
                       + ((-sa * dx + ca * dy) / s["ry"]) ** 2) <= 1.0
        take = support & unfilled
        if not take.any():
            continue
        rgb[take] = _texture_rgb(layer.texture, x, y)[take]
        depth[take] = z
        lid[take] = i
        unfilled &= ~take

    if unfilled.any():
        raise ValueError("layer stack does not cover the frame (missing background?)")
    return rgb, depth, lid
