"""User-facing defocus-map specifications.

A DefocusSpec describes the *target* defocus map symbolically; building it
against a session produces the concrete per-pixel CoC radii the network
consumes. All variants clamp into [0, max_radius].
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .. import fileio, optics
from ..optics import CameraIntrinsics, DepthMap, LensState

__all__ = ["DefocusSpec", "build_defocus_map", "DEFAULT_MAX_RADIUS"]

DEFAULT_MAX_RADIUS = 16.0

_VARIANTS = ("physical", "zeros", "tiltshift", "masked", "explicit")


@dataclass(frozen=True)
class DefocusSpec:
    variant: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown defocus variant {self.variant!r}")
        p = self.params
        if self.variant == "physical":
            if p.get("aperture_mm") is None or p.get("focus_distance_mm") is None:
                raise ValueError("physical spec needs aperture_mm and focus_distance_mm")
            if p["aperture_mm"] < 0 or p["focus_distance_mm"] <= 0:
                raise ValueError("physical spec out of range")
        elif self.variant == "tiltshift":
            for key in ("line_x", "line_y", "angle_deg", "slope_px_per_px",
                        "max_radius_px"):
                if p.get(key) is None:
                    raise ValueError(f"tiltshift spec missing {key}")
            if p["slope_px_per_px"] < 0 or p["max_radius_px"] < 0:
                raise ValueError("tiltshift slope and max radius must be >= 0")
        elif self.variant == "masked":
            if p.get("mask") is None:
                raise ValueError("masked spec needs a mask")
            for key in ("fg_radius_px", "bg_radius_px"):
                if p.get(key) is None or p[key] < 0:
                    raise ValueError(f"masked spec needs non-negative {key}")
        elif self.variant == "explicit":
            if p.get("map") is None:
                raise ValueError("explicit spec needs a map")

    @classmethod
    def from_dict(cls, d: dict) -> "DefocusSpec":
        if not isinstance(d, dict) or "variant" not in d:
            raise ValueError("defocus spec must be an object with a 'variant'")
        params = {k: v for k, v in d.items() if k != "variant"}
        if "mask_png" in params:
            blob = base64.b64decode(params.pop("mask_png"))
            params["mask"] = (fileio.decode_png_bytes(blob) > 0.5)
            if params["mask"].ndim == 3:
                params["mask"] = params["mask"].any(axis=2)
        if "map_raw" in params:
            blob = base64.b64decode(params.pop("map_raw"))
            import struct
            h, w = struct.unpack("<ii", blob[:8])
            params["map"] = np.frombuffer(blob, dtype="<f4", offset=8).reshape(h, w)
        return cls(variant=str(d["variant"]), params=params)

    def to_dict(self) -> dict:
        """JSON echo for provenance; bulky arrays are summarised."""
        out = {"variant": self.variant}
        for k, v in self.params.items():
            if isinstance(v, np.ndarray):
                out[k] = {"shape": list(v.shape), "dtype": str(v.dtype)}
            else:
                out[k] = v
        return out


def build_defocus_map(spec: DefocusSpec, shape: tuple[int, int],
                      depth: DepthMap | None = None,
                      cam: CameraIntrinsics | None = None,
                      max_radius: float = DEFAULT_MAX_RADIUS) -> np.ndarray:
    """Concrete per-pixel CoC radii (px) for a spec, clamped to [0, max_radius]."""
    h, w = shape
    p = spec.params
    if spec.variant == "zeros":
        out = np.zeros((h, w))
    elif spec.variant == "physical":
        if depth is None or cam is None:
            raise ValueError("physical spec requires session depth and camera")
        if depth.shape != (h, w):
            raise ValueError("depth dims do not match session dims")
        cam2 = CameraIntrinsics(
            focal_length_mm=cam.focal_length_mm,
            aperture_diameter_mm=float(p["aperture_mm"]),
            pixel_pitch_mm_per_px=cam.pixel_pitch_mm_per_px,
            width_px=cam.width_px, height_px=cam.height_px,
            principal_point_px=cam.principal_point_px,
        )
        lens = LensState(float(p["focus_distance_mm"]))
        lens.validate_for(cam2)
        out = optics.defocus_map(cam2, lens, depth).radii_px
    elif spec.variant == "tiltshift":
        theta = np.deg2rad(float(p["angle_deg"]))
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        dist = np.abs(-np.sin(theta) * (xs - float(p["line_x"]))
                      + np.cos(theta) * (ys - float(p["line_y"])))
        out = np.clip(float(p["slope_px_per_px"]) * dist, 0.0,
                      float(p["max_radius_px"]))
    elif spec.variant == "masked":
        mask = np.asarray(p["mask"], dtype=np.float64)
        if mask.shape != (h, w):
            raise ValueError(f"mask dims {mask.shape} do not match session {(h, w)}")
        soft = ndimage.gaussian_filter(mask, sigma=1.0)  # ~2 px feather
        out = float(p["bg_radius_px"]) + (float(p["fg_radius_px"])
                                          - float(p["bg_radius_px"])) * soft
    else:  # explicit
        out = np.asarray(p["map"], dtype=np.float64)
        if out.shape != (h, w):
            raise ValueError(f"map dims {out.shape} do not match session {(h, w)}")
        if not np.all(np.isfinite(out)) or out.min() < 0:
            raise ValueError("explicit map must be finite and non-negative")
        if out.max() > max_radius:
            raise ValueError(f"explicit map exceeds max radius {max_radius}")
    return np.clip(out, 0.0, max_radius)
