"""Dual-camera rig description and the default desk-scale configuration.

The exact optics of real phone modules are not public, so the defaults below
are plausible constants chosen to give the wide camera a strongly shallow
depth of field (CoC radii up to roughly 9 px over the default depth range)
and the ultra-wide a nearly-deep-focus view with twice the field of view.
Everything downstream is parameterised by this rig, nothing hardcodes it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from ..optics import CameraIntrinsics, LensState, intrinsics_to_dict, intrinsics_from_dict

__all__ = ["CameraRig", "default_rig"]


@dataclass(frozen=True)
class CameraRig:
    """Wide (shallow DoF) plus ultra-wide (deep DoF, fixed focus) camera pair.

    ``baseline_mm`` is the UW camera centre expressed in the W camera frame
    (x right, y down). ``color_matrix`` / ``color_offset`` model the UW white
    balance mismatch: uw_rgb = M @ rgb + o, applied after rendering.
    """

    w_cam: CameraIntrinsics
    uw_cam: CameraIntrinsics
    uw_lens: LensState
    baseline_mm: tuple[float, float] = (10.0, 0.0)
    color_matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    color_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "color_matrix", np.asarray(self.color_matrix, dtype=np.float64))
        object.__setattr__(self, "color_offset", np.asarray(self.color_offset, dtype=np.float64))
        if self.color_matrix.shape != (3, 3) or self.color_offset.shape != (3,):
            raise ValueError("color transform must be a 3x3 matrix and length-3 offset")
        if abs(np.linalg.det(self.color_matrix)) < 1e-8:
            raise ValueError("color_matrix must be invertible")
        if self.uw_cam.aperture_diameter_mm >= self.w_cam.aperture_diameter_mm:
            raise ValueError("ultra-wide aperture must be smaller than wide aperture")
        self.uw_lens.validate_for(self.uw_cam)
        # UW field of view must cover the W field of view on both axes.
        for axis in ("width_px", "height_px"):
            half_w = math.atan(getattr(self.w_cam, axis) / 2
                               * self.w_cam.pixel_pitch_mm_per_px / self.w_cam.focal_length_mm)
            half_uw = math.atan(getattr(self.uw_cam, axis) / 2
                                * self.uw_cam.pixel_pitch_mm_per_px / self.uw_cam.focal_length_mm)
            if half_uw < half_w:
                raise ValueError(f"UW field of view does not cover W along {axis}")

    def apply_color(self, rgb: np.ndarray) -> np.ndarray:
        out = rgb @ self.color_matrix.T + self.color_offset
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "w_cam": intrinsics_to_dict(self.w_cam),
            "uw_cam": intrinsics_to_dict(self.uw_cam, self.uw_lens),
            "baseline_mm": list(self.baseline_mm),
            "color_matrix": self.color_matrix.tolist(),
            "color_offset": self.color_offset.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraRig":
        w_cam, _ = intrinsics_from_dict(d["w_cam"])
        uw_cam, uw_lens = intrinsics_from_dict(d["uw_cam"])
        if uw_lens is None:
            raise ValueError("rig metadata is missing the UW focus distance")
        return cls(
            w_cam=w_cam,
            uw_cam=uw_cam,
            uw_lens=uw_lens,
            baseline_mm=tuple(float(v) for v in d["baseline_mm"]),
            color_matrix=np.asarray(d["color_matrix"], dtype=np.float64),
            color_offset=np.asarray(d["color_offset"], dtype=np.float64),
        )


def default_rig(width_px: int = 256, height_px: int = 192,
                baseline_mm: tuple[float, float] = (10.0, 0.0),
                color_jitter: float = 1.0) -> CameraRig:
    """Desk-scale rig: tele-ish shallow wide camera plus deep-focus ultra-wide.

    ``color_jitter`` scales the UW white balance mismatch; 0 gives an identity
    color transform.
    """
    w_cam = CameraIntrinsics(
        focal_length_mm=6.8,
        aperture_diameter_mm=2.4,
        pixel_pitch_mm_per_px=0.0024,
        width_px=width_px,
        height_px=height_px,
        principal_point_px=(width_px / 2, height_px / 2),
    )
    uw_cam = CameraIntrinsics(
        focal_length_mm=2.55,
        aperture_diameter_mm=0.4,
        pixel_pitch_mm_per_px=0.0018,
        width_px=width_px,
        height_px=height_px,
        principal_point_px=(width_px / 2, height_px / 2),
    )
    j = color_jitter
    color_matrix = np.array([
        [1.0 + 0.08 * j, 0.02 * j, 0.0],
        [0.015 * j, 1.0, -0.015 * j],
        [0.0, 0.025 * j, 1.0 - 0.06 * j],
    ])
    color_offset = np.array([0.01, -0.005, 0.012]) * j
    return CameraRig(
        w_cam=w_cam,
        uw_cam=uw_cam,
        uw_lens=LensState(1200.0),
        baseline_mm=baseline_mm,
        color_matrix=color_matrix,
        color_offset=color_offset,
    )
