"""Thin-lens defocus math: circle-of-confusion radii, defocus maps, focus sweeps.

All distances are metric millimetres. Defocus maps store absolute (unsigned)
CoC radii converted to pixels through the sensor pixel pitch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "LensState",
    "DepthMap",
    "DefocusMap",
    "coc_radius_mm",
    "defocus_map",
    "focus_sweep",
    "intrinsics_to_dict",
    "intrinsics_from_dict",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole-plus-aperture camera description.

    ``aperture_diameter_mm`` is the physical aperture diameter; zero means a
    perfect pinhole (no defocus anywhere).
    """

    focal_length_mm: float
    aperture_diameter_mm: float
    pixel_pitch_mm_per_px: float
    width_px: int
    height_px: int
    principal_point_px: tuple[float, float]

    def __post_init__(self):
        if self.focal_length_mm <= 0:
            raise ValueError(f"focal_length_mm must be > 0, got {self.focal_length_mm}")
        if self.aperture_diameter_mm < 0:
            raise ValueError(f"aperture_diameter_mm must be >= 0, got {self.aperture_diameter_mm}")
        if self.pixel_pitch_mm_per_px <= 0:
            raise ValueError(f"pixel_pitch_mm_per_px must be > 0, got {self.pixel_pitch_mm_per_px}")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be positive")
        px, py = self.principal_point_px
        if not (0 <= px <= self.width_px and 0 <= py <= self.height_px):
            raise ValueError(f"principal point {self.principal_point_px} outside image bounds")

    @property
    def focal_length_px(self) -> float:
        return self.focal_length_mm / self.pixel_pitch_mm_per_px

    @property
    def f_number(self) -> float:
        """N = f / A for display; infinite for a pinhole."""
        if self.aperture_diameter_mm == 0:
            return float("inf")
        return self.focal_length_mm / self.aperture_diameter_mm


@dataclass(frozen=True)
class LensState:
    """Lens focus position, i.e. the in-focus object distance."""

    focus_distance_mm: float

    def __post_init__(self):
        if self.focus_distance_mm <= 0:
            raise ValueError(f"focus_distance_mm must be > 0, got {self.focus_distance_mm}")

    def validate_for(self, cam: CameraIntrinsics) -> None:
        """The thin-lens CoC formula needs the focus distance beyond the focal length."""
        if self.focus_distance_mm <= cam.focal_length_mm:
            raise ValueError(
                f"focus distance {self.focus_distance_mm} mm must exceed "
                f"focal length {cam.focal_length_mm} mm"
            )


class DepthMap:
    """Per-pixel metric depth in mm. Non-finite or non-positive entries mark missing depth."""

    def __init__(self, values_mm: np.ndarray):
        values_mm = np.asarray(values_mm, dtype=np.float64)
        if values_mm.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {values_mm.shape}")
        self.values_mm = values_mm

    @property
    def shape(self) -> tuple[int, int]:
        return self.values_mm.shape

    def valid_mask(self) -> np.ndarray:
        v = self.values_mm
        return np.isfinite(v) & (v > 0)


class DefocusMap:
    """Per-pixel CoC radius in pixels; always finite and >= 0.

    ``validity`` is 0 where the source depth was missing (those radii are
    conservatively set to 0, i.e. treated as in focus).
    """

    def __init__(self, radii_px: np.ndarray, validity: np.ndarray | None = None):
        radii_px = np.asarray(radii_px, dtype=np.float64)
        if radii_px.ndim != 2:
            raise ValueError(f"defocus map must be 2-D, got shape {radii_px.shape}")
        if not np.all(np.isfinite(radii_px)):
            raise ValueError("defocus map contains non-finite values")
        if np.any(radii_px < 0):
            raise ValueError("defocus map contains negative radii")
        self.radii_px = radii_px
        if validity is None:
            validity = np.ones(radii_px.shape, dtype=bool)
        else:
            validity = np.asarray(validity, dtype=bool)
            if validity.shape != radii_px.shape:
                raise ValueError("validity mask shape mismatch")
        self.validity = validity

    @property
    def shape(self) -> tuple[int, int]:
        return self.radii_px.shape


def coc_radius_mm(cam: CameraIntrinsics, lens: LensState, depth_mm):
    """Circle-of-confusion radius on the sensor, in mm.

    c = A * |S2 - S1| / S2 * f / (S1 - f)

    with A the aperture diameter, f the focal length, S1 the focus distance
    and S2 the object depth. Accepts a scalar or an array of depths.
    """
    lens.validate_for(cam)
    depth = np.asarray(depth_mm, dtype=np.float64)
    if np.any(~np.isfinite(depth)) or np.any(depth <= 0):
        raise ValueError("depth must be finite and > 0")
    A = cam.aperture_diameter_mm
    f = cam.focal_length_mm
    s1 = lens.focus_distance_mm
    c = A * (np.abs(depth - s1) / depth) * (f / (s1 - f))
    if np.isscalar(depth_mm):
        return float(c)
    return c


def defocus_map(cam: CameraIntrinsics, lens: LensState, depth: DepthMap) -> DefocusMap:
    """Per-pixel CoC radius in pixels for the given camera, lens and depth.

    Pixels with missing depth get radius 0 and validity 0.
    """
    h, w = depth.shape
    if (h, w) != (cam.height_px, cam.width_px):
        raise ValueError(
            f"depth dims {depth.shape} do not match camera dims "
            f"{(cam.height_px, cam.width_px)}"
        )
    valid = depth.valid_mask()
    radii = np.zeros(depth.shape, dtype=np.float64)
    if valid.any():
        c_mm = coc_radius_mm(cam, lens, depth.values_mm[valid])
        radii[valid] = c_mm / cam.pixel_pitch_mm_per_px
    return DefocusMap(radii, validity=valid)


def focus_sweep(near_mm: float, far_mm: float, n_slices: int,
                focal_length_mm: float = 0.0) -> list[LensState]:
    """Focus distances uniformly spaced in diopters, ascending from near to far.

    Uniform diopter spacing equalises the defocus change per step, the usual
    convention for focus-stack capture.
    """
    if n_slices < 2:
        raise ValueError(f"n_slices must be >= 2, got {n_slices}")
    if not (focal_length_mm < near_mm < far_mm):
        raise ValueError(
            f"need focal_length < near < far, got {focal_length_mm}, {near_mm}, {far_mm}"
        )
    diopters = np.linspace(1.0 / near_mm, 1.0 / far_mm, n_slices)
    return [LensState(float(1.0 / d)) for d in diopters]


def intrinsics_to_dict(cam: CameraIntrinsics, lens: LensState | None = None) -> dict:
    """JSON-ready metadata for a camera and optionally its lens state."""
    d = {
        "focal_length_mm": cam.focal_length_mm,
        "aperture_diameter_mm": cam.aperture_diameter_mm,
        "pixel_pitch_mm_per_px": cam.pixel_pitch_mm_per_px,
        "width_px": cam.width_px,
        "height_px": cam.height_px,
        "principal_point_px": list(cam.principal_point_px),
    }
    if lens is not None:
        d["focus_distance_mm"] = lens.focus_distance_mm
    return d


def intrinsics_from_dict(d: dict) -> tuple[CameraIntrinsics, LensState | None]:
    cam = CameraIntrinsics(
        focal_length_mm=float(d["focal_length_mm"]),
        aperture_diameter_mm=float(d["aperture_diameter_mm"]),
        pixel_pitch_mm_per_px=float(d["pixel_pitch_mm_per_px"]),
        width_px=int(d["width_px"]),
        height_px=int(d["height_px"]),
        principal_point_px=tuple(float(v) for v in d["principal_point_px"]),
    )
    lens = None
    if d.get("focus_distance_mm") is not None:
        lens = LensState(float(d["focus_distance_mm"]))
    return cam, lens
