/**
 * Defocus-spec builders mirroring the service JSON schema exactly.
 *
 * Every spec posted to /sessions/{id}/render and /sessions/{id}/defocus-map
 * is one of these shapes; preset buttons and sliders must emit them verbatim.
 */

export interface PhysicalSpec {
  variant: "physical";
  aperture_mm: number;
  focus_distance_mm: number;
}

export interface ZerosSpec {
  variant: "zeros";
}

export interface TiltShiftSpec {
  variant: "tiltshift";
  line_x: number;
  line_y: number;
  angle_deg: number;
  slope_px_per_px: number;
  max_radius_px: number;
}

export interface MaskedSpec {
  variant: "masked";
  mask_png: string; // base64 PNG, white = foreground
  fg_radius_px: number;
  bg_radius_px: number;
}

export interface ExplicitSpec {
  variant: "explicit";
  map_raw: string; // base64 raw float map (int32 H, W header + f32 data)
}

export type DefocusSpec =
  | PhysicalSpec
  | ZerosSpec
  | TiltShiftSpec
  | MaskedSpec
  | ExplicitSpec;

export function physicalSpec(apertureMm: number, focusDistanceMm: number): PhysicalSpec {
  if (apertureMm < 0 || focusDistanceMm <= 0) {
    throw new Error("physical spec out of range");
  }
  return {
    variant: "physical",
    aperture_mm: apertureMm,
    focus_distance_mm: focusDistanceMm,
  };
}

/** The "All-in-focus" preset: a zero target defocus map. */
export function allInFocusSpec(): ZerosSpec {
  return { variant: "zeros" };
}

export function tiltShiftSpec(
  lineX: number,
  lineY: number,
  angleDeg: number,
  slopePxPerPx: number,
  maxRadiusPx: number,
): TiltShiftSpec {
  return {
    variant: "tiltshift",
    line_x: lineX,
    line_y: lineY,
    angle_deg: angleDeg,
    slope_px_per_px: slopePxPerPx,
    max_radius_px: maxRadiusPx,
  };
}

export function maskedSpec(
  maskPngBase64: string,
  fgRadiusPx: number,
  bgRadiusPx: number,
): MaskedSpec {
  return {
    variant: "masked",
    mask_png: maskPngBase64,
    fg_radius_px: fgRadiusPx,
    bg_radius_px: bgRadiusPx,
  };
}

/**
 * Interpolate two physical specs for a focus/aperture sweep. Focus distance
 * interpolates in diopter space (uniform perceptual focus change), aperture
 * linearly.
 */
export function interpolatePhysical(
  from: PhysicalSpec,
  to: PhysicalSpec,
  t: number,
): PhysicalSpec {
  const dptFrom = 1 / from.focus_distance_mm;
  const dptTo = 1 / to.focus_distance_mm;
  const dpt = dptFrom + (dptTo - dptFrom) * t;
  return physicalSpec(
    from.aperture_mm + (to.aperture_mm - from.aperture_mm) * t,
    1 / dpt,
  );
}
