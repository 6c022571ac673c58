import { describe, expect, it } from "vitest";

import {
  allInFocusSpec,
  interpolatePhysical,
  maskedSpec,
  physicalSpec,
  tiltShiftSpec,
} from "../src/specs.js";
import { MaskGrid } from "../src/mask-painter.js";

describe("preset spec JSON shapes", () => {
  it("all-in-focus preset emits exactly the documented zeros spec", () => {
    expect(JSON.parse(JSON.stringify(allInFocusSpec()))).toEqual({
      variant: "zeros",
    });
  });

  it("physical spec carries exactly aperture and focus distance", () => {
    expect(JSON.parse(JSON.stringify(physicalSpec(2.4, 900)))).toEqual({
      variant: "physical",
      aperture_mm: 2.4,
      focus_distance_mm: 900,
    });
  });

  it("zero aperture is a valid physical spec (pinhole preview)", () => {
    expect(physicalSpec(0, 800).aperture_mm).toBe(0);
  });

  it("tiltshift spec matches the service schema field for field", () => {
    expect(JSON.parse(JSON.stringify(tiltShiftSpec(128, 96, 15, 0.05, 8)))).toEqual({
      variant: "tiltshift",
      line_x: 128,
      line_y: 96,
      angle_deg: 15,
      slope_px_per_px: 0.05,
      max_radius_px: 8,
    });
  });

  it("masked spec embeds the mask as base64 png", () => {
    const spec = maskedSpec("aGVsbG8=", 0, 6);
    expect(JSON.parse(JSON.stringify(spec))).toEqual({
      variant: "masked",
      mask_png: "aGVsbG8=",
      fg_radius_px: 0,
      bg_radius_px: 6,
    });
  });

  it("rejects invalid physical parameters", () => {
    expect(() => physicalSpec(-1, 500)).toThrow();
    expect(() => physicalSpec(1, 0)).toThrow();
  });
});

describe("physical interpolation", () => {
  it("interpolates focus in diopter space", () => {
    const mid = interpolatePhysical(
      physicalSpec(2, 500),
      physicalSpec(2, 2000),
      0.5,
    );
    expect(mid.focus_distance_mm).toBeCloseTo(800, 9);
  });

  it("interpolates aperture linearly and hits the endpoints", () => {
    const from = physicalSpec(1, 500);
    const to = physicalSpec(3, 2000);
    expect(interpolatePhysical(from, to, 0)).toEqual(from);
    expect(interpolatePhysical(from, to, 1)).toEqual(to);
    expect(interpolatePhysical(from, to, 0.25).aperture_mm).toBeCloseTo(1.5);
  });
});

describe("mask grid", () => {
  it("paints and erases discs", () => {
    const grid = new MaskGrid(32, 32);
    grid.paint(16, 16, 5, 1);
    expect(grid.at(16, 16)).toBe(1);
    expect(grid.at(16, 12)).toBe(1);
    expect(grid.at(16, 9)).toBe(0);
    expect(grid.coverage()).toBeGreaterThan(0);
    grid.paint(16, 16, 2, 0);
    expect(grid.at(16, 16)).toBe(0);
    expect(grid.at(16, 12)).toBe(1);
  });

  it("clips strokes at the borders", () => {
    const grid = new MaskGrid(16, 16);
    grid.paint(0, 0, 4, 1);
    expect(grid.at(0, 0)).toBe(1);
    expect(grid.coverage()).toBeLessThan(0.2);
  });
});
