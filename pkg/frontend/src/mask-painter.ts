/**
 * Binary mask painting: a plain grid model (testable without a DOM) plus a
 * PNG exporter that uses a canvas when one is available.
 */

export class MaskGrid {
  readonly data: Uint8Array;

  constructor(
    readonly width: number,
    readonly height: number,
  ) {
    if (width < 1 || height < 1) throw new Error("empty mask grid");
    this.data = new Uint8Array(width * height);
  }

  at(x: number, y: number): number {
    return this.data[y * this.width + x];
  }

  /** Stamp a disc of `value` (1 = brush, 0 = eraser). */
  paint(cx: number, cy: number, radius: number, value: 0 | 1): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y += 1) {
      for (let x = x0; x <= x1; x += 1) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  /** Fraction of set pixels, handy for enabling the apply button. */
  coverage(): number {
    let n = 0;
    for (const v of this.data) n += v;
    return n / this.data.length;
  }
}

/** Render the grid to a black/white PNG and return its base64 payload. */
export function maskToPngBase64(grid: MaskGrid): string {
  const canvas = document.createElement("canvas");
  canvas.width = grid.width;
  canvas.height = grid.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d canvas context");
  const img = ctx.createImageData(grid.width, grid.height);
  for (let i = 0; i < grid.data.length; i += 1) {
    const v = grid.data[i] ? 255 : 0;
    img.data[4 * i] = v;
    img.data[4 * i + 1] = v;
    img.data[4 * i + 2] = v;
    img.data[4 * i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  return canvas.toDataURL("image/png").split(",", 2)[1];
}
