/**
 * DOM wiring for the studio: session picker, control panel, live preview.
 * All edits flow through DefocusSpec objects; the UI never touches session
 * pixel data except to display it.
 */

import { StudioClient, ApiError, SessionSummary } from "./api.js";
import { RenderController, SweepRun } from "./render-controller.js";
import {
  DefocusSpec,
  PhysicalSpec,
  allInFocusSpec,
  maskedSpec,
  physicalSpec,
  tiltShiftSpec,
} from "./specs.js";
import { MaskGrid, maskToPngBase64 } from "./mask-painter.js";

const FOCUS_MIN_MM = 300;
const FOCUS_MAX_MM = 4000;

type EffectMode = "physical" | "tiltshift" | "masked";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export class StudioApp {
  private client: StudioClient;
  private controller: RenderController;
  private mode: EffectMode = "physical";
  private dims: [number, number] = [192, 256];
  private mask: MaskGrid | null = null;
  private sweep: SweepRun | null = null;
  private sweepTimer: number | null = null;
  private showInput = false;
  private inputPng: string | null = null;

  constructor(baseUrl: string) {
    this.client = new StudioClient(baseUrl);
    this.controller = new RenderController(this.client);
    this.controller.subscribe((s) => this.renderState());
  }

  async start(): Promise<void> {
    el<HTMLButtonElement>("connect").addEventListener("click", () => {
      this.client.setBaseUrl(el<HTMLInputElement>("base-url").value);
      void this.refreshSessions();
    });
    el<HTMLSelectElement>("effect-mode").addEventListener("change", (e) => {
      this.mode = (e.target as HTMLSelectElement).value as EffectMode;
      this.syncPanels();
      this.pushSpec();
    });
    for (const id of ["focus", "aperture", "ts-y", "ts-angle", "ts-slope",
                      "fg-radius", "bg-radius"]) {
      el<HTMLInputElement>(id).addEventListener("input", () => this.pushSpec());
    }
    el<HTMLButtonElement>("preset-aif").addEventListener("click", () => {
      // the documented all-in-focus preset: {"variant": "zeros"}
      this.controller.renderNow(allInFocusSpec());
    });
    el<HTMLButtonElement>("compare").addEventListener("mousedown", () => {
      this.showInput = true;
      this.renderState();
    });
    el<HTMLButtonElement>("compare").addEventListener("mouseup", () => {
      this.showInput = false;
      this.renderState();
    });
    el<HTMLButtonElement>("sweep-start").addEventListener("click", () => {
      void this.runSweep();
    });
    el<HTMLButtonElement>("sweep-cancel").addEventListener("click", () => {
      this.cancelSweep();
    });
    el<HTMLButtonElement>("map-preview").addEventListener("click", () => {
      void this.previewMap();
    });
    this.bindMaskCanvas();
    await this.refreshSessions();
  }

  private banner(message: string | null): void {
    const b = el<HTMLDivElement>("banner");
    b.textContent = message ?? "";
    b.style.display = message ? "block" : "none";
  }

  private async refreshSessions(): Promise<void> {
    try {
      const health = await this.client.health();
      el<HTMLSpanElement>("health").textContent = health.model_loaded
        ? `model ${health.checkpoint}`
        : "no model loaded";
      const sessions = await this.client.listSessions();
      this.banner(null);
      this.renderSessionList(sessions);
    } catch (err) {
      this.banner(
        `service unreachable: ${err instanceof Error ? err.message : err}`,
      );
    }
  }

  private renderSessionList(sessions: SessionSummary[]): void {
    const list = el<HTMLDivElement>("sessions");
    list.innerHTML = "";
    if (sessions.length === 0) {
      list.textContent =
        "no sessions yet: create one with `dc2 gen-data` + the service API";
      return;
    }
    for (const s of sessions) {
      const card = document.createElement("button");
      card.className = "session-card";
      card.textContent = `${s.id} (${s.dims?.join("x") ?? "?"}${
        s.has_depth ? ", depth" : ""
      })`;
      card.addEventListener("click", () => void this.selectSession(s.id));
      list.appendChild(card);
    }
  }

  private async selectSession(id: string): Promise<void> {
    const detail = await this.client.getSession(id);
    this.dims = detail.dims;
    this.inputPng = detail.w_png;
    this.mask = new MaskGrid(this.dims[1], this.dims[0]);
    this.controller.selectSession(id);
    const canvas = el<HTMLCanvasElement>("mask-canvas");
    canvas.width = this.dims[1];
    canvas.height = this.dims[0];
    this.renderState();
    this.pushSpec();
  }

  private currentSpec(): DefocusSpec {
    if (this.mode === "physical") {
      // slider is in diopters for perceptual uniformity
      const dpt = parseFloat(el<HTMLInputElement>("focus").value);
      return physicalSpec(
        parseFloat(el<HTMLInputElement>("aperture").value),
        1 / dpt,
      );
    }
    if (this.mode === "tiltshift") {
      return tiltShiftSpec(
        this.dims[1] / 2,
        parseFloat(el<HTMLInputElement>("ts-y").value),
        parseFloat(el<HTMLInputElement>("ts-angle").value),
        parseFloat(el<HTMLInputElement>("ts-slope").value),
        8,
      );
    }
    if (!this.mask) throw new Error("select a session first");
    return maskedSpec(
      maskToPngBase64(this.mask),
      parseFloat(el<HTMLInputElement>("fg-radius").value),
      parseFloat(el<HTMLInputElement>("bg-radius").value),
    );
  }

  private pushSpec(): void {
    if (!this.controller.getState().sessionId) return;
    try {
      this.controller.requestRender(this.currentSpec());
    } catch (err) {
      this.banner(err instanceof Error ? err.message : String(err));
    }
  }

  private async previewMap(): Promise<void> {
    const state = this.controller.getState();
    if (!state.sessionId) return;
    try {
      const preview = await this.client.defocusMapPreview(
        state.sessionId,
        this.currentSpec(),
      );
      el<HTMLImageElement>("map-overlay").src =
        `data:image/png;base64,${preview.map_png}`;
      el<HTMLImageElement>("map-overlay").style.display = "block";
      setTimeout(() => {
        el<HTMLImageElement>("map-overlay").style.display = "none";
      }, 2500);
    } catch (err) {
      this.banner(err instanceof ApiError ? err.message : String(err));
    }
  }

  private async runSweep(): Promise<void> {
    this.cancelSweep();
    const aperture = parseFloat(el<HTMLInputElement>("aperture").value);
    const from: PhysicalSpec = physicalSpec(aperture, FOCUS_MIN_MM);
    const to: PhysicalSpec = physicalSpec(aperture, FOCUS_MAX_MM);
    const n = parseInt(el<HTMLInputElement>("sweep-frames").value, 10) || 8;
    const frames: string[] = [];
    this.sweep = this.controller.startSweep(from, to, n, (_, img) => {
      frames.push(img);
    });
    await this.sweep.done;
    if (this.sweep?.cancelled || frames.length === 0) return;
    let i = 0;
    this.sweepTimer = window.setInterval(() => {
      const img = el<HTMLImageElement>("preview");
      img.src = `data:image/png;base64,${frames[i % frames.length]}`;
      i += 1;
    }, 120);
  }

  private cancelSweep(): void {
    this.sweep?.cancel();
    this.sweep = null;
    if (this.sweepTimer !== null) {
      clearInterval(this.sweepTimer);
      this.sweepTimer = null;
    }
  }

  private bindMaskCanvas(): void {
    const canvas = el<HTMLCanvasElement>("mask-canvas");
    let painting = false;
    const stamp = (e: MouseEvent) => {
      if (!this.mask) return;
      const rect = canvas.getBoundingClientRect();
      const x = ((e.clientX - rect.left) / rect.width) * this.mask.width;
      const y = ((e.clientY - rect.top) / rect.height) * this.mask.height;
      const radius = parseFloat(el<HTMLInputElement>("brush-size").value);
      const erase = el<HTMLInputElement>("eraser").checked;
      this.mask.paint(x, y, radius, erase ? 0 : 1);
      this.drawMask(canvas);
    };
    canvas.addEventListener("mousedown", (e) => {
      painting = true;
      stamp(e);
    });
    canvas.addEventListener("mousemove", (e) => {
      if (painting) stamp(e);
    });
    window.addEventListener("mouseup", () => {
      if (painting && this.mode === "masked") this.pushSpec();
      painting = false;
    });
  }

  private drawMask(canvas: HTMLCanvasElement): void {
    if (!this.mask) return;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const img = ctx.createImageData(this.mask.width, this.mask.height);
    for (let i = 0; i < this.mask.data.length; i += 1) {
      img.data[4 * i] = 255;
      img.data[4 * i + 3] = this.mask.data[i] ? 120 : 0;
    }
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.putImageData(img, 0, 0);
  }

  private syncPanels(): void {
    el<HTMLDivElement>("panel-physical").style.display =
      this.mode === "physical" ? "block" : "none";
    el<HTMLDivElement>("panel-tiltshift").style.display =
      this.mode === "tiltshift" ? "block" : "none";
    el<HTMLDivElement>("panel-masked").style.display =
      this.mode === "masked" ? "block" : "none";
  }

  private renderState(): void {
    const state = this.controller.getState();
    const img = el<HTMLImageElement>("preview");
    const shown = this.showInput ? this.inputPng : state.image ?? this.inputPng;
    if (shown) img.src = `data:image/png;base64,${shown}`;
    el<HTMLSpanElement>("pending").style.visibility = state.pending
      ? "visible"
      : "hidden";
    const prov = el<HTMLDivElement>("provenance");
    prov.textContent = state.provenance
      ? `ckpt ${state.provenance.checkpoint} | ` +
        `${state.provenance.latency_ms.toFixed(0)} ms | ` +
        `spec ${JSON.stringify(state.provenance.spec)}`
      : "";
    if (state.error) this.banner(`render failed: ${state.error}`);
  }
}
