/**
 * Debounced, latest-wins render orchestration.
 *
 * Slider drags funnel through requestRender(): a trailing debounce timer
 * coalesces bursts (at most one request per debounce window), and response
 * sequence numbers guarantee a stale render can never overwrite a newer one.
 * Sweeps issue sequential renders outside the debouncer and stop issuing
 * requests the moment they are cancelled.
 */

import type { StudioClient, Provenance } from "./api.js";
import type { DefocusSpec, PhysicalSpec } from "./specs.js";
import { interpolatePhysical } from "./specs.js";

export interface ControllerState {
  sessionId: string | null;
  image: string | null; // base64 PNG currently displayed
  provenance: Provenance | null;
  pending: boolean;
  error: string | null;
}

export type StateListener = (state: ControllerState) => void;

export interface SweepRun {
  readonly frames: string[];
  readonly done: Promise<string[]>;
  cancel(): void;
  readonly cancelled: boolean;
}

export class RenderController {
  private state: ControllerState = {
    sessionId: null,
    image: null,
    provenance: null,
    pending: false,
    error: null,
  };

  private listeners: StateListener[] = [];
  private draft: DefocusSpec | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private seq = 0; // last issued request
  private displayedSeq = 0; // newest response applied
  private inFlight = 0;

  constructor(
    private client: StudioClient,
    private debounceMs = 150,
  ) {}

  subscribe(fn: StateListener): () => void {
    this.listeners.push(fn);
    fn(this.state);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) fn(this.state);
  }

  getState(): ControllerState {
    return this.state;
  }

  selectSession(id: string | null): void {
    // invalidate anything in flight for the previous session
    this.seq += 1;
    this.displayedSeq = this.seq;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.draft = null;
    this.emit({ sessionId: id, image: null, provenance: null, error: null });
  }

  /** Debounced render: call freely on every slider tick. */
  requestRender(spec: DefocusSpec): void {
    this.draft = spec;
    if (this.timer === null) {
      this.timer = setTimeout(() => {
        this.timer = null;
        if (this.draft !== null) {
          const spec = this.draft;
          this.draft = null;
          void this.issue(spec);
        }
      }, this.debounceMs);
    }
  }

  /** Immediate render (presets, sweep frames); still latest-wins. */
  renderNow(spec: DefocusSpec): Promise<void> {
    return this.issue(spec);
  }

  private async issue(spec: DefocusSpec): Promise<void> {
    const session = this.state.sessionId;
    if (!session) return;
    const mySeq = ++this.seq;
    this.inFlight += 1;
    this.emit({ pending: true });
    try {
      const result = await this.client.render(session, spec);
      if (mySeq > this.displayedSeq) {
        this.displayedSeq = mySeq;
        this.emit({
          image: result.image_png,
          provenance: result.provenance,
          error: null,
        });
      } // stale responses are discarded: the displayed image always
      //   corresponds to the displayed provenance
    } catch (err) {
      if (mySeq > this.displayedSeq) {
        // keep the last image, surface the failure
        this.emit({ error: err instanceof Error ? err.message : String(err) });
      }
    } finally {
      this.inFlight -= 1;
      if (this.inFlight === 0) this.emit({ pending: false });
    }
  }

  /**
   * Focus/aperture sweep: nFrames renders interpolated in diopter and
   * aperture space, issued strictly sequentially. cancel() prevents any
   * further request from being issued.
   */
  startSweep(
    from: PhysicalSpec,
    to: PhysicalSpec,
    nFrames: number,
    onFrame?: (index: number, image: string) => void,
  ): SweepRun {
    if (nFrames < 1) throw new Error("sweep needs at least one frame");
    let cancelled = false;
    const frames: string[] = [];
    const session = this.state.sessionId;

    const done = (async () => {
      if (!session) return frames;
      for (let i = 0; i < nFrames; i += 1) {
        if (cancelled) break;
        const t = nFrames === 1 ? 1 : i / (nFrames - 1);
        const spec = interpolatePhysical(from, to, t);
        try {
          const result = await this.client.render(session, spec);
          if (cancelled) break;
          frames.push(result.image_png);
          onFrame?.(i, result.image_png);
        } catch (err) {
          this.emit({
            error: err instanceof Error ? err.message : String(err),
          });
          break;
        }
      }
      return frames;
    })();

    return {
      frames,
      done,
      cancel: () => {
        cancelled = true;
      },
      get cancelled() {
        return cancelled;
      },
    };
  }
}
