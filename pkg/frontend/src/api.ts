/** Thin typed client for the defocus-control service HTTP API. */

import type { DefocusSpec } from "./specs.js";

export interface SessionSummary {
  id: string;
  created: number;
  dims: [number, number] | null;
  has_depth: boolean;
}

export interface SessionDetail {
  id: string;
  created: number;
  dims: [number, number];
  has_depth: boolean;
  focus_distance_mm: number | null;
  w_png: string;
}

export interface Provenance {
  checkpoint: string;
  session: string;
  spec: Record<string, unknown>;
  latency_ms: number;
}

export interface RenderResult {
  image_png: string;
  provenance: Provenance;
}

export interface MapPreview {
  map_png: string;
  min_radius_px: number;
  max_radius_px: number;
  normalizer: number;
}

export interface Health {
  status: string;
  model_loaded: boolean;
  checkpoint: string | null;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class StudioClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  setBaseUrl(url: string): void {
    this.baseUrl = url.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/healthz");
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request<{ sessions: SessionSummary[] }>("/sessions").then(
      (r) => r.sessions,
    );
  }

  getSession(id: string): Promise<SessionDetail> {
    return this.request<SessionDetail>(`/sessions/${id}`);
  }

  deleteSession(id: string): Promise<void> {
    return this.request(`/sessions/${id}`, { method: "DELETE" });
  }

  render(sessionId: string, spec: DefocusSpec): Promise<RenderResult> {
    return this.request<RenderResult>(`/sessions/${sessionId}/render`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ spec }),
    });
  }

  defocusMapPreview(sessionId: string, spec: DefocusSpec): Promise<MapPreview> {
    return this.request<MapPreview>(`/sessions/${sessionId}/defocus-map`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ spec }),
    });
  }
}
