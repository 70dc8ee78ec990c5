/**
 * Thin client over the preview service. The studio never computes geometry
 * itself; previews are server-rendered PNGs and the coverage number is the
 * X-Valid-Fraction response header, passed through as a string.
 */

import { Move, toWireMove } from "./schema";

export interface ClipInfo {
  frames: number;
  width: number;
  height: number;
  intrinsics: { fx: number; fy: number; cx: number; cy: number };
}

export interface PreviewResponse {
  imageBlob: Blob;
  validFraction: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  async clipInfo(): Promise<ClipInfo> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/clip/info`);
    if (!res.ok) {
      throw new Error(`clip info failed: HTTP ${res.status}`);
    }
    return (await res.json()) as ClipInfo;
  }

  async preview(
    frameIndex: number,
    moves: Move[],
    splatRadius: number,
    signal?: AbortSignal,
  ): Promise<PreviewResponse> {
    const body = {
      frame_index: frameIndex,
      move_list: moves.map(toWireMove),
      splat_radius: splatRadius,
    };
    const res = await this.fetchImpl(`${this.baseUrl}/api/preview`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!res.ok) {
      throw new Error(`preview failed: HTTP ${res.status}`);
    }
    const validFraction = res.headers.get("X-Valid-Fraction");
    if (validFraction === null) {
      throw new Error("preview response lacks X-Valid-Fraction");
    }
    return { imageBlob: await res.blob(), validFraction };
  }

  async startRender(moves: Move[], splatRadius: number): Promise<{ id: string }> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/trajectory/render`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ move_list: moves.map(toWireMove), splat_radius: splatRadius }),
    });
    if (!res.ok) {
      throw new Error(`render request failed: HTTP ${res.status}`);
    }
    return (await res.json()) as { id: string };
  }

  async jobStatus(id: string): Promise<Record<string, unknown>> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/job/${id}`);
    if (!res.ok) {
      throw new Error(`job lookup failed: HTTP ${res.status}`);
    }
    return (await res.json()) as Record<string, unknown>;
  }
}
