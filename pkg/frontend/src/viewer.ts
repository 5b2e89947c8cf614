// Viewer state machine: drag-to-look is resolved locally against the
// latest panorama; only translation talks to the render service. At most
// one render request is in flight; newer requests abort older ones and
// stale responses are dropped (latest wins).

import {
  Mat3,
  Vec3,
  buildC2w,
  clampPitch,
  mat3Mul,
  mat3Transpose,
  movementAxes,
  viewRotation,
} from "./geometry.js";

export interface Panorama {
  bytes: ArrayBuffer;
  /** Rotation the panorama was rendered with (camera-to-world). */
  rotation: Mat3;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ViewerOptions {
  baseUrl: string;
  renderWidth?: number;
  fetchImpl?: FetchLike;
  /** Called whenever the displayed panorama swaps. */
  onPanorama?: (pano: Panorama) => void;
  /** Called with user-facing status/error lines. */
  onStatus?: (message: string) => void;
}

export type MoveKey = "forward" | "back" | "left" | "right" | "up" | "down";

type RenderOutcome = "swapped" | "failed" | "stale";

export class ViewerState {
  position: Vec3 = [0, 0, 0];
  yaw = 0;
  pitch = 0;
  panorama: Panorama | null = null;
  renderRequests = 0;

  private readonly baseUrl: string;
  private readonly renderWidth: number;
  private readonly fetchImpl: FetchLike;
  private readonly onPanorama?: (pano: Panorama) => void;
  private readonly onStatus?: (message: string) => void;
  private requestSerial = 0;
  private controller: AbortController | null = null;

  constructor(options: ViewerOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.renderWidth = options.renderWidth ?? 512;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
    this.onPanorama = options.onPanorama;
    this.onStatus = options.onStatus;
  }

  get pending(): boolean {
    return this.controller !== null;
  }

  /** Local look-around; never touches the network. */
  look(dyaw: number, dpitch: number): void {
    if (!this.panorama) {
      return;
    }
    this.yaw = (this.yaw + dyaw) % (2 * Math.PI);
    this.pitch = clampPitch(this.pitch + dpitch);
  }

  async loadMeta(): Promise<{ splat_count: number; near: number; far: number }> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/meta`);
    if (!resp.ok) {
      throw new Error(`meta failed: HTTP ${resp.status}`);
    }
    const meta = await resp.json();
    const pose: number[] = meta.suggested_pose;
    if (Array.isArray(pose) && pose.length === 16) {
      this.position = [pose[3], pose[7], pose[11]];
    }
    return meta;
  }

  /** Fetch a panorama for the current pose (initial load / refresh). */
  async refresh(): Promise<boolean> {
    return (await this.issueRender(this.position, "refresh failed")) === "swapped";
  }

  /**
   * Translate and request a fresh panorama. The position updates
   * optimistically and rolls back if the render fails (unless a newer
   * move superseded this one and owns the position now).
   */
  async move(key: MoveKey, step: number): Promise<void> {
    if (step === 0) {
      return;
    }
    const axes = movementAxes(this.yaw);
    const dir: Vec3 =
      key === "forward" ? axes.forward
      : key === "back" ? [-axes.forward[0], -axes.forward[1], -axes.forward[2]]
      : key === "right" ? axes.right
      : key === "left" ? [-axes.right[0], -axes.right[1], -axes.right[2]]
      : key === "up" ? axes.up
      : [0, -1, 0];
    const before: Vec3 = [...this.position];
    this.position = [
      this.position[0] + step * dir[0],
      this.position[1] + step * dir[1],
      this.position[2] + step * dir[2],
    ];
    const outcome = await this.issueRender(this.position, "move failed");
    if (outcome === "failed") {
      this.position = before;
    }
  }

  private async issueRender(position: Vec3, failurePrefix: string): Promise<RenderOutcome> {
    const serial = ++this.requestSerial;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    const rotation = viewRotation(this.yaw, this.pitch);
    const body = JSON.stringify({
      c2w: buildC2w(position, this.yaw, this.pitch),
      width: this.renderWidth,
      mode: "erp",
    });
    this.renderRequests += 1;
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/api/render`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body,
        signal: controller.signal,
      });
      if (serial !== this.requestSerial) {
        return "stale";
      }
      if (!resp.ok) {
        let detail = `HTTP ${resp.status}`;
        try {
          detail = (await resp.json()).error ?? detail;
        } catch {
          // non-JSON error body; keep the bare status line
        }
        this.onStatus?.(`${failurePrefix}: ${detail}`);
        return "failed";
      }
      const bytes = await resp.arrayBuffer();
      if (serial !== this.requestSerial) {
        return "stale";
      }
      this.panorama = { bytes, rotation };
      this.onPanorama?.(this.panorama);
      this.onStatus?.("");
      return "swapped";
    } catch (err) {
      if (serial !== this.requestSerial) {
        return "stale";
      }
      this.onStatus?.(`${failurePrefix}: ${String(err)}`);
      return "failed";
    } finally {
      if (serial === this.requestSerial) {
        this.controller = null;
      }
    }
  }
}

/** Maps current camera rays into the displayed panorama's frame. */
export function relativeToPanorama(state: ViewerState): Mat3 {
  const view = viewRotation(state.yaw, state.pitch);
  if (!state.panorama) {
    return view;
  }
  return mat3Mul(mat3Transpose(state.panorama.rotation), view);
}
