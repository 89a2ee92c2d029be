/** Application state machine, free of DOM so the logic is unit-testable.
 *
 * Enforces the client-side concurrency contract: at most one in-flight
 * predict per session; animate requests throttled to <= 15 Hz and
 * coalesced to the latest slider value.
 */

import { Client, ServiceError } from "./api.js";
import type { CanvasMapping, CanvasStroke } from "./strokes.js";
import { serializeStrokes } from "./strokes.js";
import type { PredictResponse } from "./types.js";
import { throttled, type Throttled } from "./throttle.js";
import { viewToCamera, type ViewState } from "./camera.js";

export const ANIMATE_MAX_HZ = 15;

export type Hint = { kind: "info" | "error"; text: string };

export interface JointEntry {
  index: number;
  motionType: string;
  rangeMax: number;
  value: number;
}

export class StudioApp {
  sessionId: string | null = null;
  view: ViewState;
  strokes: CanvasStroke[] = [];
  focalRect: [number, number, number, number] | null = null;
  lastPrediction: PredictResponse | null = null;
  joints: JointEntry[] = [];
  hint: Hint | null = null;
  jobId: string | null = null;

  private predictInFlight = false;
  private animateThrottle: Throttled<{ joint: number; value: number }>;

  constructor(
    public client: Client,
    view: ViewState,
    private onFrame: (blob: Blob, applied: number) => void = () => {},
    now?: () => number,
    schedule?: (cb: () => void, ms: number) => unknown,
  ) {
    this.view = view;
    this.animateThrottle = throttled(
      (req) => void this.fetchFrame(req.joint, req.value),
      1000 / ANIMATE_MAX_HZ,
      now,
      schedule,
    );
  }

  async createSession(body: Record<string, unknown>): Promise<string> {
    const res = await this.client.createSession(body);
    this.sessionId = res.session_id;
    this.joints = [];
    this.strokes = [];
    this.lastPrediction = null;
    return res.session_id;
  }

  requireSession(): string {
    if (!this.sessionId) throw new Error("no active session");
    return this.sessionId;
  }

  async renderView() {
    return this.client.render(this.requireSession(), viewToCamera(this.view));
  }

  /** "Finish & Predict": serialize strokes, post, predict. Rejects a second
   * concurrent call; surfaces 422 domain codes as inline hints. */
  async finishAndPredict(mapping: CanvasMapping): Promise<PredictResponse | null> {
    if (this.predictInFlight) return null;
    this.predictInFlight = true;
    this.hint = null;
    try {
      const id = this.requireSession();
      const wire = serializeStrokes(this.strokes, mapping, this.focalRect ?? undefined);
      await this.client.postStrokes(id, wire);
      const prediction = await this.client.predict(id);
      this.lastPrediction = prediction;
      return prediction;
    } catch (e) {
      this.hint = hintFor(e);
      return null;
    } finally {
      this.predictInFlight = false;
    }
  }

  async acceptPrediction(rangeMax?: number): Promise<void> {
    if (!this.lastPrediction) throw new Error("nothing to accept");
    const id = this.requireSession();
    await this.client.commitJoint(id, rangeMax);
    const art = this.lastPrediction.articulation;
    this.joints.push({
      index: this.joints.length,
      motionType: art.motion_type,
      rangeMax: rangeMax ?? art.range_max,
      value: 0,
    });
    this.lastPrediction = null;
    this.strokes = [];
  }

  /** Slider drag: throttled, coalesced animate requests. */
  dragJoint(joint: number, value: number): void {
    const j = this.joints[joint];
    if (!j) return;
    j.value = value;
    this.animateThrottle.push({ joint, value });
  }

  /** Range-handle release: persist the new limit. */
  async releaseRange(joint: number, rangeMax: number): Promise<void> {
    const id = this.requireSession();
    try {
      await this.client.adjustJoint(id, joint, { range_max: rangeMax });
      this.joints[joint].rangeMax = rangeMax;
    } catch (e) {
      this.hint = hintFor(e);
    }
  }

  private async fetchFrame(joint: number, value: number): Promise<void> {
    try {
      const { blob, applied } = await this.client.animateFrame(
        this.requireSession(),
        joint,
        value,
      );
      if (this.joints[joint] && applied < value - 1e-9) {
        this.hint = {
          kind: "info",
          text: `limit reached: calibrated maximum is ${applied.toFixed(3)}`,
        };
      }
      this.onFrame(blob, applied);
    } catch (e) {
      this.hint = hintFor(e);
    }
  }

  async startCompletion(body: Record<string, unknown>): Promise<string> {
    const res = await this.client.startCompletion(this.requireSession(), body);
    this.jobId = res.job_id;
    return res.job_id;
  }

  async pollJob() {
    if (!this.jobId) throw new Error("no job");
    return this.client.jobStatus(this.jobId);
  }

  canExport(): boolean {
    return this.joints.length > 0;
  }
}

export function hintFor(e: unknown): Hint {
  if (e instanceof ServiceError) {
    const advice: Record<string, string> = {
      "ambiguous-sketch": "add exactly one arrow (plus an optional hinge line)",
      "empty-mask": "draw the arrow over the part you want to move",
      "no-part-found": "the mask did not match any part; adjust the strokes",
      "blocked-joint": "the part cannot move from its rest pose",
      "no-surface": "start the arrow on the object, not the background",
      "insufficient-coverage": "draw the hinge line over the object",
      "session-busy": "another request is still running",
    };
    const extra = advice[e.code] ? ` - ${advice[e.code]}` : "";
    return { kind: "error", text: `${e.code}: ${e.message}${extra}` };
  }
  return { kind: "error", text: String(e) };
}
