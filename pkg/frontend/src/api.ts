/** Typed client over the service's documented endpoints; nothing else. */

import type {
  CameraJson,
  DomainErrorBody,
  JobStatus,
  PredictResponse,
  RenderResponse,
  SessionInfo,
  StrokeWire,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details?: unknown,
  ) {
    super(message);
  }
}

async function request<T>(
  base: string,
  path: string,
  init?: RequestInit,
): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  if (!resp.ok) {
    let body: DomainErrorBody | null = null;
    try {
      body = (await resp.json()) as DomainErrorBody;
    } catch {
      // non-JSON error body
    }
    throw new ServiceError(
      resp.status,
      body?.code ?? `http-${resp.status}`,
      body?.message ?? resp.statusText,
      body?.details,
    );
  }
  return (await resp.json()) as T;
}

export class Client {
  constructor(public base: string) {}

  healthz(): Promise<{ status: string }> {
    return request(this.base, "/healthz");
  }

  createSession(body: Record<string, unknown>): Promise<{ session_id: string }> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  sessionInfo(id: string): Promise<SessionInfo> {
    return request(this.base, `/sessions/${id}`);
  }

  render(id: string, camera: CameraJson): Promise<RenderResponse> {
    const q = encodeURIComponent(JSON.stringify(camera));
    return request(this.base, `/sessions/${id}/render?camera=${q}`);
  }

  postStrokes(id: string, wire: StrokeWire): Promise<{ stored: number }> {
    return request(this.base, `/sessions/${id}/strokes`, {
      method: "POST",
      body: JSON.stringify(wire),
    });
  }

  predict(id: string, backend = "geometric"): Promise<PredictResponse> {
    return request(this.base, `/sessions/${id}/predict`, {
      method: "POST",
      body: JSON.stringify({ backend }),
    });
  }

  commitJoint(id: string, rangeMax?: number): Promise<{ n_joints: number }> {
    return request(this.base, `/sessions/${id}/joints`, {
      method: "POST",
      body: JSON.stringify(rangeMax === undefined ? {} : { range_max: rangeMax }),
    });
  }

  adjustJoint(
    id: string,
    joint: number,
    body: { add?: number[]; remove?: number[]; range_max?: number },
  ): Promise<{ joint: number }> {
    return request(this.base, `/sessions/${id}/joints/${joint}/adjust`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  undo(id: string): Promise<{ n_joints: number }> {
    return request(this.base, `/sessions/${id}/undo`, { method: "POST" });
  }

  /** Animated frame PNG plus the (possibly clamped) applied value. */
  async animateFrame(
    id: string,
    joint: number,
    value: number,
  ): Promise<{ blob: Blob; applied: number }> {
    const resp = await fetch(
      `${this.base}/sessions/${id}/animate?joint=${joint}&value=${value}`,
    );
    if (!resp.ok) {
      const body = (await resp.json()) as DomainErrorBody;
      throw new ServiceError(resp.status, body.code, body.message, body.details);
    }
    const applied = parseFloat(resp.headers.get("X-Joint-Value") ?? `${value}`);
    return { blob: await resp.blob(), applied };
  }

  startCompletion(id: string, body: Record<string, unknown>): Promise<{ job_id: string }> {
    return request(this.base, `/sessions/${id}/complete`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return request(this.base, `/jobs/${jobId}`);
  }

  cancelJob(jobId: string): Promise<{ status: string }> {
    return request(this.base, `/jobs/${jobId}/cancel`, { method: "POST" });
  }

  async exportUrdfZip(id: string): Promise<Blob> {
    const resp = await fetch(`${this.base}/sessions/${id}/export/urdf`);
    if (!resp.ok) {
      const body = (await resp.json()) as DomainErrorBody;
      throw new ServiceError(resp.status, body.code, body.message, body.details);
    }
    return resp.blob();
  }
}
