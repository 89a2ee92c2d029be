/** Wire schemas of the articulation service (schema_version 1). */

export type StrokeRole = "arrow" | "hinge" | null;

export interface WireStroke {
  role: StrokeRole;
  points: [number, number][];
}

export interface StrokeWire {
  strokes: WireStroke[];
  focal_rect?: [number, number, number, number];
}

export interface CameraJson {
  eye: [number, number, number];
  target: [number, number, number];
  up: [number, number, number];
  vfov: number;
  width: number;
  height: number;
  principal: [number, number];
}

export interface ArticulationJson {
  motion_type: "rotation" | "translation";
  continuous: boolean;
  pivot: [number, number, number] | null;
  axis: [number, number, number];
  range_max: number;
}

export interface PredictResponse {
  schema_version: number;
  part: { face_ids: number[] };
  node_id: number;
  articulation: ArticulationJson;
  diagnostics: {
    iou: number;
    continuity: string | null;
    snapped: boolean;
    part_mask_png_base64?: string;
  };
}

export interface RenderResponse {
  png_base64: string;
  width: number;
  height: number;
  foreground_bbox: [number, number, number, number] | null;
  schema_version: number;
}

export interface SessionInfo {
  session_id: string;
  n_faces: number;
  joints: { part: { face_ids: number[] }; articulation: ArticulationJson }[];
  camera: CameraJson | null;
  schema_version: number;
}

export interface JobStatus {
  job_id: string;
  status: "pending" | "running" | "done" | "failed" | "canceled";
  progress: { iteration: number; grown_cells: number }[];
  result: {
    converged: boolean;
    iterations: number;
    growth_per_iteration: number[];
    occupancy_base64: string;
  } | null;
  error: string | null;
  schema_version: number;
}

export interface DomainErrorBody {
  code: string;
  message: string;
  details?: unknown;
}
