/** Canvas stroke capture and serialization to the service wire format.
 *
 * Points are captured in canvas device pixels and mapped to the server
 * frame resolution on submit, so DPI never drifts between the drawing
 * surface and the g-buffer the server lifts against.
 */

import type { StrokeRole, StrokeWire, WireStroke } from "./types.js";

export type { StrokeRole } from "./types.js";

export interface CanvasStroke {
  points: [number, number][]; // canvas pixel coords
  role: StrokeRole; // toolbar tag; null = auto
  color: string;
  width: number;
}

export interface CanvasMapping {
  /** canvas CSS size */
  cssWidth: number;
  cssHeight: number;
  /** server frame size */
  frameWidth: number;
  frameHeight: number;
  devicePixelRatio: number;
}

export function newStroke(role: StrokeRole): CanvasStroke {
  return {
    points: [],
    role,
    color: role === "hinge" ? "#2563eb" : "#dc2626",
    width: 2,
  };
}

/** CSS-space pointer event position -> canvas pixel coords. */
export function cssToCanvasPoint(
  cssX: number,
  cssY: number,
  m: CanvasMapping,
): [number, number] {
  return [cssX * m.devicePixelRatio, cssY * m.devicePixelRatio];
}

/** Canvas pixel coords -> server frame pixel coords. */
export function canvasToFramePoint(
  p: [number, number],
  m: CanvasMapping,
): [number, number] {
  const sx = m.frameWidth / (m.cssWidth * m.devicePixelRatio);
  const sy = m.frameHeight / (m.cssHeight * m.devicePixelRatio);
  return [p[0] * sx, p[1] * sy];
}

export function appendPoint(stroke: CanvasStroke, p: [number, number], minDist = 1.0): void {
  const last = stroke.points[stroke.points.length - 1];
  if (last && Math.hypot(p[0] - last[0], p[1] - last[1]) < minDist) return;
  stroke.points.push(p);
}

export function serializeStrokes(
  strokes: CanvasStroke[],
  m: CanvasMapping,
  focalRect?: [number, number, number, number],
): StrokeWire {
  const wire: WireStroke[] = strokes
    .filter((s) => s.points.length >= 2)
    .map((s) => ({
      role: s.role,
      points: s.points.map((p) => canvasToFramePoint(p, m)),
    }));
  const body: StrokeWire = { strokes: wire };
  if (focalRect) {
    const scale = m.frameWidth / (m.cssWidth * m.devicePixelRatio);
    body.focal_rect = [
      focalRect[0] * scale,
      focalRect[1] * scale,
      focalRect[2] * scale,
      focalRect[3] * scale,
    ];
  }
  return body;
}
