/** Orbit view state and its lossless mapping to the server camera JSON.
 *
 * Azimuth turns about world +z, elevation lifts from the xy-plane;
 * the up vector is world +z (the service's demo convention).
 */

import type { CameraJson } from "./types.js";

export interface ViewState {
  azimuth: number; // radians, (-pi, pi]
  elevation: number; // radians, (-pi/2, pi/2)
  distance: number;
  target: [number, number, number];
  vfov: number;
  width: number;
  height: number;
}

export const DEFAULT_VIEW: ViewState = {
  azimuth: Math.PI / 5,
  elevation: Math.PI / 7,
  distance: 1.8,
  target: [0, 0, 0],
  vfov: (40 * Math.PI) / 180,
  width: 512,
  height: 512,
};

export function viewToCamera(v: ViewState): CameraJson {
  const ce = Math.cos(v.elevation);
  const dir: [number, number, number] = [
    ce * Math.cos(v.azimuth),
    ce * Math.sin(v.azimuth),
    Math.sin(v.elevation),
  ];
  const eye: [number, number, number] = [
    v.target[0] + v.distance * dir[0],
    v.target[1] + v.distance * dir[1],
    v.target[2] + v.distance * dir[2],
  ];
  return {
    eye,
    target: [...v.target] as [number, number, number],
    up: [0, 0, 1],
    vfov: v.vfov,
    width: v.width,
    height: v.height,
    principal: [v.width / 2, v.height / 2],
  };
}

export function cameraToView(c: CameraJson): ViewState {
  const d: [number, number, number] = [
    c.eye[0] - c.target[0],
    c.eye[1] - c.target[1],
    c.eye[2] - c.target[2],
  ];
  const distance = Math.hypot(d[0], d[1], d[2]);
  if (distance === 0) {
    throw new Error("camera eye coincides with target");
  }
  return {
    azimuth: Math.atan2(d[1], d[0]),
    elevation: Math.asin(d[2] / distance),
    distance,
    target: [...c.target] as [number, number, number],
    vfov: c.vfov,
    width: c.width,
    height: c.height,
  };
}

export function orbit(v: ViewState, dAzimuth: number, dElevation: number): ViewState {
  const lim = Math.PI / 2 - 1e-3;
  let az = v.azimuth + dAzimuth;
  if (az > Math.PI) az -= 2 * Math.PI;
  if (az <= -Math.PI) az += 2 * Math.PI;
  return {
    ...v,
    azimuth: az,
    elevation: Math.min(lim, Math.max(-lim, v.elevation + dElevation)),
  };
}

export function zoom(v: ViewState, factor: number): ViewState {
  return { ...v, distance: Math.min(20, Math.max(0.1, v.distance * factor)) };
}
