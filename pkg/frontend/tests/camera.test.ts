import { describe, expect, it } from "vitest";

import { DEFAULT_VIEW, cameraToView, orbit, viewToCamera, zoom, type ViewState } from "../src/camera.js";

describe("camera round trip", () => {
  it("view -> camera JSON -> view is identity", () => {
    const views: ViewState[] = [
      DEFAULT_VIEW,
      { ...DEFAULT_VIEW, azimuth: -2.1, elevation: 0.9, distance: 3.2, target: [0.1, -0.4, 0.25] },
      { ...DEFAULT_VIEW, azimuth: 3.0, elevation: -1.2, distance: 0.4 },
      { ...DEFAULT_VIEW, azimuth: 0, elevation: 0, distance: 1 },
    ];
    for (const v of views) {
      const back = cameraToView(viewToCamera(v));
      expect(back.azimuth).toBeCloseTo(v.azimuth, 12);
      expect(back.elevation).toBeCloseTo(v.elevation, 12);
      expect(back.distance).toBeCloseTo(v.distance, 12);
      expect(back.vfov).toBe(v.vfov);
      expect(back.width).toBe(v.width);
      expect(back.height).toBe(v.height);
      back.target.forEach((t, i) => expect(t).toBeCloseTo(v.target[i], 12));
    }
  });

  it("serializes the documented camera JSON shape", () => {
    const cam = viewToCamera(DEFAULT_VIEW);
    expect(Object.keys(cam).sort()).toEqual(
      ["eye", "height", "principal", "target", "up", "vfov", "width"].sort(),
    );
    expect(cam.up).toEqual([0, 0, 1]);
    expect(cam.principal).toEqual([cam.width / 2, cam.height / 2]);
    const d = Math.hypot(
      cam.eye[0] - cam.target[0],
      cam.eye[1] - cam.target[1],
      cam.eye[2] - cam.target[2],
    );
    expect(d).toBeCloseTo(DEFAULT_VIEW.distance, 12);
  });

  it("orbit wraps azimuth and clamps elevation", () => {
    let v = { ...DEFAULT_VIEW, azimuth: 3.0, elevation: 1.4 };
    v = orbit(v, 0.5, 0.5);
    expect(v.azimuth).toBeLessThanOrEqual(Math.PI);
    expect(v.elevation).toBeLessThan(Math.PI / 2);
    const z = zoom(v, 0.0001);
    expect(z.distance).toBeGreaterThanOrEqual(0.1);
  });
});
