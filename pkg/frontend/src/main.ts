/** DOM bootstrap: wires the studio canvas, toolbar, joint sliders, and the
 * completion panel to the application state machine. */

import { Client } from "./api.js";
import { StudioApp } from "./app.js";
import { DEFAULT_VIEW, orbit, zoom } from "./camera.js";
import { drawOverlay, tintMask } from "./overlay.js";
import {
  appendPoint,
  cssToCanvasPoint,
  newStroke,
  type CanvasMapping,
  type CanvasStroke,
  type StrokeRole,
} from "./strokes.js";

const SERVICE = (window as unknown as { SKETCHJOINT_URL?: string }).SKETCHJOINT_URL
  ?? "http://127.0.0.1:8023";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot() {
  const canvas = el<HTMLCanvasElement>("studio-canvas");
  const ctx = canvas.getContext("2d")!;
  const hintBar = el<HTMLDivElement>("hint");
  const jointPanel = el<HTMLDivElement>("joints");
  const jobPanel = el<HTMLDivElement>("job");

  let frame: ImageBitmap | null = null;
  let partMask: ImageBitmap | null = null;

  const app = new StudioApp(new Client(SERVICE), { ...DEFAULT_VIEW }, async (blob) => {
    frame = await createImageBitmap(blob);
    redraw();
  });

  const mapping = (): CanvasMapping => ({
    cssWidth: canvas.clientWidth,
    cssHeight: canvas.clientHeight,
    frameWidth: app.view.width,
    frameHeight: app.view.height,
    devicePixelRatio: window.devicePixelRatio || 1,
  });

  function redraw() {
    canvas.width = canvas.clientWidth * (window.devicePixelRatio || 1);
    canvas.height = canvas.clientHeight * (window.devicePixelRatio || 1);
    drawOverlay(ctx, canvas.width, canvas.height, {
      frame,
      partMask,
      strokes: app.strokes,
      focalRect: app.focalRect,
    });
    hintBar.textContent = app.hint?.text ?? "";
    hintBar.className = app.hint ? `hint ${app.hint.kind}` : "hint";
  }

  async function refreshRender() {
    const res = await app.renderView();
    const bytes = Uint8Array.from(atob(res.png_base64), (c) => c.charCodeAt(0));
    frame = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
    partMask = null;
    redraw();
  }

  // --- toolbar -----------------------------------------------------------
  let tool: "draw" | "orbit" | "focal" = "orbit";
  let role: StrokeRole = null;
  for (const [id, t] of [["tool-orbit", "orbit"], ["tool-draw", "draw"], ["tool-focal", "focal"]] as const) {
    el<HTMLButtonElement>(id).addEventListener("click", () => {
      tool = t;
      document.querySelectorAll(".tool").forEach((b) => b.classList.remove("active"));
      el(id).classList.add("active");
    });
  }
  for (const [id, r] of [["role-auto", null], ["role-arrow", "arrow"], ["role-hinge", "hinge"]] as const) {
    el<HTMLButtonElement>(id).addEventListener("click", () => {
      role = r as StrokeRole;
      document.querySelectorAll(".role").forEach((b) => b.classList.remove("active"));
      el(id).classList.add("active");
    });
  }

  el<HTMLButtonElement>("load-demo").addEventListener("click", async () => {
    const demo = el<HTMLSelectElement>("demo-select").value;
    await app.createSession({ demo, semantic_features: true, keep_joints: false });
    renderJoints();
    await refreshRender();
  });

  el<HTMLButtonElement>("clear-strokes").addEventListener("click", () => {
    app.strokes = [];
    app.focalRect = null;
    partMask = null;
    redraw();
  });

  el<HTMLButtonElement>("predict").addEventListener("click", async () => {
    const res = await app.finishAndPredict(mapping());
    if (res) {
      const png = res.diagnostics.part_mask_png_base64;
      if (png) partMask = await tintMask(png, [255, 170, 60]);
      app.hint = {
        kind: "info",
        text: `${res.articulation.motion_type}, IoU ${res.diagnostics.iou.toFixed(2)}` +
          (res.diagnostics.continuity ? `, ${res.diagnostics.continuity}` : ""),
      };
    }
    redraw();
  });

  el<HTMLButtonElement>("accept").addEventListener("click", async () => {
    try {
      await app.acceptPrediction();
      partMask = null;
      renderJoints();
      redraw();
    } catch (e) {
      app.hint = { kind: "error", text: String(e) };
      redraw();
    }
  });

  el<HTMLButtonElement>("undo").addEventListener("click", async () => {
    try {
      await app.client.undo(app.requireSession());
      app.joints.pop();
      renderJoints();
      await refreshRender();
    } catch (e) {
      app.hint = { kind: "error", text: String(e) };
      redraw();
    }
  });

  // --- canvas interaction --------------------------------------------------
  let active: CanvasStroke | null = null;
  let focalStart: [number, number] | null = null;
  let orbitStart: [number, number] | null = null;

  canvas.addEventListener("pointerdown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const p = cssToCanvasPoint(ev.clientX - rect.left, ev.clientY - rect.top, mapping());
    if (tool === "draw") {
      active = newStroke(role);
      appendPoint(active, p);
      app.strokes.push(active);
    } else if (tool === "focal") {
      focalStart = p;
    } else {
      orbitStart = [ev.clientX, ev.clientY];
    }
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const p = cssToCanvasPoint(ev.clientX - rect.left, ev.clientY - rect.top, mapping());
    if (active) {
      appendPoint(active, p);
      redraw();
    } else if (focalStart) {
      app.focalRect = [
        Math.min(focalStart[0], p[0]),
        Math.min(focalStart[1], p[1]),
        Math.abs(p[0] - focalStart[0]),
        Math.abs(p[1] - focalStart[1]),
      ];
      redraw();
    } else if (orbitStart) {
      const [sx, sy] = orbitStart;
      app.view = orbit(app.view, -(ev.clientX - sx) * 0.008, (ev.clientY - sy) * 0.008);
      orbitStart = [ev.clientX, ev.clientY];
    }
  });
  canvas.addEventListener("pointerup", async () => {
    if (active) active = null;
    if (focalStart) focalStart = null;
    if (orbitStart) {
      orbitStart = null;
      if (app.sessionId) await refreshRender();
    }
  });
  canvas.addEventListener("wheel", async (ev) => {
    ev.preventDefault();
    app.view = zoom(app.view, ev.deltaY > 0 ? 1.1 : 0.9);
    if (app.sessionId) await refreshRender();
  });

  // --- joints panel ---------------------------------------------------------
  function renderJoints() {
    jointPanel.innerHTML = "";
    app.joints.forEach((j) => {
      const row = document.createElement("div");
      row.className = "joint-row";
      const label = document.createElement("span");
      label.textContent = `#${j.index} ${j.motionType}`;
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = String(j.rangeMax);
      slider.step = String(j.rangeMax / 200);
      slider.value = String(j.value);
      slider.addEventListener("input", () => {
        app.dragJoint(j.index, parseFloat(slider.value));
        hintBar.textContent = app.hint?.text ?? "";
      });
      const rangeBox = document.createElement("input");
      rangeBox.type = "number";
      rangeBox.step = "0.01";
      rangeBox.value = j.rangeMax.toFixed(3);
      rangeBox.addEventListener("change", async () => {
        await app.releaseRange(j.index, parseFloat(rangeBox.value));
        slider.max = rangeBox.value;
        redraw();
      });
      row.append(label, slider, rangeBox);
      jointPanel.append(row);
    });
    el<HTMLButtonElement>("export").disabled = !app.canExport();
    el<HTMLButtonElement>("complete").disabled = !app.canExport();
  }

  // --- completion panel -------------------------------------------------------
  el<HTMLButtonElement>("complete").addEventListener("click", async () => {
    // the condition image is the open-state frame plus any interior
    // strokes, exactly what the canvas currently shows
    const conditionB64 = canvas.toDataURL("image/png").split(",")[1];
    const jobId = await app.startCompletion({
      backend: "mock-linear",
      resolution: 32,
      steps: 10,
      condition_base64: conditionB64,
    });
    jobPanel.textContent = `job ${jobId} running...`;
    const timer = setInterval(async () => {
      const status = await app.pollJob();
      const growth = status.progress.map((p) => p.grown_cells).join(", ");
      jobPanel.textContent = `job ${status.status}; growth per iteration: [${growth}]`;
      if (status.status === "done" || status.status === "failed" || status.status === "canceled") {
        clearInterval(timer);
        if (status.status === "done" && status.result) {
          jobPanel.textContent += status.result.converged
            ? ` - converged in ${status.result.iterations} iteration(s)`
            : " - hit the iteration budget";
        }
      }
    }, 400);
  });

  el<HTMLButtonElement>("export").addEventListener("click", async () => {
    const blob = await app.client.exportUrdfZip(app.requireSession());
    const url = URL.createObjectURL(blob);
    const a = document.createElement("a");
    a.href = url;
    a.download = "model_urdf.zip";
    a.click();
    URL.revokeObjectURL(url);
  });

  redraw();
}

boot().catch((e) => {
  document.body.insertAdjacentText("afterbegin", `failed to boot: ${e}`);
});
