/** Canvas compositing: the server frame underneath, strokes, the focal
 * rectangle, and the predicted-part highlight on top. */

import type { CanvasStroke } from "./strokes.js";

export interface OverlayLayers {
  frame: CanvasImageSource | null;
  partMask: CanvasImageSource | null;
  strokes: CanvasStroke[];
  focalRect: [number, number, number, number] | null;
}

export function drawOverlay(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  layers: OverlayLayers,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = "#f8fafc";
  ctx.fillRect(0, 0, width, height);
  if (layers.frame) {
    ctx.drawImage(layers.frame, 0, 0, width, height);
  }
  if (layers.partMask) {
    ctx.save();
    ctx.globalAlpha = 0.35;
    ctx.globalCompositeOperation = "multiply";
    ctx.drawImage(layers.partMask, 0, 0, width, height);
    ctx.restore();
  }
  if (layers.focalRect) {
    const [x, y, w, h] = layers.focalRect;
    ctx.save();
    ctx.strokeStyle = "#16a34a";
    ctx.setLineDash([6, 4]);
    ctx.lineWidth = 2;
    ctx.strokeRect(x, y, w, h);
    ctx.restore();
  }
  for (const stroke of layers.strokes) {
    if (stroke.points.length < 2) continue;
    ctx.save();
    ctx.strokeStyle = stroke.color;
    ctx.lineWidth = stroke.width;
    ctx.lineJoin = "round";
    ctx.lineCap = "round";
    ctx.beginPath();
    ctx.moveTo(stroke.points[0][0], stroke.points[0][1]);
    for (const [x, y] of stroke.points.slice(1)) {
      ctx.lineTo(x, y);
    }
    ctx.stroke();
    ctx.restore();
  }
}

/** Tint the white pixels of the part-mask PNG for the highlight. */
export async function tintMask(pngBase64: string, color: [number, number, number]): Promise<ImageBitmap> {
  const raw = atob(pngBase64);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  const bitmap = await createImageBitmap(new Blob([bytes], { type: "image/png" }));
  const canvas = new OffscreenCanvas(bitmap.width, bitmap.height);
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  const img = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  const d = img.data;
  for (let i = 0; i < d.length; i += 4) {
    const on = d[i] > 128;
    d[i] = on ? color[0] : 255;
    d[i + 1] = on ? color[1] : 255;
    d[i + 2] = on ? color[2] : 255;
    d[i + 3] = 255;
  }
  ctx.putImageData(img, 0, 0);
  return createImageBitmap(canvas);
}
