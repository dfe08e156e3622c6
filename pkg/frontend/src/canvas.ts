// 2-D rendering of a continuous session: the search domain, the current
// region, and the pending query pair.  Coordinate transforms are pure so
// they can be unit-tested without a canvas.

export interface Viewport {
  width: number;
  height: number;
  omegaCenter: [number, number];
  omegaEdge: number;
  margin: number;
}

// world -> pixel; the domain maps to the padded square, y up in world
// coordinates but down in pixels
export function worldToPixel(v: Viewport, x: number, y: number): [number, number] {
  const scale = (Math.min(v.width, v.height) - 2 * v.margin) / v.omegaEdge;
  const px = v.margin + (x - (v.omegaCenter[0] - v.omegaEdge / 2)) * scale;
  const py = v.height - v.margin - (y - (v.omegaCenter[1] - v.omegaEdge / 2)) * scale;
  return [px, py];
}

export function rectToPixels(
  v: Viewport,
  center: [number, number],
  edge: number,
): { left: number; top: number; size: number } {
  const [left, top] = worldToPixel(v, center[0] - edge / 2, center[1] + edge / 2);
  const [right] = worldToPixel(v, center[0] + edge / 2, center[1] - edge / 2);
  return { left, top, size: right - left };
}

export function drawContinuousView(
  canvas: HTMLCanvasElement,
  v: Viewport,
  regionCenter: [number, number],
  regionEdge: number,
  pointA: [number, number] | null,
  pointB: [number, number] | null,
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return; // headless test environments have no 2-D context
  }
  ctx.clearRect(0, 0, v.width, v.height);
  const omega = rectToPixels(v, v.omegaCenter, v.omegaEdge);
  ctx.strokeStyle = "#555";
  ctx.lineWidth = 1;
  ctx.strokeRect(omega.left, omega.top, omega.size, omega.size);

  const region = rectToPixels(v, regionCenter, regionEdge);
  ctx.strokeStyle = "#0a7f3f";
  ctx.lineWidth = 2;
  ctx.strokeRect(region.left, region.top, region.size, region.size);

  const drawPoint = (p: [number, number], label: string, color: string) => {
    const [px, py] = worldToPixel(v, p[0], p[1]);
    ctx.fillStyle = color;
    ctx.beginPath();
    ctx.arc(px, py, 6, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(label, px + 8, py - 8);
  };
  if (pointA) drawPoint(pointA, "A", "#0173b2");
  if (pointB) drawPoint(pointB, "B", "#d55e00");
}
