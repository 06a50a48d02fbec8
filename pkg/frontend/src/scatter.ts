/** Scatter rendering for a query card: labeled source points as context,
 * the queried sample as a highlighted ring. Only the projector is exported
 * separately so the coordinate math is testable without a canvas. */

import type { SourcePoint } from "./types.js";

export interface Projector {
  toPixel(x: number, y: number): [number, number];
}

export function makeProjector(
  points: Array<[number, number]>,
  width: number,
  height: number,
  padFraction = 0.08,
): Projector {
  let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
  for (const [x, y] of points) {
    xMin = Math.min(xMin, x); xMax = Math.max(xMax, x);
    yMin = Math.min(yMin, y); yMax = Math.max(yMax, y);
  }
  if (!isFinite(xMin)) { xMin = -1; xMax = 1; yMin = -1; yMax = 1; }
  if (xMax === xMin) { xMax += 1; xMin -= 1; }
  if (yMax === yMin) { yMax += 1; yMin -= 1; }
  const padX = (xMax - xMin) * padFraction;
  const padY = (yMax - yMin) * padFraction;
  xMin -= padX; xMax += padX; yMin -= padY; yMax += padY;
  return {
    toPixel(x: number, y: number): [number, number] {
      const px = ((x - xMin) / (xMax - xMin)) * width;
      const py = height - ((y - yMin) / (yMax - yMin)) * height;
      return [px, py];
    },
  };
}

const NEGATIVE_COLOR = "#7aa6c2";
const POSITIVE_COLOR = "#d0694a";
const QUERY_COLOR = "#222222";

export function drawCard(
  canvas: HTMLCanvasElement,
  source: SourcePoint[],
  query: number[],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const w = canvas.width;
  const h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const qx = query[0] ?? 0;
  const qy = query[1] ?? 0;
  const coords: Array<[number, number]> = source.map(([x, y]) => [x, y]);
  coords.push([qx, qy]);
  const proj = makeProjector(coords, w, h);
  for (const [x, y, label] of source) {
    const [px, py] = proj.toPixel(x, y);
    ctx.fillStyle = label === 1 ? POSITIVE_COLOR : NEGATIVE_COLOR;
    ctx.globalAlpha = 0.5;
    ctx.beginPath();
    ctx.arc(px, py, 2, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.globalAlpha = 1.0;
  const [px, py] = proj.toPixel(qx, qy);
  ctx.strokeStyle = QUERY_COLOR;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(px, py, 6, 0, Math.PI * 2);
  ctx.stroke();
  ctx.fillStyle = QUERY_COLOR;
  ctx.beginPath();
  ctx.arc(px, py, 2.5, 0, Math.PI * 2);
  ctx.fill();
}
