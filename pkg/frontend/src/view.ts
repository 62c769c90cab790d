// Rendering: latest state message in, one drawn frame out. The view never
// extrapolates physics; if no fresh message arrived, the previous frame
// simply stays on screen.

import { ProjectionPlane, StateMessage, parseStateMessage, projectPoint } from "./protocol.js";

export interface DrawSurface {
  readonly width: number;
  readonly height: number;
  clear(): void;
  line(x1: number, y1: number, x2: number, y2: number, color: string, width: number): void;
  circle(x: number, y: number, r: number, color: string, fill: boolean): void;
  text(s: string, x: number, y: number, color: string): void;
}

export interface Transform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

// World-to-screen transform that fits a bounding box while preserving the
// aspect ratio (equal scale on both axes, y up).
export function fitTransform(
  points: [number, number][],
  width: number,
  height: number,
  marginFrac = 0.12,
): Transform {
  let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
  for (const [x, y] of points) {
    minX = Math.min(minX, x);
    maxX = Math.max(maxX, x);
    minY = Math.min(minY, y);
    maxY = Math.max(maxY, y);
  }
  if (!Number.isFinite(minX)) {
    return { scale: 1, offsetX: width / 2, offsetY: height / 2 };
  }
  const spanX = Math.max(maxX - minX, 1e-9);
  const spanY = Math.max(maxY - minY, 1e-9);
  const margin = marginFrac * Math.max(width, height);
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
  const cx = (minX + maxX) / 2;
  const cy = (minY + maxY) / 2;
  return {
    scale,
    offsetX: width / 2 - scale * cx,
    offsetY: height / 2 + scale * cy,
  };
}

export function toScreen(t: Transform, x: number, y: number): [number, number] {
  return [t.offsetX + t.scale * x, t.offsetY - t.scale * y];
}

export interface ViewOptions {
  plane: ProjectionPlane;
  arrowScale: number; // screen pixels per m/s
}

export interface ViewState {
  latest: StateMessage | null;
  connected: boolean;
  badFrames: number;
  framesDrawn: number;
  lastError: string | null;
}

export function newViewState(): ViewState {
  return { latest: null, connected: false, badFrames: 0, framesDrawn: 0, lastError: null };
}

function drawArrow(
  surface: DrawSurface,
  x: number,
  y: number,
  vx: number,
  vy: number,
  color: string,
  width: number,
) {
  const tipX = x + vx;
  const tipY = y + vy;
  surface.line(x, y, tipX, tipY, color, width);
  const len = Math.hypot(vx, vy);
  if (len < 1e-6) return;
  const ux = vx / len;
  const uy = vy / len;
  const head = Math.min(8, len / 2);
  surface.line(tipX, tipY, tipX - head * (ux + 0.5 * uy), tipY - head * (uy - 0.5 * ux), color, width);
  surface.line(tipX, tipY, tipX - head * (ux - 0.5 * uy), tipY - head * (uy + 0.5 * ux), color, width);
}

// Draw one frame: robot edges and nodes, target regions, every node's local
// plan arrow at the commanded point (the spread of knowledge of the
// command), and the commanded velocity itself.
export function render(surface: DrawSurface, view: ViewState, options: ViewOptions): void {
  const state = view.latest;
  surface.clear();
  if (!view.connected) {
    surface.text("disconnected", 10, 20, "#c0392b");
  }
  if (view.badFrames > 0) {
    surface.text(`malformed messages: ${view.badFrames}`, 10, 38, "#c0392b");
  }
  if (!state) return;

  const projected = state.points.map((p) => projectPoint(p, options.plane));
  const transform = fitTransform(projected, surface.width, surface.height);

  for (const target of state.targets) {
    const [cx, cy] = toScreen(transform, target.center[0], target.center[1]);
    surface.circle(cx, cy, target.radius * transform.scale, "#e67e22", false);
    if (target.label) surface.text(target.label, cx + 4, cy - 4, "#e67e22");
  }
  for (const [i, j] of state.edges) {
    const [x1, y1] = toScreen(transform, projected[i][0], projected[i][1]);
    const [x2, y2] = toScreen(transform, projected[j][0], projected[j][1]);
    surface.line(x1, y1, x2, y2, "#2c3e50", 2);
  }
  projected.forEach(([x, y], idx) => {
    const [sx, sy] = toScreen(transform, x, y);
    surface.circle(sx, sy, idx === state.commandedPoint ? 6 : 4, "#2c3e50", true);
    surface.text(state.labels[idx] ?? String(idx + 1), sx + 6, sy - 6, "#7f8c8d");
  });

  // each node's local copy of the commanded point's planned velocity
  const [px, py] = toScreen(
    transform,
    projected[state.commandedPoint][0],
    projected[state.commandedPoint][1],
  );
  for (const plan of Object.values(state.plans)) {
    const v = plan[state.commandedPoint];
    const [vx, vy] = projectPoint(v, options.plane);
    drawArrow(surface, px, py, vx * options.arrowScale, -vy * options.arrowScale, "#27ae60", 1.5);
  }
  const [cx, cy] = projectPoint(state.command, options.plane);
  if (Math.hypot(cx, cy) > 1e-9) {
    drawArrow(surface, px, py, cx * options.arrowScale, -cy * options.arrowScale, "#c0392b", 2.5);
  }
  surface.text(`t = ${state.t.toFixed(2)} s`, 10, surface.height - 10, "#7f8c8d");
  view.framesDrawn += 1;
}

// Feed raw socket text into the view; malformed frames are counted and
// skipped, never drawn.  Server-side rejections are kept for the badge but
// don't count as malformed frames.
export function acceptMessage(view: ViewState, raw: string): "state" | "error" | "malformed" {
  try {
    const probe = JSON.parse(raw);
    if (probe && probe.type === "error") {
      view.lastError = String(probe.detail ?? "rejected");
      return "error";
    }
  } catch {
    view.badFrames += 1;
    return "malformed";
  }
  const parsed = parseStateMessage(raw);
  if (parsed === null) {
    view.badFrames += 1;
    return "malformed";
  }
  view.latest = parsed;
  return "state";
}
