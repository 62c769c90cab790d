// Wire protocol spoken by the teleoperation service: JSON text messages
// over a WebSocket. Parsing is defensive: a malformed state message yields
// null so the caller can skip the frame and show an error badge instead of
// crashing the render loop.

export interface TargetRegion {
  label?: string;
  center: [number, number];
  radius: number;
}

export interface StateMessage {
  type: "state";
  t: number;
  points: number[][];
  edges: [number, number][];
  plans: Record<string, number[][]>;
  command: number[];
  commandedPoint: number;
  targets: TargetRegion[];
  labels: string[];
}

export interface CommandMessage {
  type: "command";
  node: string | number;
  v: number[];
}

function isFiniteVector(x: unknown, length?: number): x is number[] {
  return (
    Array.isArray(x) &&
    (length === undefined || x.length === length) &&
    x.every((v) => typeof v === "number" && Number.isFinite(v))
  );
}

export function parseStateMessage(raw: string): StateMessage | null {
  let data: any;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (!data || data.type !== "state") return null;
  if (typeof data.t !== "number") return null;
  if (!Array.isArray(data.points) || !data.points.every((p: unknown) => isFiniteVector(p)))
    return null;
  const dim = data.points.length ? data.points[0].length : 2;
  if (!data.points.every((p: number[]) => p.length === dim)) return null;
  if (
    !Array.isArray(data.edges) ||
    !data.edges.every(
      (e: unknown) =>
        Array.isArray(e) &&
        e.length === 2 &&
        e.every((i) => Number.isInteger(i) && (i as number) >= 0 && (i as number) < data.points.length),
    )
  )
    return null;
  if (typeof data.plans !== "object" || data.plans === null) return null;
  for (const plan of Object.values(data.plans)) {
    if (!Array.isArray(plan) || !plan.every((v: unknown) => isFiniteVector(v, dim))) return null;
  }
  if (!isFiniteVector(data.command)) return null;
  const commanded = data.commanded_point;
  if (!Number.isInteger(commanded) || commanded < 0 || commanded >= data.points.length)
    return null;
  const targets: TargetRegion[] = Array.isArray(data.targets)
    ? data.targets.filter(
        (t: any) => t && isFiniteVector(t.center, 2) && typeof t.radius === "number",
      )
    : [];
  const labels: string[] = Array.isArray(data.labels)
    ? data.labels.map((s: unknown) => String(s))
    : data.points.map((_: unknown, i: number) => String(i + 1));
  return {
    type: "state",
    t: data.t,
    points: data.points,
    edges: data.edges,
    plans: data.plans,
    command: data.command,
    commandedPoint: commanded,
    targets,
    labels,
  };
}

export function makeCommandMessage(node: string | number, v: number[]): string {
  return JSON.stringify({ type: "command", node, v } satisfies CommandMessage);
}

// Orthographic projection for 3D scenarios: pick which world axes land on
// the screen plane.
export type ProjectionPlane = "xy" | "xz" | "yz";

export function projectPoint(p: number[], plane: ProjectionPlane): [number, number] {
  if (p.length === 2) return [p[0], p[1]];
  switch (plane) {
    case "xy":
      return [p[0], p[1]];
    case "xz":
      return [p[0], p[2]];
    case "yz":
      return [p[1], p[2]];
  }
}
