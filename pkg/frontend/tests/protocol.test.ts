import { describe, expect, it } from "vitest";

import { makeCommandMessage, parseStateMessage, projectPoint } from "../src/protocol.js";
import { triangleState } from "./fakes.js";

describe("parseStateMessage", () => {
  it("accepts a well-formed broadcast", () => {
    const msg = parseStateMessage(JSON.stringify(triangleState()));
    expect(msg).not.toBeNull();
    expect(msg!.points).toHaveLength(3);
    expect(msg!.commandedPoint).toBe(2);
    expect(msg!.labels[2]).toBe("A3");
    expect(msg!.targets[0].radius).toBeCloseTo(0.1);
  });

  it("rejects non-json", () => {
    expect(parseStateMessage("definitely not json")).toBeNull();
  });

  it("rejects wrong type", () => {
    expect(parseStateMessage(JSON.stringify({ type: "telemetry" }))).toBeNull();
  });

  it("rejects non-finite coordinates", () => {
    const bad = triangleState({ points: [[0, 0], [1, null], [1, 2]] });
    expect(parseStateMessage(JSON.stringify(bad))).toBeNull();
  });

  it("rejects edges pointing outside the point list", () => {
    const bad = triangleState({ edges: [[0, 7]] });
    expect(parseStateMessage(JSON.stringify(bad))).toBeNull();
  });

  it("rejects plans with the wrong width", () => {
    const bad = triangleState({ plans: { "1": [[0, 0, 0]] } });
    expect(parseStateMessage(JSON.stringify(bad))).toBeNull();
  });

  it("rejects a commanded point index outside range", () => {
    const bad = triangleState({ commanded_point: 9 });
    expect(parseStateMessage(JSON.stringify(bad))).toBeNull();
  });
});

describe("makeCommandMessage", () => {
  it("serializes the documented shape", () => {
    const text = makeCommandMessage("A3", [0.2, 0]);
    expect(JSON.parse(text)).toEqual({ type: "command", node: "A3", v: [0.2, 0] });
  });
});

describe("projectPoint", () => {
  it("passes 2d points through", () => {
    expect(projectPoint([3, 4], "xy")).toEqual([3, 4]);
  });

  it("projects 3d points onto the configured plane", () => {
    expect(projectPoint([1, 2, 3], "xy")).toEqual([1, 2]);
    expect(projectPoint([1, 2, 3], "xz")).toEqual([1, 3]);
    expect(projectPoint([1, 2, 3], "yz")).toEqual([2, 3]);
  });
});
