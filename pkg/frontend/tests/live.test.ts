// Live round trip against the actual teleoperation service.
//
// Gated behind RUN_LIVE=1 because it spawns the Python server:
//   RUN_LIVE=1 npx vitest run tests/live.test.ts
// The replayed input timeline must show up in the broadcast plan arrows
// within 3 ticks, and rendering must keep up with a 10 Hz broadcast.

import { spawn } from "node:child_process";
import { describe, expect, it } from "vitest";

import { CommandStreamer } from "../src/input.js";
import { acceptMessage, newViewState, render } from "../src/view.js";
import { RecordingSurface } from "./fakes.js";

const LIVE = process.env.RUN_LIVE === "1";
const PORT = 8971;

function waitForServer(ws: any): Promise<void> {
  return new Promise((resolve, reject) => {
    ws.on("open", resolve);
    ws.on("error", reject);
  });
}

describe.runIf(LIVE)("live teleoperation round trip", () => {
  it("reflects replayed commands within 3 ticks and renders at 10 Hz", async () => {
    const server = spawn(
      "python3",
      [
        "-m", "trussnet.cli", "serve",
        "--scenario", "../scenarios/triangle_teleop.json",
        "--node", "A3", "--port", String(PORT), "--hz", "10",
        "--iters", "20",
      ],
      { cwd: __dirname + "/..", stdio: "ignore" },
    );
    try {
      await new Promise((r) => setTimeout(r, 4000)); // server warmup
      const { WebSocket } = await import("ws");
      const ws: any = new WebSocket(`ws://127.0.0.1:${PORT}/ws`);
      await waitForServer(ws);

      const view = newViewState();
      view.connected = true;
      const surface = new RecordingSurface();
      const streamer = new CommandStreamer("A3", 0.2, 20);
      const sender = { ready: true, send: (t: string) => ws.send(t) };

      let states = 0;
      let statesWhenSent = -1;
      let reflectedAt = -1;
      let done: () => void = () => {};
      const finished = new Promise<void>((r) => (done = r));

      ws.on("message", (data: Buffer) => {
        const kind = acceptMessage(view, data.toString());
        if (kind !== "state") return;
        states += 1;
        render(surface, view, { plane: "xy", arrowScale: 100 });
        streamer.maybeSend(sender, [-1, 0], Date.now());
        if (statesWhenSent < 0) statesWhenSent = states;
        const plan = view.latest!.plans["3"]?.[view.latest!.commandedPoint];
        if (reflectedAt < 0 && plan && Math.abs(plan[0] + 0.2) < 0.05) {
          reflectedAt = states;
        }
        if (states >= 30) done();
      });
      await finished;
      ws.close();

      expect(reflectedAt).toBeGreaterThan(0);
      expect(reflectedAt - statesWhenSent).toBeLessThanOrEqual(3);
      expect(view.framesDrawn).toBe(states); // no dropped frames at 10 Hz
      expect(view.badFrames).toBe(0);
    } finally {
      server.kill("SIGKILL");
    }
  }, 90000);
});

describe.runIf(!LIVE)("live test placeholder", () => {
  it("is skipped without RUN_LIVE=1", () => {
    expect(LIVE).toBe(false);
  });
});
