// Browser wiring: URL query parameters pick the server and steered node,
// one render loop consumes the newest broadcast per frame, and keyboard or
// joystick input streams velocity commands.
//
//   index.html?host=127.0.0.1&port=8765&node=A3&scale=0.2&plane=xy

import { CanvasSurface } from "./canvas.js";
import { TeleopClient } from "./client.js";
import {
  CommandStreamer,
  inputVector,
  keyDown,
  keyUp,
  newInputState,
  setJoystick,
} from "./input.js";
import { ProjectionPlane } from "./protocol.js";
import { acceptMessage, newViewState, render } from "./view.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

export function start(): void {
  const host = param("host", "127.0.0.1");
  const port = param("port", "8765");
  const node = param("node", "A3");
  const scale = parseFloat(param("scale", "0.2"));
  const plane = param("plane", "xy") as ProjectionPlane;

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const surface = new CanvasSurface(canvas.getContext("2d")!);
  const view = newViewState();
  const input = newInputState();
  const streamer = new CommandStreamer(node, scale);

  const client = new TeleopClient(`ws://${host}:${port}/ws`, (url) => new WebSocket(url), {
    onConnect: () => {
      view.connected = true;
    },
    onDisconnect: () => {
      view.connected = false;
    },
  });
  client.connect();

  window.addEventListener("keydown", (ev) => keyDown(input, ev.key));
  window.addEventListener("keyup", (ev) => keyUp(input, ev.key));

  // drag anywhere on the canvas to use it as a virtual joystick
  let dragStart: [number, number] | null = null;
  const joystickRadius = 80;
  canvas.addEventListener("pointerdown", (ev) => {
    dragStart = [ev.offsetX, ev.offsetY];
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (dragStart === null) return;
    const dx = (ev.offsetX - dragStart[0]) / joystickRadius;
    const dy = -(ev.offsetY - dragStart[1]) / joystickRadius;
    setJoystick(input, [dx, dy]);
  });
  const release = () => {
    dragStart = null;
    setJoystick(input, null);
  };
  canvas.addEventListener("pointerup", release);
  canvas.addEventListener("pointerleave", release);

  const frame = () => {
    const raw = client.take();
    if (raw !== null) acceptMessage(view, raw);
    streamer.maybeSend(client, inputVector(input), performance.now());
    render(surface, view, { plane, arrowScale: 120 });
    requestAnimationFrame(frame);
  };
  requestAnimationFrame(frame);
}

start();
