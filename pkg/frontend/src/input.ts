// Input capture and command streaming.
//
// Arrow keys and an on-screen drag joystick both produce a normalized
// input vector in [-1, 1]^2; the streamer multiplies it by the speed scale
// and sends command messages at a bounded rate, deduplicating repeated
// zero inputs so an idle client goes quiet (the server decays the command
// to zero on staleness anyway).

import { makeCommandMessage } from "./protocol.js";

export interface InputState {
  keys: Set<string>;
  joystick: [number, number] | null; // normalized drag vector when active
}

export function newInputState(): InputState {
  return { keys: new Set(), joystick: null };
}

const KEY_VECTORS: Record<string, [number, number]> = {
  ArrowLeft: [-1, 0],
  ArrowRight: [1, 0],
  ArrowUp: [0, 1],
  ArrowDown: [0, -1],
};

export function keyDown(state: InputState, key: string): void {
  if (key in KEY_VECTORS) state.keys.add(key);
}

export function keyUp(state: InputState, key: string): void {
  state.keys.delete(key);
}

export function setJoystick(state: InputState, v: [number, number] | null): void {
  if (v === null) {
    state.joystick = null;
    return;
  }
  const clamp = (x: number) => Math.max(-1, Math.min(1, x));
  state.joystick = [clamp(v[0]), clamp(v[1])];
}

// The joystick, when active, overrides the keys.
export function inputVector(state: InputState): [number, number] {
  if (state.joystick !== null) return state.joystick;
  let x = 0;
  let y = 0;
  for (const key of state.keys) {
    const [dx, dy] = KEY_VECTORS[key];
    x += dx;
    y += dy;
  }
  return [Math.max(-1, Math.min(1, x)), Math.max(-1, Math.min(1, y))];
}

export function inputToCommand(
  input: [number, number],
  scale: number,
  node: string | number,
): string {
  return makeCommandMessage(node, [scale * input[0], scale * input[1]]);
}

export interface Sender {
  send(text: string): void;
  readonly ready: boolean;
}

// Rate-limited command stream: at most maxHz sends, and a zero input is
// sent once (to stop the robot) then suppressed until something changes.
export class CommandStreamer {
  private lastSent = -Infinity;
  private lastWasZero = false;

  constructor(
    private readonly node: string | number,
    private readonly scale: number,
    private readonly maxHz: number = 20,
  ) {}

  maybeSend(sender: Sender, input: [number, number], nowMs: number): boolean {
    if (!sender.ready) return false;
    const isZero = input[0] === 0 && input[1] === 0;
    if (isZero && this.lastWasZero) return false;
    if (nowMs - this.lastSent < 1000 / this.maxHz) return false;
    sender.send(inputToCommand(input, this.scale, this.node));
    this.lastSent = nowMs;
    this.lastWasZero = isZero;
    return true;
  }
}
