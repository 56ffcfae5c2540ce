/**
 * Keyboard steering: samples key state at a fixed rate and emits SteerCmd
 * wire frames. Conflicting keys cancel; zero input sends nothing.
 */

import { encodeSteer } from "./protocol.js";

export const STEER_RATE_HZ = 10.0;
export const STEER_SPEED = 1.0; // m/s
export const STEER_TURN = 0.8;  // rad/s

export type SteerKey = "fwd" | "back" | "left" | "right" | "turn_l" | "turn_r";

export interface SteerCommand {
  vx: number;
  vy: number;
  omega: number;
}

export function commandFromKeys(keys: Iterable<SteerKey>): SteerCommand | null {
  const set = new Set(keys);
  const vx = (set.has("fwd") ? STEER_SPEED : 0) - (set.has("back") ? STEER_SPEED : 0);
  const vy = (set.has("left") ? STEER_SPEED : 0) - (set.has("right") ? STEER_SPEED : 0);
  const omega = (set.has("turn_l") ? STEER_TURN : 0) - (set.has("turn_r") ? STEER_TURN : 0);
  if (vx === 0 && vy === 0 && omega === 0) return null;
  return { vx, vy, omega };
}

/** The byte stream a scripted key-state sequence produces, sample i at
 * stamp start + i / rate. This is the golden-fixture contract. */
export function steerStream(script: SteerKey[][], startStamp = 0.0): Uint8Array {
  const parts: Uint8Array[] = [];
  script.forEach((keys, i) => {
    const cmd = commandFromKeys(keys);
    if (cmd === null) return;
    const stamp = startStamp + i / STEER_RATE_HZ;
    parts.push(encodeSteer(stamp, cmd.vx, cmd.vy, cmd.omega));
  });
  const total = parts.reduce((n, p) => n + p.byteLength, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.byteLength;
  }
  return out;
}

export const KEY_BINDINGS: Record<string, SteerKey> = {
  KeyW: "fwd",
  KeyS: "back",
  KeyA: "left",
  KeyD: "right",
  KeyQ: "turn_l",
  KeyE: "turn_r",
  ArrowUp: "fwd",
  ArrowDown: "back",
  ArrowLeft: "turn_l",
  ArrowRight: "turn_r",
};

/** Live sampler: track held keys from DOM events, emit on a fixed timer. */
export class SteerSampler {
  private held = new Set<SteerKey>();
  private timer: ReturnType<typeof setInterval> | null = null;
  private t = 0;

  constructor(private send: (bytes: Uint8Array) => void) {}

  keyDown(code: string): void {
    const key = KEY_BINDINGS[code];
    if (key) this.held.add(key);
  }

  keyUp(code: string): void {
    const key = KEY_BINDINGS[code];
    if (key) this.held.delete(key);
  }

  sampleOnce(stamp?: number): Uint8Array | null {
    const cmd = commandFromKeys(this.held);
    const s = stamp ?? this.t;
    this.t = s + 1 / STEER_RATE_HZ;
    if (cmd === null) return null;
    const bytes = encodeSteer(s, cmd.vx, cmd.vy, cmd.omega);
    this.send(bytes);
    return bytes;
  }

  start(): void {
    if (this.timer) return;
    this.timer = setInterval(() => this.sampleOnce(), 1000 / STEER_RATE_HZ);
  }

  stop(): void {
    if (this.timer) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
