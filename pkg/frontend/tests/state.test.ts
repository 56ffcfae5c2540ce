import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { KIND_METRICS } from "../src/protocol.js";
import { applyBuffer, initialState } from "../src/state.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function fixture(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIXTURES, name)));
}

function encodeMetrics(stamp: number, data: Record<string, unknown>): Uint8Array {
  const payload = new TextEncoder().encode(JSON.stringify(data));
  const buf = new Uint8Array(13 + payload.byteLength);
  const view = new DataView(buf.buffer);
  view.setUint32(0, 9 + payload.byteLength, true);
  view.setUint8(4, KIND_METRICS);
  view.setBigUint64(5, BigInt(Math.round(stamp * 1e6)), true);
  buf.set(payload, 13);
  return buf;
}

describe("console state reducer", () => {
  it("is pure: the same bytes produce the same state", () => {
    const buf = fixture("overlay_frames.bin");
    const a = applyBuffer(initialState(), buf);
    const b = applyBuffer(initialState(), buf);
    expect(a.framesSeen).toBe(b.framesSeen);
    expect(a.overlay?.counts).toEqual(b.overlay?.counts);
    expect(a.decodeErrors).toBe(0);
  });

  it("keeps the latest overlay and counts frames", () => {
    const state = applyBuffer(initialState(), fixture("overlay_frames.bin"));
    expect(state.framesSeen).toBe(4);
    expect(state.overlay).not.toBeNull();
  });

  it("tracks metrics, rendering-disabled banner state and realign events", () => {
    let state = initialState();
    state = applyBuffer(state, encodeMetrics(1.0, {
      eps: 0.01, eta: 0.9, degen: 0.01, rendering_enabled: true, realign_count: 0,
    }));
    expect(state.renderingEnabled).toBe(true);
    state = applyBuffer(state, encodeMetrics(2.0, {
      eps: 0.2, eta: 0.3, degen: 0.001, rendering_enabled: false, realign_count: 0,
    }));
    expect(state.renderingEnabled).toBe(false);
    expect(state.events.some((e) => e.text.includes("rendering disabled"))).toBe(true);
    state = applyBuffer(state, encodeMetrics(3.0, {
      eps: 0.01, eta: 0.9, degen: 0.01, rendering_enabled: true, realign_count: 1,
    }));
    expect(state.renderingEnabled).toBe(true);
    expect(state.realignCount).toBe(1);
    expect(state.events.some((e) => e.text.includes("re-align #1"))).toBe(true);
  });

  it("survives malformed frames, incrementing the error counter", () => {
    const junk = new Uint8Array([3, 0, 0, 0, 9, 9]);
    const state = applyBuffer(initialState(), junk);
    expect(state.decodeErrors).toBe(1);
    // session keeps working afterwards
    const next = applyBuffer(state, fixture("overlay_frames.bin"));
    expect(next.framesSeen).toBe(4);
  });
});
