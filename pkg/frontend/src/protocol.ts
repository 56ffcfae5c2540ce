/**
 * Wire protocol shared with the engine bridge.
 *
 * Frame layout (little-endian):
 *   uint32  length = 1 + 8 + payload bytes
 *   uint8   kind
 *   uint64  stamp in microseconds
 *   payload
 *
 * Overlay payloads are 13-byte records: float32 x, y, z + 1 color-class
 * byte (0 default, 1 red human point, 2 box-wireframe corner, 8 corners per
 * box in fixed sign order). Metrics and SteerCmd payloads are UTF-8 JSON.
 */

export const KIND_SCAN = 1;
export const KIND_POSE = 2;
export const KIND_MAP = 3;
export const KIND_DETECTIONS = 4;
export const KIND_OVERLAY = 5;
export const KIND_STEER = 6;
export const KIND_METRICS = 7;

export const COLOR_DEFAULT = 0;
export const COLOR_RED = 1;
export const COLOR_BOX = 2;

export interface WireFrame {
  kind: number;
  stamp: number; // seconds
  payload: Uint8Array;
}

export interface OverlayPoints {
  stamp: number;
  positions: Float32Array; // 3 * n
  classes: Uint8Array;     // n
  counts: { total: number; default: number; red: number; boxCorners: number };
}

export interface MetricsRecord {
  stamp: number;
  data: Record<string, unknown>;
}

export class FrameDecodeError extends Error {}

const HEADER_BYTES = 4;
const BODY_MIN = 9;

/** Decode one frame at `offset`; throws FrameDecodeError on truncation. */
export function decodeFrame(buf: ArrayBuffer | Uint8Array, offset = 0): [WireFrame, number] {
  const bytes = buf instanceof Uint8Array ? buf : new Uint8Array(buf);
  if (bytes.byteLength - offset < HEADER_BYTES) {
    throw new FrameDecodeError("truncated frame header");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset + offset);
  const length = view.getUint32(0, true);
  if (length < BODY_MIN || bytes.byteLength - offset - HEADER_BYTES < length) {
    throw new FrameDecodeError("truncated frame body");
  }
  const kind = view.getUint8(4);
  const micros = view.getBigUint64(5, true);
  const payload = bytes.slice(offset + 13, offset + HEADER_BYTES + length);
  return [{ kind, stamp: Number(micros) / 1e6, payload }, offset + HEADER_BYTES + length];
}

/** Decode every complete frame in a buffer; stops cleanly at a partial tail. */
export function decodeFrames(buf: ArrayBuffer | Uint8Array): { frames: WireFrame[]; rest: number } {
  const frames: WireFrame[] = [];
  const bytes = buf instanceof Uint8Array ? buf : new Uint8Array(buf);
  let off = 0;
  while (off < bytes.byteLength) {
    try {
      const [frame, next] = decodeFrame(bytes, off);
      frames.push(frame);
      off = next;
    } catch (err) {
      if (err instanceof FrameDecodeError) break;
      throw err;
    }
  }
  return { frames, rest: bytes.byteLength - off };
}

const OVERLAY_STRIDE = 13;

/** Unpack an Overlay payload; classes come verbatim from the wire byte. */
export function decodeOverlay(frame: WireFrame): OverlayPoints {
  const payload = frame.payload;
  if (payload.byteLength % OVERLAY_STRIDE !== 0) {
    throw new FrameDecodeError(
      `overlay payload length ${payload.byteLength} not a multiple of ${OVERLAY_STRIDE}`);
  }
  const n = payload.byteLength / OVERLAY_STRIDE;
  const positions = new Float32Array(3 * n);
  const classes = new Uint8Array(n);
  const view = new DataView(payload.buffer, payload.byteOffset, payload.byteLength);
  let def = 0, red = 0, box = 0;
  for (let i = 0; i < n; i++) {
    const base = i * OVERLAY_STRIDE;
    positions[3 * i] = view.getFloat32(base, true);
    positions[3 * i + 1] = view.getFloat32(base + 4, true);
    positions[3 * i + 2] = view.getFloat32(base + 8, true);
    const c = view.getUint8(base + 12);
    classes[i] = c;
    if (c === COLOR_DEFAULT) def++;
    else if (c === COLOR_RED) red++;
    else if (c === COLOR_BOX) box++;
  }
  return {
    stamp: frame.stamp,
    positions,
    classes,
    counts: { total: n, default: def, red, boxCorners: box },
  };
}

export function decodeMetrics(frame: WireFrame): MetricsRecord {
  const text = new TextDecoder().decode(frame.payload);
  return { stamp: frame.stamp, data: JSON.parse(text) };
}

/** Format a float the way the engine's JSON encoder does (1 -> "1.0"). */
export function pyFloat(x: number): string {
  if (Number.isInteger(x)) return `${x}.0`;
  return String(x);
}

/** Encode a SteerCmd frame byte-compatible with the engine side. */
export function encodeSteer(stamp: number, vx: number, vy: number, omega: number): Uint8Array {
  const r = (v: number) => Math.round(v * 1e6) / 1e6;
  const json = `{"om":${pyFloat(r(omega))},"vx":${pyFloat(r(vx))},"vy":${pyFloat(r(vy))}}`;
  const payload = new TextEncoder().encode(json);
  const buf = new Uint8Array(4 + 1 + 8 + payload.byteLength);
  const view = new DataView(buf.buffer);
  view.setUint32(0, 1 + 8 + payload.byteLength, true);
  view.setUint8(4, KIND_STEER);
  view.setBigUint64(5, BigInt(Math.max(0, Math.round(stamp * 1e6))), true);
  buf.set(payload, 13);
  return buf;
}
