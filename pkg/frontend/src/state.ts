/**
 * Console state: a pure reducer over decoded wire frames.
 *
 * The console never re-classifies points: the overlay partition is exactly
 * what the engine emitted. Rendering-disabled blanks the overlay layers but
 * keeps the base cloud.
 */

import {
  FrameDecodeError,
  KIND_METRICS,
  KIND_OVERLAY,
  MetricsRecord,
  OverlayPoints,
  WireFrame,
  decodeFrame,
  decodeMetrics,
  decodeOverlay,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected";

export interface ConsoleEvent {
  stamp: number;
  text: string;
}

export interface ConsoleState {
  status: ConnectionStatus;
  overlay: OverlayPoints | null;
  metrics: MetricsRecord | null;
  renderingEnabled: boolean;
  realignCount: number;
  decodeErrors: number;
  events: ConsoleEvent[];
  framesSeen: number;
}

export function initialState(): ConsoleState {
  return {
    status: "disconnected",
    overlay: null,
    metrics: null,
    renderingEnabled: true,
    realignCount: 0,
    decodeErrors: 0,
    events: [],
    framesSeen: 0,
  };
}

const EVENT_LIMIT = 50;

function pushEvent(events: ConsoleEvent[], stamp: number, text: string): ConsoleEvent[] {
  const next = events.concat([{ stamp, text }]);
  return next.length > EVENT_LIMIT ? next.slice(next.length - EVENT_LIMIT) : next;
}

export function applyFrame(state: ConsoleState, frame: WireFrame): ConsoleState {
  try {
    if (frame.kind === KIND_OVERLAY) {
      const overlay = decodeOverlay(frame);
      return { ...state, overlay, framesSeen: state.framesSeen + 1 };
    }
    if (frame.kind === KIND_METRICS) {
      const metrics = decodeMetrics(frame);
      const data = metrics.data as { rendering_enabled?: boolean; realign_count?: number };
      let events = state.events;
      const enabled = data.rendering_enabled !== false;
      if (enabled !== state.renderingEnabled) {
        events = pushEvent(events, metrics.stamp,
          enabled ? "rendering re-enabled" : "alignment rejected: rendering disabled");
      }
      const realigns = data.realign_count ?? state.realignCount;
      if (realigns > state.realignCount) {
        events = pushEvent(events, metrics.stamp, `re-align #${realigns}`);
      }
      return {
        ...state,
        metrics,
        renderingEnabled: enabled,
        realignCount: realigns,
        events,
      };
    }
    return state; // other kinds are not interesting to the console
  } catch {
    return { ...state, decodeErrors: state.decodeErrors + 1 };
  }
}

/** Apply every frame in a raw buffer; a malformed frame is discarded and
 * counted, the session state survives. */
export function applyBuffer(state: ConsoleState, buf: ArrayBuffer | Uint8Array): ConsoleState {
  const bytes = buf instanceof Uint8Array ? buf : new Uint8Array(buf);
  let next = state;
  let off = 0;
  while (off < bytes.byteLength) {
    try {
      const [frame, n] = decodeFrame(bytes, off);
      next = applyFrame(next, frame);
      off = n;
    } catch (err) {
      if (err instanceof FrameDecodeError) {
        next = { ...next, decodeErrors: next.decodeErrors + 1 };
        break;
      }
      throw err;
    }
  }
  return next;
}
