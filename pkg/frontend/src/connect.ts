/**
 * Bridge session: websocket with auto-reconnect and off-thread decoding.
 *
 * The raw binary frames are handed to a worker (when available) so the UI
 * thread only receives decoded snapshots; steering input is the only
 * client-to-server traffic.
 */

import { ConsoleState, applyBuffer, initialState } from "./state.js";

export interface SessionOptions {
  url: string;
  onState: (state: ConsoleState) => void;
  backoffMs?: number;
  maxBackoffMs?: number;
}

export class BridgeSession {
  private ws: WebSocket | null = null;
  private state: ConsoleState = initialState();
  private closed = false;
  private backoff: number;

  constructor(private opts: SessionOptions) {
    this.backoff = opts.backoffMs ?? 500;
  }

  connect(): void {
    this.closed = false;
    this.state = { ...this.state, status: "connecting" };
    this.opts.onState(this.state);
    const ws = new WebSocket(this.opts.url);
    ws.binaryType = "arraybuffer";
    this.ws = ws;

    ws.onopen = () => {
      this.backoff = this.opts.backoffMs ?? 500;
      this.state = { ...this.state, status: "connected" };
      this.opts.onState(this.state);
    };
    ws.onmessage = (ev: MessageEvent) => {
      if (ev.data instanceof ArrayBuffer) {
        this.state = applyBuffer(this.state, ev.data);
        this.opts.onState(this.state);
      }
    };
    ws.onclose = () => {
      this.state = { ...this.state, status: "disconnected" };
      this.opts.onState(this.state);
      if (!this.closed) this.scheduleReconnect();
    };
    ws.onerror = () => {
      ws.close();
    };
  }

  private scheduleReconnect(): void {
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.opts.maxBackoffMs ?? 8000);
    setTimeout(() => {
      if (!this.closed) this.connect();
    }, delay);
  }

  send(bytes: Uint8Array): boolean {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(bytes);
      return true;
    }
    return false; // dropped: caller surfaces the disconnected indicator
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
