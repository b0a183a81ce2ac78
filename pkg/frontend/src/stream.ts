// The session event stream: a WebSocket with reconnect and seq-based
// reconciliation. On every (re)connect the server replays from seq 1; frames
// at or below the highest seq already delivered are dropped, so the consumer
// sees each event exactly once and strictly in order.

import type { ServerFrame } from "./types.js";

export interface WsLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

export interface StreamOptions {
  onFrame: (frame: ServerFrame) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
  wsFactory?: WsFactory;
  reconnectDelayMs?: number;
  maxReconnects?: number;
}

const defaultFactory: WsFactory = (url) =>
  new WebSocket(url) as unknown as WsLike;

export class SessionStream {
  private ws: WsLike | null = null;
  private lastSeq = 0;
  private reconnects = 0;
  private stopped = false;

  constructor(private url: string, private options: StreamOptions) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  private connect(): void {
    this.options.onStatus?.("connecting");
    const factory = this.options.wsFactory ?? defaultFactory;
    const ws = factory(this.url);
    this.ws = ws;
    ws.onopen = () => this.options.onStatus?.("open");
    ws.onmessage = (event) => {
      let frame: ServerFrame;
      try {
        frame = JSON.parse(String(event.data)) as ServerFrame;
      } catch {
        return;
      }
      if (frame.type === "error") {
        this.options.onFrame(frame);
        return;
      }
      if (frame.seq <= this.lastSeq) {
        return; // catch-up replay of something already delivered
      }
      this.lastSeq = frame.seq;
      this.options.onFrame(frame);
      if (frame.type === "phase_change" && frame.phase === "closed") {
        this.stop();
      }
    };
    ws.onerror = () => {
      // onclose follows; reconnection is handled there
    };
    ws.onclose = () => {
      this.options.onStatus?.("closed");
      if (this.stopped) return;
      const max = this.options.maxReconnects ?? 20;
      if (this.reconnects >= max) return;
      this.reconnects += 1;
      const delay = this.options.reconnectDelayMs ?? 500;
      setTimeout(() => {
        if (!this.stopped) this.connect();
      }, delay);
    };
  }

  send(text: string): void {
    if (this.ws === null) throw new Error("stream is not connected");
    this.ws.send(JSON.stringify({ type: "user_utterance", text }));
  }

  stop(): void {
    this.stopped = true;
    this.ws?.close();
  }

  get highestSeq(): number {
    return this.lastSeq;
  }
}
