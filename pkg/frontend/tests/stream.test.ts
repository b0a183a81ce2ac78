import { describe, expect, it, vi } from "vitest";

import { SessionStream, type WsLike } from "../src/stream.js";
import type { ServerFrame } from "../src/types.js";

class FakeWs implements WsLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }

  // test helpers
  open(): void {
    this.onopen?.();
  }

  push(frame: object): void {
    this.onmessage?.({ data: JSON.stringify(frame) });
  }
}

function frame(seq: number, text = `t${seq}`): object {
  return {
    type: "utterance", seq, at: "t",
    speaker_id: "teacher", speaker_kind: "Teacher", function_id: "teach", text,
  };
}

describe("the session stream", () => {
  it("delivers frames once, in order, across a reconnect replay", async () => {
    vi.useFakeTimers();
    const sockets: FakeWs[] = [];
    const received: ServerFrame[] = [];
    const stream = new SessionStream("ws://fake", {
      onFrame: (f) => received.push(f),
      wsFactory: () => {
        const ws = new FakeWs();
        sockets.push(ws);
        return ws;
      },
      reconnectDelayMs: 10,
    });
    stream.start();
    const first = sockets[0];
    first.open();
    first.push(frame(1));
    first.push(frame(2));
    first.push(frame(3));
    first.close(); // connection drops mid-session

    await vi.advanceTimersByTimeAsync(20);
    const second = sockets[1];
    expect(second).toBeDefined();
    second.open();
    // the server replays from seq 1; only the new frame comes through
    [1, 2, 3, 4].forEach((seq) => second.push(frame(seq)));

    const seqs = received.map((f) => ("seq" in f ? f.seq : -1));
    expect(seqs).toEqual([1, 2, 3, 4]);
    vi.useRealTimers();
  });

  it("stops reconnecting once the session closes", async () => {
    vi.useFakeTimers();
    const sockets: FakeWs[] = [];
    const stream = new SessionStream("ws://fake", {
      onFrame: () => {},
      wsFactory: () => {
        const ws = new FakeWs();
        sockets.push(ws);
        return ws;
      },
      reconnectDelayMs: 5,
    });
    stream.start();
    sockets[0].open();
    sockets[0].push({ type: "phase_change", seq: 1, at: "t", phase: "closed" });
    await vi.advanceTimersByTimeAsync(50);
    expect(sockets).toHaveLength(1);
    vi.useRealTimers();
  });

  it("passes error frames through without a seq", () => {
    const sockets: FakeWs[] = [];
    const received: ServerFrame[] = [];
    const stream = new SessionStream("ws://fake", {
      onFrame: (f) => received.push(f),
      wsFactory: () => {
        const ws = new FakeWs();
        sockets.push(ws);
        return ws;
      },
    });
    stream.start();
    sockets[0].open();
    sockets[0].push({ type: "error", code: "malformed" });
    expect(received).toEqual([{ type: "error", code: "malformed" }]);
  });

  it("serializes user utterances for the wire", () => {
    const sockets: FakeWs[] = [];
    const stream = new SessionStream("ws://fake", {
      onFrame: () => {},
      wsFactory: () => {
        const ws = new FakeWs();
        sockets.push(ws);
        return ws;
      },
    });
    stream.start();
    stream.send("hello there");
    expect(JSON.parse(sockets[0].sent[0])).toEqual({
      type: "user_utterance",
      text: "hello there",
    });
  });
});
