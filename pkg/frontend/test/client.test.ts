import { describe, expect, it } from "vitest";

import { InputController, ViewerClient, type WebSocketLike } from "../src/client.js";
import { OrbitCamera } from "../src/orbit.js";
import { FRAME_MAGIC } from "../src/protocol.js";
import { FakeTimers } from "./fake_timers.js";

class FakeSocket implements WebSocketLike {
  binaryType = "";
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  serverText(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }

  serverFrame(generation: number, passIndex: number, final = false): void {
    const buf = new ArrayBuffer(32 + 4);
    const view = new DataView(buf);
    view.setUint32(0, FRAME_MAGIC, true);
    view.setUint32(4, generation, true);
    view.setUint32(8, passIndex, true);
    view.setUint32(12, final ? 1 : 0, true);
    view.setUint32(16, 1, true);
    view.setUint32(20, 1, true);
    view.setUint32(24, final ? 0 : 3, true);
    view.setFloat32(28, final ? 1 : 0.25, true);
    this.onmessage?.({ data: buf });
  }
}

function makeClient() {
  const sockets: FakeSocket[] = [];
  const timers = new FakeTimers();
  const frames: number[] = [];
  const infos: unknown[] = [];
  const errors: string[] = [];
  const client = new ViewerClient({
    url: "ws://test/ws",
    wsFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
    timers,
    reconnectBaseMs: 100,
    onFrame: (f) => frames.push(f.passIndex),
    onInfo: (i) => infos.push(i),
    onServerError: (code) => errors.push(code),
  });
  return { client, sockets, timers, frames, infos, errors };
}

describe("ViewerClient", () => {
  it("requests info on open and sets slider bounds from value_range", () => {
    const { client, sockets } = makeClient();
    client.connect();
    const ws = sockets[0];
    ws.onopen!();
    expect(JSON.parse(ws.sent[0])).toEqual({ type: "info_request" });
    ws.serverText({ type: "info", dims: [32, 32, 32], value_range: [1.5, 27.0] });
    expect(client.info!.value_range).toEqual([1.5, 27.0]);
  });

  it("dispatches frames through stale-generation filtering", () => {
    const { client, sockets, frames } = makeClient();
    client.connect();
    const ws = sockets[0];
    ws.onopen!();
    ws.serverFrame(2, 0);
    ws.serverFrame(1, 7, true); // stale generation: dropped
    ws.serverFrame(2, 1, true);
    expect(frames).toEqual([0, 1]);
    expect(client.state.latestGeneration).toBe(2);
  });

  it("surfaces server error frames and keeps the connection", () => {
    const { client, sockets, errors } = makeClient();
    client.connect();
    const ws = sockets[0];
    ws.onopen!();
    ws.serverText({ type: "error", code: "bad_set_view", reason: "nope" });
    expect(errors).toEqual(["bad_set_view"]);
    expect(ws.closed).toBe(false);
  });

  it("reconnects with exponential backoff until closed by the user", () => {
    const { client, sockets, timers } = makeClient();
    client.connect();
    expect(sockets.length).toBe(1);
    sockets[0].onclose!(); // drop without ever opening
    timers.advance(99);
    expect(sockets.length).toBe(1);
    timers.advance(1); // base delay 100ms
    expect(sockets.length).toBe(2);
    sockets[1].onclose!();
    timers.advance(200); // doubled
    expect(sockets.length).toBe(3);
    sockets[2].onopen!();
    expect(client.status).toBe("open");
    client.close();
    expect(client.status).toBe("closed");
    timers.advance(10_000);
    expect(sockets.length).toBe(3); // no further retries
  });

  it("drops malformed binary frames without killing the session", () => {
    const { client, sockets, frames } = makeClient();
    client.connect();
    const ws = sockets[0];
    ws.onopen!();
    ws.onmessage!({ data: new ArrayBuffer(5) });
    ws.serverFrame(1, 0, true);
    expect(frames).toEqual([0]);
    expect(client.status).toBe("open");
  });
});

describe("InputController", () => {
  it("sends exactly one set_view per quiescence window", () => {
    const timers = new FakeTimers();
    const sent: string[] = [];
    const client = { setView: (p: unknown) => sent.push(JSON.stringify(p)) };
    const input = new InputController(client, new OrbitCamera([0, 0, 0], 100), 5.0, {
      width: 64,
      height: 64,
      timers,
      debounceMs: 50,
    });
    // a scripted drag: 8 move events 10ms apart, then release and settle
    for (let i = 0; i < 8; i++) {
      input.drag(3, -1);
      timers.advance(10);
    }
    expect(input.sendCount).toBe(0);
    timers.advance(50);
    expect(input.sendCount).toBe(1);

    // wheel then slider scrubbing inside one window: still one message
    input.wheel(120);
    timers.advance(20);
    for (let i = 0; i < 5; i++) {
      input.setIso(5.0 + i);
      timers.advance(10);
    }
    timers.advance(50);
    expect(input.sendCount).toBe(2);
    const last = JSON.parse(sent[1]);
    expect(last.iso).toBe(9.0);
    expect(last.width).toBe(64);
  });

  it("the settled message carries the final orbit state", () => {
    const timers = new FakeTimers();
    const sent: { camera: { eye: number[] } }[] = [];
    const client = { setView: (p: never) => sent.push(p) };
    const orbit = new OrbitCamera([0, 0, 0], 100);
    const input = new InputController(client, orbit, 1.0, {
      width: 32,
      height: 32,
      timers,
    });
    input.drag(180 / orbit.degPerPixel, 0);
    timers.advance(50);
    expect(sent.length).toBe(1);
    expect(sent[0].camera.eye[2]).toBeCloseTo(-100, 9);
  });
});
