import { describe, expect, it } from "vitest";

import { ViewerClient, type ViewerEvents } from "../src/client.js";
import type { FrameMessage, HelloMsg } from "../src/protocol.js";
import type { PanelModel } from "../src/state.js";
import { FakeClock, FakeSocket, frameBuffer, hello } from "./helpers.js";

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

interface Recorder extends ViewerEvents {
  statuses: boolean[];
  hellos: HelloMsg[];
  banner: string | null;
  bannerHistory: (string | null)[];
  frames: number[];
  fpsPairs: [number, number][];
  serverErrors: string[];
  model: PanelModel | null;
  decodeResolvers: (() => void)[];
  slowDecode: boolean;
}

function recorder(): Recorder {
  const rec: Recorder = {
    statuses: [],
    hellos: [],
    banner: null,
    bannerHistory: [],
    frames: [],
    fpsPairs: [],
    serverErrors: [],
    model: null,
    decodeResolvers: [],
    slowDecode: false,
    onStatus: (c) => rec.statuses.push(c),
    onHello: (h, model) => {
      rec.hellos.push(h);
      rec.model = model;
    },
    onBanner: (text) => {
      rec.banner = text;
      rec.bannerHistory.push(text);
    },
    onFrame: (frame: FrameMessage) => {
      rec.frames.push(frame.seq);
      if (rec.slowDecode) {
        return new Promise<void>((resolve) => rec.decodeResolvers.push(resolve));
      }
      return undefined;
    },
    onFps: (c, s) => rec.fpsPairs.push([c, s]),
    onServerError: (m) => rec.serverErrors.push(m),
  };
  return rec;
}

function setup() {
  const clock = new FakeClock();
  const sockets: FakeSocket[] = [];
  const rec = recorder();
  const client = new ViewerClient("ws://test/session", rec, {
    clock,
    socketFactory: () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
  });
  client.connect();
  return { clock, sockets, rec, client };
}

describe("viewer client", () => {
  it("runs the loop: hello, initial frame, slider change, fresh frame", async () => {
    const { sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    expect(ws.binaryType).toBe("arraybuffer");
    ws.text(hello());
    expect(rec.hellos).toHaveLength(1);
    expect(rec.model!.numJoints).toBe(3);
    expect(ws.sentOfType("set_params")).toHaveLength(0); // first hello needs no resend

    ws.binary(frameBuffer(1));
    await flush();
    expect(rec.frames).toEqual([1]);

    client.queue(rec.model!.setExpression(0, 1.5));
    const sent = ws.sentOfType("set_params");
    expect(sent).toHaveLength(1); // leading edge, no added latency on the first change
    expect(sent[0].expression).toEqual([1.5, 0, 0, 0]);
    expect(sent[0].seq).toBe(0);

    ws.binary(frameBuffer(2));
    await flush();
    expect(rec.frames).toEqual([1, 2]);
  });

  it("grants one credit per accepted frame", async () => {
    const { sockets, rec } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    ws.binary(frameBuffer(1));
    ws.binary(frameBuffer(2));
    await flush();
    expect(rec.frames).toEqual([1, 2]);
    const credits = ws.sentOfType("credit");
    expect(credits).toHaveLength(2);
    expect(credits[0].frames).toBe(1);
  });

  it("drops sequence regressions", async () => {
    const { sockets, rec } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    ws.binary(frameBuffer(5));
    ws.binary(frameBuffer(5));
    ws.binary(frameBuffer(3));
    ws.binary(frameBuffer(6));
    await flush();
    expect(rec.frames).toEqual([5, 6]);
  });

  it("shows a banner on malformed magic and keeps the socket", async () => {
    const { sockets, rec } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    const bad = frameBuffer(1);
    new Uint8Array(bad)[0] = 0x58;
    ws.binary(bad);
    expect(rec.banner).toMatch(/magic/);
    expect(ws.closedByClient).toBe(false);
    ws.binary(frameBuffer(1));
    await flush();
    expect(rec.frames).toEqual([1]);
    expect(rec.banner).toBeNull(); // a good frame clears the banner
  });

  it("drops stale frames when a newer one arrives mid-decode", async () => {
    const { sockets, rec } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    rec.slowDecode = true;
    ws.binary(frameBuffer(1));
    ws.binary(frameBuffer(2)); // waiting
    ws.binary(frameBuffer(3)); // replaces 2 before it was ever decoded
    expect(rec.frames).toEqual([1]);
    rec.decodeResolvers.shift()!();
    await flush();
    expect(rec.frames).toEqual([1, 3]);
    rec.decodeResolvers.shift()!();
    await flush();
    expect(rec.frames).toEqual([1, 3]);
  });

  it("rate-limits a slider drag to sixty messages per second", () => {
    const { clock, sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    const sendTimes: number[] = [];
    const rawSend = ws.send.bind(ws);
    ws.send = (data) => {
      if (typeof data === "string" && data.includes("set_params")) {
        sendTimes.push(clock.now());
      }
      rawSend(data);
    };
    for (let i = 0; i < 500; i++) {
      client.queue(rec.model!.setExpression(0, (i % 60) / 20));
      clock.advance(2); // a pointermove every 2 ms for one second
    }
    for (let i = 1; i < sendTimes.length; i++) {
      expect(sendTimes[i] - sendTimes[i - 1]).toBeGreaterThanOrEqual(1000 / 60 - 1e-9);
    }
    // one second of dragging: the leading send plus at most sixty trailing
    expect(sendTimes.length).toBeLessThanOrEqual(61);
    expect(sendTimes.length).toBeGreaterThanOrEqual(55);
    // trailing send carries the final slider value
    clock.advance(20);
    const all = ws.sentOfType("set_params");
    const last = all[all.length - 1];
    expect((last.expression as number[])[0]).toBeCloseTo(((499 % 60) / 20), 12);
    // sequence numbers stay strictly increasing
    const seqs = all.map((m) => m.seq as number);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(new Set(seqs).size).toBe(seqs.length);
  });

  it("coalesces different controls changed inside one gate window", () => {
    const { clock, sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    client.queue(rec.model!.setExpression(1, 0.5)); // leading, goes out alone
    client.queue(rec.model!.setOrbit({ azimuth: 20 }));
    client.queue(rec.model!.setOrbit({ distance: 0.4 }));
    client.queue(rec.model!.setJoint(0, 2, 0.1));
    let sent = ws.sentOfType("set_params");
    expect(sent).toHaveLength(1);
    expect(sent[0].camera).toBeUndefined();

    clock.advance(20); // past the gate window, trailing fire
    sent = ws.sentOfType("set_params");
    expect(sent).toHaveLength(2);
    expect(sent[1].camera).toEqual({ azimuth: 20, elevation: 0, distance: 0.4 });
    expect((sent[1].pose as number[][])[0][2]).toBeCloseTo(0.1, 12);
    expect(sent[1].expression).toBeUndefined(); // already delivered by the leading send
  });

  it("sends nothing while disconnected", () => {
    const { sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    ws.drop();
    client.queue(rec.model!.setExpression(0, 2));
    expect(ws.sentOfType("set_params")).toHaveLength(0);
  });

  it("reconnects and resends the full slider state", () => {
    const { clock, sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    client.queue(rec.model!.setExpression(2, -1));
    client.queue(rec.model!.setOrbit({ azimuth: 40 }));
    clock.advance(100);

    ws.drop();
    expect(rec.statuses).toEqual([true, false]);
    clock.advance(1000); // reconnect timer
    expect(sockets).toHaveLength(2);
    const ws2 = sockets[1];
    ws2.open();
    ws2.text(hello());

    clock.advance(50);
    const resent = ws2.sentOfType("set_params");
    expect(resent).toHaveLength(1);
    expect(resent[0].seq).toBe(0); // per-connection sequence restarts
    expect(resent[0].expression).toEqual([0, 0, -1, 0]);
    expect(resent[0].pose).toEqual([
      [0, 0, 0],
      [0, 0, 0],
      [0, 0, 0],
    ]);
    expect(resent[0].camera).toEqual({ azimuth: 40, elevation: 0, distance: 0.55 });
    expect(resent[0].width).toBe(256);
    expect(resent[0].height).toBe(256);
  });

  it("agrees with the server fps readout on a steady stream", async () => {
    const { clock, sockets, rec, client } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    for (let seq = 1; seq <= 60; seq++) {
      ws.binary(frameBuffer(seq));
      await flush();
      clock.advance(40); // 25 fps
    }
    ws.text({ v: 1, type: "stats", fps: 25.0, frames: 60 });
    expect(client.meter.agreesWith(25)).toBe(true);
    const [clientFps, serverFps] = rec.fpsPairs[rec.fpsPairs.length - 1];
    expect(serverFps).toBe(25);
    expect(Math.abs(clientFps - 25) / 25).toBeLessThanOrEqual(0.1);
  });

  it("surfaces server errors without dropping the session", () => {
    const { sockets, rec } = setup();
    const ws = sockets[0];
    ws.open();
    ws.text(hello());
    ws.text({ v: 1, type: "error", seq: 4, message: "expression length 3 does not match 4" });
    expect(rec.serverErrors).toEqual(["expression length 3 does not match 4"]);
    expect(rec.banner).toMatch(/expression length/);
    expect(ws.closedByClient).toBe(false);
  });
});
