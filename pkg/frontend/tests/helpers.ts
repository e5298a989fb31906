// Deterministic clock and scripted socket for driving the client in tests.

import type { SocketLike } from "../src/client.js";
import type { GateClock, TimerHandle } from "../src/sendgate.js";

interface Scheduled {
  fn: () => void;
  at: number;
  cancelled: boolean;
}

export class FakeClock implements GateClock {
  private t = 0;
  private timers: Scheduled[] = [];

  now(): number {
    return this.t;
  }

  schedule(fn: () => void, ms: number): TimerHandle {
    const entry: Scheduled = { fn, at: this.t + ms, cancelled: false };
    this.timers.push(entry);
    return entry;
  }

  cancel(handle: TimerHandle): void {
    (handle as Scheduled).cancelled = true;
  }

  advance(ms: number): void {
    const end = this.t + ms;
    for (;;) {
      const due = this.timers
        .filter((e) => !e.cancelled && e.at <= end)
        .sort((a, b) => a.at - b.at)[0];
      if (!due) {
        break;
      }
      this.timers.splice(this.timers.indexOf(due), 1);
      this.t = due.at;
      due.fn();
    }
    this.t = end;
  }
}

export class FakeSocket implements SocketLike {
  binaryType?: string;
  sent: string[] = [];
  closedByClient = false;
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  // test-side controls
  open(): void {
    this.onopen?.();
  }

  text(obj: unknown): void {
    this.onmessage?.({ data: JSON.stringify(obj) });
  }

  binary(buf: ArrayBuffer): void {
    this.onmessage?.({ data: buf });
  }

  drop(): void {
    this.onclose?.();
  }

  sentJson(): Record<string, unknown>[] {
    return this.sent.map((s) => JSON.parse(s));
  }

  sentOfType(type: string): Record<string, unknown>[] {
    return this.sentJson().filter((m) => m.type === type);
  }
}

export function hello(overrides: Partial<Record<string, unknown>> = {}): Record<string, unknown> {
  return {
    v: 1,
    type: "hello",
    num_joints: 3,
    num_expressions: 4,
    width: 256,
    height: 256,
    credit_window: 3,
    stage: "appearance",
    ...overrides,
  };
}

export function frameBuffer(seq: number, width = 256, height = 256, payload?: Uint8Array): ArrayBuffer {
  const body = payload ?? new Uint8Array([0x89, 0x50, 0x4e, 0x47, seq & 0xff]);
  const buf = new ArrayBuffer(16 + body.length);
  const view = new DataView(buf);
  const magic = "PSFR";
  for (let i = 0; i < 4; i++) {
    view.setUint8(i, magic.charCodeAt(i));
  }
  view.setUint32(4, width, true);
  view.setUint32(8, height, true);
  view.setUint32(12, seq, true);
  new Uint8Array(buf, 16).set(body);
  return buf;
}
