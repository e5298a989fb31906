// Websocket session client. Owns the panel model, rate-limits outbound
// parameter changes, and keeps the frame path non-blocking: a frame that
// arrives while an older one is still decoding replaces it instead of
// queueing behind it.

import { FpsMeter } from "./fps.js";
import {
  creditMessage,
  parseFrameHeader,
  parseServerMessage,
  ProtocolError,
  setParamsMessage,
  type FrameMessage,
  type HelloMsg,
  type SetParams,
} from "./protocol.js";
import { realClock, SendGate, type GateClock, type TimerHandle } from "./sendgate.js";
import { PanelModel } from "./state.js";

export const MAX_SEND_RATE = 60; // messages per second
export const RECONNECT_DELAY_MS = 1000;

export interface SocketLike {
  binaryType?: string;
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ViewerEvents {
  onStatus(connected: boolean): void;
  onHello(hello: HelloMsg, model: PanelModel): void;
  onBanner(text: string | null): void;
  onFrame(frame: FrameMessage): void | Promise<void>;
  onFps?(clientFps: number, serverFps: number): void;
  onServerError?(message: string): void;
}

export interface ClientOptions {
  socketFactory?: SocketFactory;
  clock?: GateClock;
  reconnectDelayMs?: number;
}

export class ViewerClient {
  model: PanelModel | null = null;
  readonly meter = new FpsMeter();
  serverFps = 0;

  private socket: SocketLike | null = null;
  private connected = false;
  private closed = false;
  private seq = 0;
  private lastFrameSeq = -1;
  private pendingParams: SetParams | null = null;
  private readonly gate: SendGate;
  private readonly clock: GateClock;
  private readonly makeSocket: SocketFactory;
  private readonly reconnectDelayMs: number;
  private reconnectHandle: TimerHandle | null = null;
  private decoding = false;
  private nextFrame: FrameMessage | null = null;

  constructor(
    private readonly url: string,
    private readonly events: ViewerEvents,
    opts: ClientOptions = {},
  ) {
    this.clock = opts.clock ?? realClock;
    this.makeSocket = opts.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.reconnectDelayMs = opts.reconnectDelayMs ?? RECONNECT_DELAY_MS;
    this.gate = new SendGate(1000 / MAX_SEND_RATE, () => this.sendPending(), this.clock);
  }

  connect(): void {
    this.closed = false;
    const socket = this.makeSocket(this.url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => {
      this.connected = true;
      this.seq = 0;
      this.lastFrameSeq = -1;
      this.meter.reset();
      this.events.onStatus(true);
    };
    socket.onmessage = (ev) => {
      if (typeof ev.data === "string") {
        this.handleText(ev.data);
      } else {
        this.handleBinary(ev.data);
      }
    };
    socket.onclose = () => this.handleClose();
    socket.onerror = () => {
      // the close handler does the cleanup; errors always precede a close
    };
    this.socket = socket;
  }

  close(): void {
    this.closed = true;
    this.gate.dispose();
    if (this.reconnectHandle !== null) {
      this.clock.cancel(this.reconnectHandle);
      this.reconnectHandle = null;
    }
    this.socket?.close();
  }

  get isConnected(): boolean {
    return this.connected;
  }

  // Merge a partial parameter change and poke the gate; the actual message
  // goes out with whatever has accumulated by the time the gate fires.
  queue(params: SetParams): void {
    if (!this.connected) {
      return;
    }
    const pending = this.pendingParams ?? {};
    if (params.camera) {
      pending.camera = { ...pending.camera, ...params.camera };
    }
    if (params.pose) {
      pending.pose = params.pose;
    }
    if (params.expression) {
      pending.expression = params.expression;
    }
    if (params.width !== undefined) {
      pending.width = params.width;
    }
    if (params.height !== undefined) {
      pending.height = params.height;
    }
    this.pendingParams = pending;
    this.gate.poke();
  }

  private sendPending(): void {
    if (!this.connected || this.socket === null || this.pendingParams === null) {
      return;
    }
    const params = this.pendingParams;
    this.pendingParams = null;
    this.socket.send(setParamsMessage(this.seq++, params));
  }

  private handleText(text: string): void {
    let msg;
    try {
      msg = parseServerMessage(text);
    } catch (e) {
      this.events.onBanner(e instanceof Error ? e.message : String(e));
      return;
    }
    switch (msg.type) {
      case "hello":
        this.handleHello(msg);
        break;
      case "stats":
        this.serverFps = msg.fps;
        this.events.onFps?.(this.meter.fps, msg.fps);
        break;
      case "error":
        this.events.onServerError?.(msg.message);
        this.events.onBanner(`server: ${msg.message}`);
        break;
      case "ack":
        break;
    }
  }

  private handleHello(hello: HelloMsg): void {
    if (this.model === null) {
      this.model = PanelModel.fromHello(hello);
    } else {
      // reconnect: our sliders are the source of truth, push them all back
      this.pendingParams = this.model.fullParams();
      this.gate.poke();
    }
    this.events.onHello(hello, this.model);
  }

  private handleBinary(data: ArrayBuffer): void {
    let frame: FrameMessage;
    try {
      frame = parseFrameHeader(data);
    } catch (e) {
      if (e instanceof ProtocolError) {
        this.events.onBanner(e.message); // keep the socket, the stream may recover
        return;
      }
      throw e;
    }
    if (frame.seq <= this.lastFrameSeq) {
      return; // out-of-order frame, a newer one is already up
    }
    this.lastFrameSeq = frame.seq;
    this.meter.tick(this.clock.now());
    this.socket?.send(creditMessage(1));
    this.events.onBanner(null);
    this.deliver(frame);
  }

  private deliver(frame: FrameMessage): void {
    if (this.decoding) {
      this.nextFrame = frame; // drop whatever was waiting, this one is newer
      return;
    }
    this.decoding = true;
    Promise.resolve(this.events.onFrame(frame))
      .catch(() => undefined)
      .then(() => {
        this.decoding = false;
        const next = this.nextFrame;
        this.nextFrame = null;
        if (next !== null) {
          this.deliver(next);
        }
      });
  }

  private handleClose(): void {
    const wasConnected = this.connected;
    this.connected = false;
    this.pendingParams = null;
    this.socket = null;
    if (wasConnected) {
      this.events.onStatus(false);
    }
    if (!this.closed && this.reconnectHandle === null) {
      this.reconnectHandle = this.clock.schedule(() => {
        this.reconnectHandle = null;
        this.connect();
      }, this.reconnectDelayMs);
    }
  }
}
