// Wire types for the render server: text frames are JSON control messages,
// binary frames are a 16-byte header followed by a PNG.

export const PROTOCOL_VERSION = 1;
export const FRAME_MAGIC = "PSFR";
export const HEADER_SIZE = 16;

export class ProtocolError extends Error {}

export interface FrameMessage {
  width: number;
  height: number;
  seq: number;
  payload: Uint8Array;
}

export interface HelloMsg {
  v: number;
  type: "hello";
  num_joints: number;
  num_expressions: number;
  width: number;
  height: number;
  credit_window: number;
  stage: string;
}

export interface AckMsg {
  v: number;
  type: "ack";
  seq: number | null;
}

export interface ErrorMsg {
  v: number;
  type: "error";
  seq: number | null;
  message: string;
}

export interface StatsMsg {
  v: number;
  type: "stats";
  fps: number;
  frames: number;
}

export type ServerMessage = HelloMsg | AckMsg | ErrorMsg | StatsMsg;

export interface CameraParams {
  azimuth: number;
  elevation: number;
  distance: number;
}

export interface SetParams {
  pose?: number[][];
  expression?: number[];
  camera?: Partial<CameraParams>;
  width?: number;
  height?: number;
}

export function parseFrameHeader(data: ArrayBuffer): FrameMessage {
  if (data.byteLength < HEADER_SIZE) {
    throw new ProtocolError(`frame shorter than its ${HEADER_SIZE}-byte header (${data.byteLength} bytes)`);
  }
  const bytes = new Uint8Array(data, 0, 4);
  let magic = "";
  for (let i = 0; i < 4; i++) {
    magic += String.fromCharCode(bytes[i]);
  }
  if (magic !== FRAME_MAGIC) {
    throw new ProtocolError(`bad frame magic ${JSON.stringify(magic)}, expected ${FRAME_MAGIC}`);
  }
  const view = new DataView(data);
  return {
    width: view.getUint32(4, true),
    height: view.getUint32(8, true),
    seq: view.getUint32(12, true),
    payload: new Uint8Array(data, HEADER_SIZE),
  };
}

const SERVER_TYPES = new Set(["hello", "ack", "error", "stats"]);

export function parseServerMessage(text: string): ServerMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new ProtocolError("control message is not valid JSON");
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ProtocolError("control message is not an object");
  }
  const msg = doc as Record<string, unknown>;
  if (msg.v !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${String(msg.v)}`);
  }
  if (typeof msg.type !== "string" || !SERVER_TYPES.has(msg.type)) {
    throw new ProtocolError(`unknown server message type ${String(msg.type)}`);
  }
  return msg as unknown as ServerMessage;
}

export function setParamsMessage(seq: number, params: SetParams): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "set_params", seq, ...params });
}

export function creditMessage(frames: number): string {
  return JSON.stringify({ v: PROTOCOL_VERSION, type: "credit", frames });
}
