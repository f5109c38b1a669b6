// Wire protocol (v1) shared between the panel and the control service.

export const PROTO_VERSION = 1;

export const KIND_INPUT = 0;
export const KIND_OUTPUT = 1;
export const KIND_COMPOSITE = 2;

export type ParamName = 'norm_low' | 'norm_high' | 'brightness' | 'contrast';

export interface ParamRange {
  min: number;
  max: number;
  step: number;
  integer: boolean;
}

export const PARAM_RANGES: Record<ParamName, ParamRange> = {
  norm_low: { min: 0, max: 255, step: 1, integer: true },
  norm_high: { min: 0, max: 255, step: 1, integer: true },
  brightness: { min: 0.1, max: 4.0, step: 0.01, integer: false },
  contrast: { min: 0.1, max: 4.0, step: 0.01, integer: false },
};

export const PARAM_NAMES = Object.keys(PARAM_RANGES) as ParamName[];

export interface Params {
  norm_low: number;
  norm_high: number;
  brightness: number;
  contrast: number;
}

export const DEFAULT_PARAMS: Params = {
  norm_low: 0,
  norm_high: 255,
  brightness: 1.0,
  contrast: 1.0,
};

export interface HelloMessage {
  type: 'hello';
  proto: number;
}

export interface StateMessage {
  type: 'state';
  params: Params;
  paused: boolean;
  recording: boolean;
  generation: number;
  fps: number;
}

export interface AckMessage {
  type: 'ack';
  name?: string;
  value?: number;
  action?: string;
}

export interface ErrorMessage {
  type: 'error';
  message: string;
}

export type ServerMessage = HelloMessage | StateMessage | AckMessage | ErrorMessage;

export function clampParam(name: ParamName, value: number): number {
  const range = PARAM_RANGES[name];
  let v = Math.min(range.max, Math.max(range.min, value));
  if (range.integer) v = Math.round(v);
  return v;
}

export interface PreviewFrame {
  kind: number;
  index: number;
  png: Uint8Array;
}

/** Binary preview framing: 1 byte kind | uint32 LE frame index | PNG bytes. */
export function decodePreview(buf: ArrayBuffer): PreviewFrame | null {
  if (buf.byteLength < 5) return null;
  const view = new DataView(buf);
  const kind = view.getUint8(0);
  if (kind !== KIND_INPUT && kind !== KIND_OUTPUT && kind !== KIND_COMPOSITE) return null;
  const index = view.getUint32(1, true);
  return { kind, index, png: new Uint8Array(buf.slice(5)) };
}
