// Connection and state logic for the control panel, kept free of DOM
// dependencies so it can run under plain-node tests. The socket, preview
// sink, and clock are all injected.

import {
  clampParam,
  decodePreview,
  DEFAULT_PARAMS,
  ParamName,
  Params,
  PROTO_VERSION,
  ServerMessage,
} from './protocol.js';
import { RateLimiter } from './throttle.js';

export interface SocketLike {
  binaryType: string;
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

/** Receives decoded preview frames; the DOM layer paints them on canvases. */
export interface PreviewSink {
  draw(kind: number, index: number, png: Uint8Array): void;
}

export type ConnectionStatus = 'connecting' | 'connected' | 'disconnected';

export interface PanelState {
  connection: ConnectionStatus;
  params: Params;
  paused: boolean;
  recording: boolean;
  generation: number;
  fps: number;
  banner: string | null;
  toast: string | null;
  lastFrameIndex: Record<number, number>;
}

export interface PanelOptions {
  url: string;
  previews: PreviewSink;
  socketFactory?: SocketFactory;
  onChange?: (state: PanelState) => void;
  maxMessagesPerSecond?: number;
  now?: () => number;
  schedule?: (fn: () => void, ms: number) => unknown;
  cancel?: (handle: unknown) => void;
  reconnectBaseMs?: number;
  reconnectMaxMs?: number;
}

const DEFAULT_MAX_RATE = 30;

export class PanelController {
  readonly state: PanelState;

  private socket: SocketLike | null = null;
  private readonly limiter: RateLimiter;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly cancel: (handle: unknown) => void;
  private reconnectAttempt = 0;
  private reconnectTimer: unknown = null;
  private closed = false;
  /** Last params confirmed by the server; sliders revert here on reject. */
  private serverParams: Params = { ...DEFAULT_PARAMS };

  constructor(private readonly opts: PanelOptions) {
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.cancel = opts.cancel ?? ((h) => clearTimeout(h as number));
    this.limiter = new RateLimiter(
      opts.maxMessagesPerSecond ?? DEFAULT_MAX_RATE,
      opts.now,
      this.schedule,
      this.cancel,
    );
    this.state = {
      connection: 'disconnected',
      params: { ...DEFAULT_PARAMS },
      paused: false,
      recording: false,
      generation: -1,
      fps: 0,
      banner: null,
      toast: null,
      lastFrameIndex: {},
    };
  }

  connect(): void {
    this.closed = false;
    this.openSocket();
  }

  close(): void {
    this.closed = true;
    if (this.reconnectTimer !== null) {
      this.cancel(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.limiter.dispose();
    this.socket?.close();
    this.socket = null;
    this.state.connection = 'disconnected';
    this.emit();
  }

  /** Slider drag handler: clamp client-side, send throttled, never >30/s. */
  setParam(name: ParamName, value: number): void {
    const v = clampParam(name, value);
    this.state.params[name] = v; // optimistic; snaps to server on ack/state
    this.emit();
    this.limiter.push(name, () => {
      this.socket?.send(JSON.stringify({ type: 'set_param', name, value: v }));
    });
  }

  setPaused(paused: boolean): void {
    this.socket?.send(JSON.stringify({ type: paused ? 'pause' : 'resume' }));
  }

  setRecording(recording: boolean): void {
    this.socket?.send(JSON.stringify({ type: recording ? 'start_record' : 'stop_record' }));
  }

  requestState(): void {
    this.socket?.send(JSON.stringify({ type: 'get_state' }));
  }

  private openSocket(): void {
    const factory = this.opts.socketFactory ?? ((url) => new WebSocket(url) as SocketLike);
    this.state.connection = 'connecting';
    this.emit();
    let ws: SocketLike;
    try {
      ws = factory(this.opts.url);
    } catch {
      this.scheduleReconnect();
      return;
    }
    ws.binaryType = 'arraybuffer';
    ws.onopen = () => {
      // wait for hello before declaring the session live
    };
    ws.onmessage = (ev) => this.onMessage(ev.data);
    ws.onerror = () => {
      /* onclose always follows */
    };
    ws.onclose = () => {
      if (this.socket !== ws) return;
      this.socket = null;
      this.state.connection = 'disconnected';
      this.emit();
      this.scheduleReconnect();
    };
    this.socket = ws;
  }

  private scheduleReconnect(): void {
    if (this.closed || this.reconnectTimer !== null) return;
    const base = this.opts.reconnectBaseMs ?? 500;
    const max = this.opts.reconnectMaxMs ?? 5000;
    const delay = Math.min(max, base * 2 ** this.reconnectAttempt);
    this.reconnectAttempt += 1;
    this.reconnectTimer = this.schedule(() => {
      this.reconnectTimer = null;
      if (!this.closed) this.openSocket();
    }, delay);
  }

  private onMessage(data: string | ArrayBuffer): void {
    if (typeof data === 'string') {
      let msg: ServerMessage;
      try {
        msg = JSON.parse(data);
      } catch {
        console.warn('undecodable control message dropped');
        return;
      }
      this.onControl(msg);
      return;
    }
    const frame = decodePreview(data);
    if (frame === null) {
      console.warn('undecodable preview payload dropped');
      return;
    }
    const last = this.state.lastFrameIndex[frame.kind];
    if (last !== undefined && frame.index < last) return; // latest wins
    this.state.lastFrameIndex[frame.kind] = frame.index;
    this.opts.previews.draw(frame.kind, frame.index, frame.png);
    this.emit();
  }

  private onControl(msg: ServerMessage): void {
    switch (msg.type) {
      case 'hello':
        if (msg.proto !== PROTO_VERSION) {
          this.state.banner = `protocol mismatch: server speaks v${msg.proto}, panel speaks v${PROTO_VERSION}`;
          this.emit();
          this.socket?.close();
          return;
        }
        this.state.banner = null;
        this.state.connection = 'connected';
        this.reconnectAttempt = 0;
        this.requestState();
        this.emit();
        break;
      case 'state':
        if (msg.generation < this.state.generation) return; // stale broadcast
        this.serverParams = { ...msg.params };
        this.state.params = { ...msg.params };
        this.state.paused = msg.paused;
        this.state.recording = msg.recording;
        this.state.generation = msg.generation;
        this.state.fps = msg.fps;
        this.emit();
        break;
      case 'ack':
        if (msg.name !== undefined && msg.value !== undefined) {
          // server is authoritative: snap the slider to the acked value
          this.serverParams = { ...this.serverParams, [msg.name]: msg.value };
          this.state.params = { ...this.state.params, [msg.name]: msg.value };
          this.emit();
        }
        break;
      case 'error':
        this.state.toast = msg.message;
        this.state.params = { ...this.serverParams }; // revert optimistic edits
        this.emit();
        break;
      default:
        console.warn('unknown server message dropped');
    }
  }

  private emit(): void {
    this.opts.onChange?.(this.state);
  }
}
