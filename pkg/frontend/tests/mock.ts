import { PreviewSink, SocketLike } from '../src/panel.js';

export class MockSocket implements SocketLike {
  binaryType = 'blob';
  sent: string[] = [];
  closed = false;
  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null = null;

  constructor(public readonly url: string) {}

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // --- server-side test controls ---

  accept(proto = 1): void {
    this.onopen?.();
    this.emit({ type: 'hello', proto });
  }

  emit(msg: object): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  emitBinary(buf: ArrayBuffer): void {
    this.onmessage?.({ data: buf });
  }

  drop(): void {
    this.onclose?.();
  }

  /** Parsed outgoing messages of one type. */
  sentOf(type: string): any[] {
    return this.sent.map((s) => JSON.parse(s)).filter((m) => m.type === type);
  }
}

export class MockServer {
  sockets: MockSocket[] = [];

  factory = (url: string): SocketLike => {
    const s = new MockSocket(url);
    this.sockets.push(s);
    return s;
  };

  get latest(): MockSocket {
    return this.sockets[this.sockets.length - 1];
  }
}

export class RecordingSink implements PreviewSink {
  calls: Array<{ kind: number; index: number; png: Uint8Array }> = [];

  draw(kind: number, index: number, png: Uint8Array): void {
    this.calls.push({ kind, index, png });
  }

  byKind(kind: number) {
    return this.calls.filter((c) => c.kind === kind);
  }
}

export function encodePreview(kind: number, index: number, png: Uint8Array): ArrayBuffer {
  const buf = new ArrayBuffer(5 + png.length);
  const view = new DataView(buf);
  view.setUint8(0, kind);
  view.setUint32(1, index, true);
  new Uint8Array(buf, 5).set(png);
  return buf;
}
