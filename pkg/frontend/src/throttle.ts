// Rate limiter for outgoing set_param messages: at most `maxPerSecond`
// sends, and the last value pushed during a burst always goes out
// (trailing send), so a slider drag settles on its final position.

type Scheduler = (fn: () => void, ms: number) => unknown;
type Canceler = (handle: unknown) => void;

export class RateLimiter {
  private readonly intervalMs: number;
  private lastSent = Number.NEGATIVE_INFINITY;
  private pending = new Map<string, () => void>();
  private timer: unknown = null;

  constructor(
    maxPerSecond: number,
    private readonly now: () => number = () => Date.now(),
    private readonly schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
    private readonly cancel: Canceler = (h) => clearTimeout(h as number),
  ) {
    // strictly longer than 1000/max so any one-second window, endpoints
    // included, holds at most `maxPerSecond` sends
    this.intervalMs = Math.floor(1000 / maxPerSecond) + 1;
  }

  /** Queue `send` under `key`; later pushes with the same key replace it. */
  push(key: string, send: () => void): void {
    const t = this.now();
    if (this.pending.size === 0 && this.timer === null && t - this.lastSent >= this.intervalMs) {
      this.lastSent = t;
      send();
      return;
    }
    this.pending.delete(key); // re-insert so iteration order stays oldest-first
    this.pending.set(key, send);
    this.arm();
  }

  private arm(): void {
    if (this.timer !== null) return;
    const wait = Math.max(0, this.lastSent + this.intervalMs - this.now());
    this.timer = this.schedule(() => {
      this.timer = null;
      const next = this.pending.entries().next();
      if (next.done) return;
      const [key, send] = next.value;
      this.pending.delete(key);
      this.lastSent = this.now();
      send();
      if (this.pending.size > 0) this.arm();
    }, wait);
  }

  dispose(): void {
    if (this.timer !== null) {
      this.cancel(this.timer);
      this.timer = null;
    }
    this.pending.clear();
  }
}
