// Outbound rate limiter. Slider drags poke the gate as fast as the browser
// fires events; the gate fires the send callback at most once per interval,
// trailing-edge coalesced so the last poke always results in a send.

export type TimerHandle = unknown;

export interface GateClock {
  now(): number;
  schedule(fn: () => void, ms: number): TimerHandle;
  cancel(handle: TimerHandle): void;
}

export const realClock: GateClock = {
  now: () => performance.now(),
  schedule: (fn, ms) => setTimeout(fn, ms),
  cancel: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export class SendGate {
  private lastFire: number | null = null;
  private pending: TimerHandle | null = null;

  constructor(
    private readonly minIntervalMs: number,
    private readonly fire: () => void,
    private readonly clock: GateClock = realClock,
  ) {}

  poke(): void {
    if (this.pending !== null) {
      return; // a trailing fire is already scheduled, it will pick up the latest state
    }
    const now = this.clock.now();
    const wait = this.lastFire === null ? 0 : this.lastFire + this.minIntervalMs - now;
    if (wait <= 0) {
      this.lastFire = now;
      this.fire();
      return;
    }
    this.pending = this.clock.schedule(() => {
      this.pending = null;
      this.lastFire = this.clock.now();
      this.fire();
    }, wait);
  }

  dispose(): void {
    if (this.pending !== null) {
      this.clock.cancel(this.pending);
      this.pending = null;
    }
  }
}
