// Frame-rate estimate matching the server's: exponential moving average of
// inter-frame gaps, fps = 1 / gap. Same alpha so the two readouts agree on a
// steady stream.

export const FPS_EMA_ALPHA = 0.2;

export class FpsMeter {
  fps = 0;
  private gapEma: number | null = null;
  private lastMs: number | null = null;

  tick(nowMs: number): number {
    if (this.lastMs !== null) {
      const gap = Math.max((nowMs - this.lastMs) / 1000, 1e-6);
      this.gapEma = this.gapEma === null ? gap : (1 - FPS_EMA_ALPHA) * this.gapEma + FPS_EMA_ALPHA * gap;
      this.fps = 1 / this.gapEma;
    }
    this.lastMs = nowMs;
    return this.fps;
  }

  agreesWith(serverFps: number, tolerance = 0.1): boolean {
    if (serverFps <= 0 || this.fps <= 0) {
      return false;
    }
    return Math.abs(this.fps - serverFps) / serverFps <= tolerance;
  }

  reset(): void {
    this.fps = 0;
    this.gapEma = null;
    this.lastMs = null;
  }
}
