/**
 * Visible countdown for one problem. The client renders and fires the
 * auto-submission at zero; the server clock stays authoritative for
 * lateness, so a tampered client can only hurt itself.
 */

export class Countdown {
  private deadline = 0;
  private intervalId: ReturnType<typeof setInterval> | null = null;
  private expired = false;

  constructor(
    private onTick: (remainingMs: number) => void,
    private onExpire: () => void,
    private tickMs = 250,
  ) {}

  start(remainingMs: number): void {
    this.stop();
    this.expired = false;
    this.deadline = Date.now() + remainingMs;
    this.onTick(remainingMs);
    this.intervalId = setInterval(() => this.tick(), this.tickMs);
  }

  private tick(): void {
    const remaining = this.deadline - Date.now();
    if (remaining <= 0) {
      this.onTick(0);
      this.stop();
      if (!this.expired) {
        this.expired = true;
        this.onExpire();
      }
      return;
    }
    this.onTick(remaining);
  }

  stop(): void {
    if (this.intervalId !== null) {
      clearInterval(this.intervalId);
      this.intervalId = null;
    }
  }

  elapsedOf(totalMs: number): number {
    return totalMs - Math.max(0, this.deadline - Date.now());
  }
}

export function formatRemaining(ms: number): string {
  const totalSeconds = Math.max(0, Math.ceil(ms / 1000));
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return `${minutes}:${seconds.toString().padStart(2, "0")}`;
}
