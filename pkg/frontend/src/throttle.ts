/** Trailing-edge throttle: at most one call per interval, always ending
 * with the latest value (slider drags coalesce into <= rate Hz requests). */

export interface Throttled<T> {
  push(value: T): void;
  flush(): void;
  pending(): boolean;
}

export function throttled<T>(
  fn: (value: T) => void,
  intervalMs: number,
  now: () => number = () => Date.now(),
  schedule: (cb: () => void, ms: number) => unknown = (cb, ms) => setTimeout(cb, ms),
): Throttled<T> {
  let lastFire = -Infinity;
  let queued: { value: T } | null = null;
  let timerArmed = false;

  const fire = (value: T) => {
    lastFire = now();
    fn(value);
  };

  const onTimer = () => {
    timerArmed = false;
    if (queued) {
      const v = queued.value;
      queued = null;
      fire(v);
    }
  };

  return {
    push(value: T) {
      const elapsed = now() - lastFire;
      if (elapsed >= intervalMs && !timerArmed) {
        fire(value);
        return;
      }
      queued = { value };
      if (!timerArmed) {
        timerArmed = true;
        schedule(onTimer, Math.max(0, intervalMs - elapsed));
      }
    },
    flush() {
      if (queued) {
        const v = queued.value;
        queued = null;
        fire(v);
      }
    },
    pending() {
      return queued !== null;
    },
  };
}
