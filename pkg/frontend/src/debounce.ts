/** Trailing-edge debounce with injectable timers so tests can fake time. */

export interface Timers {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

export const realTimers: Timers = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export interface Debounced {
  /** (Re)start the quiescence window; fn fires once it elapses untouched. */
  trigger(): void;
  cancel(): void;
  /** Fire immediately if a trigger is pending. */
  flush(): void;
}

export function debounce(fn: () => void, ms: number, timers: Timers = realTimers): Debounced {
  let handle: unknown = null;
  const fire = () => {
    handle = null;
    fn();
  };
  return {
    trigger() {
      if (handle !== null) timers.clear(handle);
      handle = timers.set(fire, ms);
    },
    cancel() {
      if (handle !== null) {
        timers.clear(handle);
        handle = null;
      }
    },
    flush() {
      if (handle !== null) {
        timers.clear(handle);
        fire();
      }
    },
  };
}
