/** Keystroke pacing: trailing-edge debounce plus a latest-wins token so a
 * slow response can never overwrite a newer one. */

export const DEBOUNCE_MS = 150;

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  cancel(): void;
  /** Run a pending call immediately instead of waiting out the timer. */
  flush(): void;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs: number = DEBOUNCE_MS,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;

  const debounced = (...args: A): void => {
    pending = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const args = pending as A;
      pending = null;
      fn(...args);
    }, delayMs);
  };
  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pending = null;
  };
  debounced.flush = () => {
    if (timer === null) return;
    clearTimeout(timer);
    timer = null;
    const args = pending as A;
    pending = null;
    fn(...args);
  };
  return debounced;
}

/** Monotonic ticket counter. Issue a ticket per request; apply a response
 * only while its ticket is still the newest, so out-of-order arrivals of
 * superseded requests are dropped. */
export class LatestWins {
  private seq = 0;

  issue(): number {
    return ++this.seq;
  }

  isCurrent(ticket: number): boolean {
    return ticket === this.seq;
  }
}
