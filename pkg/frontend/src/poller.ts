/**
 * Minimal polling loop: fixed base interval, exponential backoff on errors,
 * at most one in-flight request, stale flag surfaced to the caller.
 */

export interface Poller {
  stop(): void;
  refresh(): Promise<void>;
}

export function createPoller<T>(
  fetcher: () => Promise<T>,
  onData: (data: T) => void,
  onStale: (error: unknown) => void,
  intervalMs = 1000,
): Poller {
  let stopped = false;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let backoff = 1;
  let inFlight = false;

  async function tick(): Promise<void> {
    if (stopped || inFlight) return;
    inFlight = true;
    try {
      const data = await fetcher();
      backoff = 1;
      if (!stopped) onData(data);
    } catch (error) {
      backoff = Math.min(backoff * 2, 8);
      if (!stopped) onStale(error);
    } finally {
      inFlight = false;
      if (!stopped) {
        timer = setTimeout(tick, intervalMs * backoff);
      }
    }
  }

  void tick();
  return {
    stop() {
      stopped = true;
      if (timer !== null) clearTimeout(timer);
    },
    refresh: tick,
  };
}
