// Reader view state, its URL-hash encoding (shareable links are the only
// client-side persistence), and the small synchronization helpers the app
// uses to discard stale fetches and to signal quiescence to tests.

export type TierFilter = "speculative" | "indirect" | "direct" | null;

const TIER_VALUES = new Set(["speculative", "indirect", "direct"]);

export interface ReaderState {
  focusBook: string | null;
  /** Always a sentence of focusBook; the app re-validates after loading. */
  selectedSentence: string | null;
  tierFilter: TierFilter;
  disciplineFilter: string | null;
  yearFrom: number | null;
  yearTo: number | null;
}

export const EMPTY_STATE: ReaderState = {
  focusBook: null,
  selectedSentence: null,
  tierFilter: null,
  disciplineFilter: null,
  yearFrom: null,
  yearTo: null,
};

export function encodeState(state: ReaderState): string {
  const params = new URLSearchParams();
  if (state.focusBook) params.set("book", state.focusBook);
  if (state.selectedSentence) params.set("sentence", state.selectedSentence);
  if (state.tierFilter) params.set("tier", state.tierFilter);
  if (state.disciplineFilter) params.set("discipline", state.disciplineFilter);
  if (state.yearFrom != null) params.set("from", String(state.yearFrom));
  if (state.yearTo != null) params.set("to", String(state.yearTo));
  return params.toString();
}

function intOrNull(raw: string | null): number | null {
  if (raw == null || raw.trim() === "") return null;
  const n = Number(raw);
  return Number.isInteger(n) ? n : null;
}

/** Parse a location hash (leading "#" optional); unknown keys and malformed
 * values degrade to the empty state field rather than throwing. */
export function decodeState(hash: string): ReaderState {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const tier = params.get("tier");
  return {
    focusBook: params.get("book") || null,
    selectedSentence: params.get("sentence") || null,
    tierFilter: tier && TIER_VALUES.has(tier) ? (tier as TierFilter) : null,
    disciplineFilter: params.get("discipline") || null,
    yearFrom: intOrNull(params.get("from")),
    yearTo: intOrNull(params.get("to")),
  };
}

/** Monotone ticket counter: a response is applied only if its ticket is
 * still the latest for the panel that issued it. */
export class SeqGate {
  private n = 0;

  next(): number {
    return ++this.n;
  }

  current(ticket: number): boolean {
    return ticket === this.n;
  }
}

/** Counts in-flight work so tests can await a settled UI. */
export class PendingTracker {
  private count = 0;

  track<T>(promise: Promise<T>): Promise<T> {
    this.count += 1;
    const done = () => {
      this.count -= 1;
    };
    promise.then(done, done);
    return promise;
  }

  /** Resolves once no tracked work remains, surviving cascades where one
   * completion schedules the next fetch. */
  async idle(): Promise<void> {
    const tick = () => new Promise<void>((r) => setTimeout(r, 5));
    for (;;) {
      await tick();
      if (this.count === 0) {
        await tick();
        if (this.count === 0) return;
      }
    }
  }
}
