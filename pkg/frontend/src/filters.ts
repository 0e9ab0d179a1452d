// Discipline and year-range filters are pure view state: they narrow what is
// shown from an already-fetched response and never trigger a refetch, so
// clearing them restores the unfiltered API data exactly.

import type { MatchEntry } from "./types.js";

export interface ViewFilters {
  discipline: string | null;
  yearFrom: number | null;
  yearTo: number | null;
}

export const NO_FILTERS: ViewFilters = { discipline: null, yearFrom: null, yearTo: null };

export function entryVisible(entry: MatchEntry, filters: ViewFilters): boolean {
  if (filters.discipline && !entry.corpus_disciplines.includes(filters.discipline)) {
    return false;
  }
  if (filters.yearFrom != null && entry.corpus_pub_year < filters.yearFrom) return false;
  if (filters.yearTo != null && entry.corpus_pub_year > filters.yearTo) return false;
  return true;
}

export function applyFilters(entries: MatchEntry[], filters: ViewFilters): MatchEntry[] {
  return entries.filter((e) => entryVisible(e, filters));
}

/** Shade band for a sentence's match count: 0 none, then light/medium/hot. */
export function heatBucket(count: number): 0 | 1 | 2 | 3 {
  if (count <= 0) return 0;
  if (count < 3) return 1;
  if (count < 6) return 2;
  return 3;
}
