import type { BookDetail, BookMeta, SentenceMatches, Timeline } from "./types.js";

export function qs(
  params: Record<string, string | number | undefined | null>,
): string {
  const pairs = Object.entries(params).filter(([, v]) => v != null && v !== "");
  if (pairs.length === 0) return "";
  return "?" + pairs.map(([k, v]) => `${k}=${encodeURIComponent(String(v))}`).join("&");
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    url: string,
  ) {
    super(`HTTP ${status} ${url}: ${detail}`);
    this.name = "ApiError";
  }
}

export class ApiClient {
  /** @param base API origin, e.g. "http://127.0.0.1:8123"; "" = same origin. */
  constructor(readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const url = this.base + path;
    const res = await fetch(url);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: unknown };
        if (body.detail != null) detail = String(body.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail, url);
    }
    return (await res.json()) as T;
  }

  books(): Promise<{ books: BookMeta[] }> {
    return this.getJson("/books");
  }

  book(docId: string): Promise<BookDetail> {
    return this.getJson(`/books/${encodeURIComponent(docId)}`);
  }

  sentenceMatches(sentenceId: string, tier?: string | null): Promise<SentenceMatches> {
    return this.getJson(
      `/sentences/${encodeURIComponent(sentenceId)}/matches${qs({ tier })}`,
    );
  }

  timeline(docId: string): Promise<Timeline> {
    return this.getJson(`/books/${encodeURIComponent(docId)}/timeline`);
  }
}
