// The explorer: pick a focus book, scan its sentences with match-count heat
// shading, click one, and read where it appeared earlier (origins) and where
// it resonated later (afterlives). Every number shown comes straight from
// the service's JSON API; clicking a matched book pivots the whole view to
// it, which is what turns reading into steered exploration.

import { ApiClient } from "./client.js";
import { applyFilters, heatBucket, type ViewFilters } from "./filters.js";
import {
  decodeState,
  encodeState,
  PendingTracker,
  SeqGate,
  type ReaderState,
  type TierFilter,
} from "./state.js";
import { timelineSvg } from "./timeline.js";
import type { BookMeta, MatchEntry, SentenceMatches, SentenceRow } from "./types.js";

export interface ExplorerOptions {
  /** API origin, e.g. "http://127.0.0.1:8123". Empty = same origin. */
  base?: string;
  /** Window used for URL state; defaults to the global one. */
  window?: Window;
}

const SHELL = `
  <header class="topbar">
    <h1>lineage explorer</h1>
    <div class="controls">
      <label>book <select data-el="book-select"><option value="">choose a book…</option></select></label>
      <label>tier <select data-el="tier-select">
        <option value="">all (&ge; 0.85)</option>
        <option value="speculative">Speculative and up</option>
        <option value="indirect">Indirect and up</option>
        <option value="direct">Direct only</option>
      </select></label>
      <label>discipline <select data-el="discipline-select"><option value="">all</option></select></label>
      <label>years <input data-el="year-from" type="number" placeholder="from" />&ndash;<input
        data-el="year-to" type="number" placeholder="to" /></label>
      <button data-el="clear-filters" type="button">clear filters</button>
    </div>
  </header>
  <div class="banner hidden" data-el="banner" role="alert">
    <span data-el="banner-text"></span>
    <button data-el="retry" type="button">retry</button>
  </div>
  <main class="columns">
    <section class="book-view">
      <div class="book-head" data-el="book-head"><p class="placeholder">Pick a book to begin.</p></div>
      <ol class="sentence-list" data-el="sentence-list"></ol>
    </section>
    <aside class="match-panel">
      <div class="panel-head" data-el="panel-head"><p class="placeholder">Click a sentence to trace
        where it appeared before publication and where it echoed after.</p></div>
      <div class="mini-timeline" data-el="mini-timeline"></div>
      <section class="origins">
        <h2>origins <span class="side-note">published before</span></h2>
        <ul data-el="origins-list"></ul>
      </section>
      <section class="afterlives">
        <h2>afterlives <span class="side-note">published after</span></h2>
        <ul data-el="afterlives-list"></ul>
      </section>
    </aside>
  </main>
`;

export class Explorer {
  readonly api: ApiClient;
  state: ReaderState;
  /** Resolves when the initial book list (and any URL-named book) loaded. */
  readonly ready: Promise<void>;

  private readonly win: Window;
  private books: BookMeta[] = [];
  private sentences: SentenceRow[] = [];
  private readonly sentenceItems = new Map<string, HTMLElement>();
  private panelData: SentenceMatches | null = null;
  /** Unfiltered responses keyed by sentence id + tier param. */
  private readonly matchCache = new Map<string, SentenceMatches>();
  private readonly gates = {
    book: new SeqGate(),
    heat: new SeqGate(),
    panel: new SeqGate(),
    timeline: new SeqGate(),
  };
  private readonly pending = new PendingTracker();
  private retryAction: (() => Promise<void>) | null = null;
  private readonly onHashChange: () => void;

  private readonly el: Record<string, HTMLElement>;

  constructor(root: HTMLElement, options: ExplorerOptions = {}) {
    this.api = new ApiClient(options.base ?? "");
    this.win = options.window ?? window;
    root.innerHTML = SHELL;
    this.el = {};
    for (const node of root.querySelectorAll<HTMLElement>("[data-el]")) {
      this.el[node.dataset.el as string] = node;
    }
    this.state = decodeState(this.win.location.hash);
    this.wireControls();
    this.onHashChange = () => {
      this.setState(decodeState(this.win.location.hash));
    };
    this.win.addEventListener("hashchange", this.onHashChange);
    this.ready = this.pending.track(this.start());
  }

  /** Resolves once every in-flight fetch has been applied or discarded. */
  idle(): Promise<void> {
    return this.pending.idle();
  }

  /** Detach window listeners so a replaced instance stops reacting. */
  dispose(): void {
    this.win.removeEventListener("hashchange", this.onHashChange);
  }

  // -- state ----------------------------------------------------------------

  private setState(next: ReaderState): void {
    const prev = this.state;
    if (encodeState(next) === encodeState(prev)) return;
    this.state = next;
    this.syncControls();
    this.writeUrl();
    if (next.focusBook !== prev.focusBook) {
      this.pending.track(this.loadBook());
      return;
    }
    if (next.tierFilter !== prev.tierFilter) {
      // Tier is the one filter the API applies server-side.
      this.pending.track(this.sweepHeat());
      this.pending.track(this.loadPanel());
      return;
    }
    if (next.selectedSentence !== prev.selectedSentence) {
      this.markSelection();
      this.pending.track(this.loadPanel());
      return;
    }
    // Discipline / year range: pure view state, repaint from cached data.
    this.repaintHeat();
    this.repaintPanel();
  }

  private viewFilters(): ViewFilters {
    return {
      discipline: this.state.disciplineFilter,
      yearFrom: this.state.yearFrom,
      yearTo: this.state.yearTo,
    };
  }

  private writeUrl(): void {
    const encoded = encodeState(this.state);
    const loc = this.win.location;
    const url = encoded ? "#" + encoded : loc.pathname + loc.search;
    this.win.history.replaceState(null, "", url);
  }

  private syncControls(): void {
    (this.el["book-select"] as HTMLSelectElement).value = this.state.focusBook ?? "";
    (this.el["tier-select"] as HTMLSelectElement).value = this.state.tierFilter ?? "";
    (this.el["discipline-select"] as HTMLSelectElement).value =
      this.state.disciplineFilter ?? "";
    (this.el["year-from"] as HTMLInputElement).value =
      this.state.yearFrom != null ? String(this.state.yearFrom) : "";
    (this.el["year-to"] as HTMLInputElement).value =
      this.state.yearTo != null ? String(this.state.yearTo) : "";
  }

  private wireControls(): void {
    this.el["book-select"].addEventListener("change", () => {
      const value = (this.el["book-select"] as HTMLSelectElement).value;
      this.setState({ ...this.state, focusBook: value || null, selectedSentence: null });
    });
    this.el["tier-select"].addEventListener("change", () => {
      const value = (this.el["tier-select"] as HTMLSelectElement).value;
      this.setState({ ...this.state, tierFilter: (value || null) as TierFilter });
    });
    this.el["discipline-select"].addEventListener("change", () => {
      const value = (this.el["discipline-select"] as HTMLSelectElement).value;
      this.setState({ ...this.state, disciplineFilter: value || null });
    });
    const yearHandler = () => {
      const from = (this.el["year-from"] as HTMLInputElement).value;
      const to = (this.el["year-to"] as HTMLInputElement).value;
      this.setState({
        ...this.state,
        yearFrom: from === "" ? null : Number(from),
        yearTo: to === "" ? null : Number(to),
      });
    };
    this.el["year-from"].addEventListener("change", yearHandler);
    this.el["year-to"].addEventListener("change", yearHandler);
    this.el["clear-filters"].addEventListener("click", () => {
      this.setState({
        ...this.state,
        tierFilter: null,
        disciplineFilter: null,
        yearFrom: null,
        yearTo: null,
      });
    });
    this.el["retry"].addEventListener("click", () => {
      this.hideBanner();
      const action = this.retryAction;
      if (action) this.pending.track(action());
    });
  }

  // -- loading --------------------------------------------------------------

  private async start(): Promise<void> {
    const ok = await this.loadBooks();
    if (!ok) return;
    if (!this.state.focusBook && this.books.length > 0) {
      this.setState({ ...this.state, focusBook: this.books[0].doc_id });
      return; // setState kicked off loadBook
    }
    this.syncControls();
    if (this.state.focusBook) await this.loadBook();
  }

  private async loadBooks(): Promise<boolean> {
    try {
      const { books } = await this.api.books();
      this.books = books;
      const select = this.el["book-select"] as HTMLSelectElement;
      for (const book of books) {
        const option = document.createElement("option");
        option.value = book.doc_id;
        option.textContent = `${book.title || book.doc_id} (${book.pub_year})`;
        select.append(option);
      }
      const disciplines = new Set<string>();
      for (const book of books) for (const d of book.disciplines) disciplines.add(d);
      const discSelect = this.el["discipline-select"] as HTMLSelectElement;
      for (const d of [...disciplines].sort()) {
        const option = document.createElement("option");
        option.value = d;
        option.textContent = d;
        discSelect.append(option);
      }
      this.hideBanner();
      return true;
    } catch (err) {
      this.showBanner(err, () => this.start());
      return false;
    }
  }

  private async loadBook(): Promise<void> {
    const docId = this.state.focusBook;
    const ticket = this.gates.book.next();
    this.panelData = null;
    this.el["sentence-list"].innerHTML = "";
    this.sentenceItems.clear();
    this.renderPanelPlaceholder();
    this.el["mini-timeline"].innerHTML = "";
    if (!docId) {
      this.el["book-head"].innerHTML = '<p class="placeholder">Pick a book to begin.</p>';
      return;
    }
    try {
      const detail = await this.api.book(docId);
      if (!this.gates.book.current(ticket)) return;
      this.sentences = detail.sentences;
      if (
        this.state.selectedSentence &&
        !detail.sentences.some((s) => s.sentence_id === this.state.selectedSentence)
      ) {
        // Selection must belong to the focus book.
        this.state = { ...this.state, selectedSentence: null };
        this.writeUrl();
      }
      this.renderBookHead(detail.meta);
      this.renderSentences();
      this.hideBanner();
      await Promise.all([this.sweepHeat(), this.loadTimeline(docId), this.loadPanel()]);
    } catch (err) {
      if (this.gates.book.current(ticket)) this.showBanner(err, () => this.loadBook());
    }
  }

  private cacheKey(sentenceId: string, tier: TierFilter): string {
    return `${sentenceId}|${tier ?? ""}`;
  }

  private async fetchMatches(sentenceId: string, tier: TierFilter): Promise<SentenceMatches> {
    const key = this.cacheKey(sentenceId, tier);
    const cached = this.matchCache.get(key);
    if (cached) return cached;
    const data = await this.api.sentenceMatches(sentenceId, tier);
    this.matchCache.set(key, data);
    return data;
  }

  /** Fetch per-sentence match counts for the whole book, a few at a time. */
  private async sweepHeat(): Promise<void> {
    const ticket = this.gates.heat.next();
    const tier = this.state.tierFilter;
    const rows = [...this.sentences];
    for (const row of rows) this.setHeatPending(row.sentence_id);
    let cursor = 0;
    let failed: unknown = null;
    const worker = async () => {
      while (cursor < rows.length && failed == null) {
        const row = rows[cursor++];
        if (!this.gates.heat.current(ticket)) return;
        try {
          await this.fetchMatches(row.sentence_id, tier);
        } catch (err) {
          failed = err;
          return;
        }
        if (!this.gates.heat.current(ticket)) return;
        this.paintHeat(row.sentence_id);
      }
    };
    const lanes = Math.min(6, rows.length);
    await Promise.all(Array.from({ length: lanes }, worker));
    if (failed != null && this.gates.heat.current(ticket)) {
      this.showBanner(failed, () => this.sweepHeat());
    }
  }

  private async loadPanel(): Promise<void> {
    const sentenceId = this.state.selectedSentence;
    const ticket = this.gates.panel.next();
    if (!sentenceId) {
      this.panelData = null;
      this.renderPanelPlaceholder();
      return;
    }
    try {
      const data = await this.fetchMatches(sentenceId, this.state.tierFilter);
      if (!this.gates.panel.current(ticket)) return;
      this.panelData = data;
      this.repaintPanel();
    } catch (err) {
      if (this.gates.panel.current(ticket)) this.showBanner(err, () => this.loadPanel());
    }
  }

  private async loadTimeline(docId: string): Promise<void> {
    const ticket = this.gates.timeline.next();
    try {
      const timeline = await this.api.timeline(docId);
      if (!this.gates.timeline.current(ticket)) return;
      this.el["mini-timeline"].innerHTML = timelineSvg(timeline);
    } catch {
      if (this.gates.timeline.current(ticket)) {
        this.el["mini-timeline"].innerHTML = "";
      }
    }
  }

  // -- rendering ------------------------------------------------------------

  private renderBookHead(meta: BookMeta): void {
    const head = this.el["book-head"];
    head.innerHTML = "";
    const title = document.createElement("h2");
    title.textContent = meta.title || meta.doc_id;
    const byline = document.createElement("div");
    byline.className = "byline";
    byline.textContent = `${meta.author || "unknown"} · ${meta.pub_year} · ${
      this.sentences.length
    } sentences`;
    head.append(title, byline);
    for (const d of meta.disciplines) head.append(chip(d));
    if (meta.is_correspondent) head.append(chip("correspondent", true));
  }

  private renderSentences(): void {
    const list = this.el["sentence-list"];
    list.innerHTML = "";
    this.sentenceItems.clear();
    for (const row of this.sentences) {
      const item = document.createElement("li");
      item.className = "sentence heat-pending";
      item.dataset.sid = row.sentence_id;
      const button = document.createElement("button");
      button.type = "button";
      button.className = "sentence-text";
      button.textContent = row.text;
      button.addEventListener("click", () => {
        this.setState({ ...this.state, selectedSentence: row.sentence_id });
      });
      const badge = document.createElement("span");
      badge.className = "heat-badge";
      badge.textContent = "…";
      item.append(button, badge);
      list.append(item);
      this.sentenceItems.set(row.sentence_id, item);
    }
    this.markSelection();
  }

  private sentenceItem(sentenceId: string): HTMLElement | null {
    return this.sentenceItems.get(sentenceId) ?? null;
  }

  private setHeatPending(sentenceId: string): void {
    const item = this.sentenceItem(sentenceId);
    if (!item) return;
    item.classList.remove("heat-0", "heat-1", "heat-2", "heat-3");
    item.classList.add("heat-pending");
    delete item.dataset.heat;
    const badge = item.querySelector(".heat-badge");
    if (badge) badge.textContent = "…";
  }

  private paintHeat(sentenceId: string): void {
    const item = this.sentenceItem(sentenceId);
    const data = this.matchCache.get(this.cacheKey(sentenceId, this.state.tierFilter));
    if (!item || !data) return;
    const filters = this.viewFilters();
    const count =
      applyFilters(data.pre, filters).length + applyFilters(data.post, filters).length;
    item.classList.remove("heat-pending", "heat-0", "heat-1", "heat-2", "heat-3");
    item.classList.add(`heat-${heatBucket(count)}`);
    item.dataset.heat = String(count);
    const badge = item.querySelector(".heat-badge");
    if (badge) badge.textContent = String(count);
  }

  private repaintHeat(): void {
    for (const row of this.sentences) this.paintHeat(row.sentence_id);
  }

  private markSelection(): void {
    for (const [sid, item] of this.sentenceItems) {
      item.classList.toggle("selected", sid === this.state.selectedSentence);
    }
  }

  private renderPanelPlaceholder(): void {
    this.el["panel-head"].innerHTML =
      '<p class="placeholder">Click a sentence to trace where it appeared before ' +
      "publication and where it echoed after.</p>";
    this.el["origins-list"].innerHTML = "";
    this.el["afterlives-list"].innerHTML = "";
  }

  private repaintPanel(): void {
    const data = this.panelData;
    if (!data) {
      this.renderPanelPlaceholder();
      return;
    }
    const head = this.el["panel-head"];
    head.innerHTML = "";
    const quote = document.createElement("blockquote");
    quote.textContent = data.text;
    const counts = document.createElement("div");
    counts.className = "counts";
    counts.textContent =
      `sentence ${data.ordinal} · ${data.pre.length} earlier · ${data.post.length} later` +
      (data.tier ? ` · tier ≥ ${data.tier}` : "");
    head.append(quote, counts);
    if (data.truncated > 0) {
      const note = document.createElement("div");
      note.className = "truncated-note";
      note.textContent = `showing the first ${data.pre.length + data.post.length} of ${
        data.truncated
      } hits`;
      head.append(note);
    }
    this.renderEntries(
      data.pre,
      this.el["origins-list"],
      "No earlier matches pass the current filters.",
    );
    this.renderEntries(
      data.post,
      this.el["afterlives-list"],
      "No later matches pass the current filters.",
    );
  }

  private renderEntries(entries: MatchEntry[], list: HTMLElement, emptyText: string): void {
    list.innerHTML = "";
    const visible = applyFilters(entries, this.viewFilters());
    if (visible.length === 0) {
      const item = document.createElement("li");
      item.className = "empty";
      item.textContent = emptyText;
      list.append(item);
      return;
    }
    for (const entry of visible) list.append(this.entryItem(entry));
  }

  private entryItem(entry: MatchEntry): HTMLLIElement {
    const item = document.createElement("li");
    item.className = "match-entry";
    item.dataset.corpusSid = entry.corpus_sentence_id;
    item.dataset.corpusDoc = entry.corpus_doc_id;

    const top = document.createElement("div");
    top.className = "entry-top";
    const badge = document.createElement("span");
    badge.className = `tier-badge tier-${entry.tier.toLowerCase()}`;
    badge.textContent = entry.tier;
    const score = document.createElement("span");
    score.className = "score";
    score.textContent = entry.score.toFixed(4);
    top.append(badge, score);

    const text = document.createElement("blockquote");
    text.className = "corpus-text";
    text.textContent = entry.corpus_text ?? "(sentence not in the corpus view)";

    const meta = document.createElement("div");
    meta.className = "entry-meta";
    const pivot = document.createElement("button");
    pivot.type = "button";
    pivot.className = "pivot";
    pivot.textContent = `${entry.corpus_title || entry.corpus_doc_id} (${
      entry.corpus_pub_year
    })${entry.corpus_author ? " — " + entry.corpus_author : ""}`;
    pivot.addEventListener("click", () => {
      // Pivot the whole view: the matched book becomes the focus book with
      // its matched sentence selected, ready to explore in turn.
      this.setState({
        ...this.state,
        focusBook: entry.corpus_doc_id,
        selectedSentence: entry.corpus_sentence_id,
      });
    });
    meta.append(pivot);
    for (const d of entry.corpus_disciplines) meta.append(chip(d));
    if (entry.corpus_is_correspondent) meta.append(chip("correspondent", true));

    item.append(top, text, meta);
    return item;
  }

  // -- error banner ----------------------------------------------------------

  private showBanner(err: unknown, retry: () => Promise<void>): void {
    const message = err instanceof Error ? err.message : String(err);
    this.el["banner-text"].textContent = `Service unreachable or request failed: ${message}`;
    this.el["banner"].classList.remove("hidden");
    this.retryAction = retry;
  }

  private hideBanner(): void {
    this.el["banner"].classList.add("hidden");
  }
}

function chip(label: string, correspondent = false): HTMLSpanElement {
  const span = document.createElement("span");
  span.className = correspondent ? "chip chip-corr" : "chip";
  span.textContent = label;
  return span;
}

export function createExplorer(root: HTMLElement, options: ExplorerOptions = {}): Explorer {
  return new Explorer(root, options);
}
