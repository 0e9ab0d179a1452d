// Shapes of the service's JSON responses. The explorer renders these as-is;
// it never derives scores or tiers on its own.

export type TierLabel = "Speculative" | "Indirect" | "Direct";

export interface BookMeta {
  doc_id: string;
  title: string;
  author: string;
  pub_year: number;
  disciplines: string[];
  is_correspondent: boolean;
  source: string;
  /** Present in the /books listing only. */
  sentence_count?: number;
}

export interface SentenceRow {
  sentence_id: string;
  doc_id: string;
  ordinal: number;
  text: string;
  word_count: number;
  source_ordinal: number;
}

export interface BookDetail {
  meta: BookMeta;
  sentences: SentenceRow[];
}

export interface MatchEntry {
  query_sentence_id: string;
  corpus_sentence_id: string;
  score: number;
  tier: TierLabel;
  query_doc_id: string;
  corpus_doc_id: string;
  corpus_pub_year: number;
  corpus_disciplines: string[];
  structural_f1?: number;
  combined_score?: number;
  corpus_text: string | null;
  corpus_title: string | null;
  corpus_author: string | null;
  corpus_is_correspondent: boolean;
}

export interface SentenceMatches {
  sentence_id: string;
  doc_id: string;
  ordinal: number;
  text: string;
  pub_year: number;
  floor: number;
  tier: string | null;
  /** Matches in books published before the focus book. */
  pre: MatchEntry[];
  /** Matches in books published the same year or later. */
  post: MatchEntry[];
  /** Full hit count when the per-sentence cap truncated the list, else 0. */
  truncated: number;
}

export interface TimelinePoint {
  year: number;
  mean_similarity: number;
  book_count: number;
  match_count: number;
}

export interface Timeline {
  focus_doc_id: string;
  pub_year: number;
  stat: string;
  pre_mean: number;
  post_mean: number;
  points: TimelinePoint[];
}
