"""Query a focus book against the corpus index and classify the hits.

Every surviving sentence of the focus book is range-searched at the floor,
same-document hits are dropped, and each remaining hit lands in one of three
confidence tiers. Boundaries are inclusive: a score of exactly 0.85 is a
Speculative match, 0.90 Indirect, 0.95 Direct.
"""

from __future__ import annotations

import csv
import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusStore, Document, filter_corpus, split_sentence_id
from .embedding import EmbeddingProvider, EmbeddingProviderConfig, embed_batch
from .errors import ConfigError, EmptyFocusBook, ManifestMismatch, UnsupportedFormat
from .index import VectorIndex

TIER_FLOOR = 0.85


class ConfidenceTier(float, enum.Enum):
    """Match confidence bands; the enum value is the inclusive lower bound."""

    SPECULATIVE = 0.85
    INDIRECT = 0.90
    DIRECT = 0.95

    @property
    def label(self) -> str:
        return self.name.title()

    @classmethod
    def from_label(cls, label: str) -> "ConfidenceTier":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown tier {label!r}") from None


def classify_tier(score: float) -> ConfidenceTier | None:
    """Tier for a cosine score, or None below the Speculative floor."""
    if not -1.0 <= score <= 1.0 + 1e-6:
        raise ValueError(f"score {score} outside [-1, 1]")
    for tier in (ConfidenceTier.DIRECT, ConfidenceTier.INDIRECT, ConfidenceTier.SPECULATIVE):
        if score >= tier.value:
            return tier
    return None


@dataclass(frozen=True)
class MatchConfig:
    floor: float = TIER_FLOOR
    exclude_same_doc: bool = True
    max_hits_per_sentence: int = 1000
    workers: int = 1

    def __post_init__(self):
        if self.floor < TIER_FLOOR:
            raise ConfigError(f"floor {self.floor} below the tier floor {TIER_FLOOR}")
        if self.floor > 1.0:
            raise ConfigError(f"floor {self.floor} above 1.0")
        if self.max_hits_per_sentence < 1:
            raise ConfigError("max_hits_per_sentence must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def to_json(self) -> dict:
        return {
            "floor": self.floor,
            "exclude_same_doc": self.exclude_same_doc,
            "max_hits_per_sentence": self.max_hits_per_sentence,
        }


@dataclass(frozen=True)
class MatchRecord:
    query_sentence_id: str
    corpus_sentence_id: str
    score: float
    tier: ConfidenceTier
    query_doc_id: str
    corpus_doc_id: str
    corpus_pub_year: int
    corpus_disciplines: tuple[str, ...] = ()
    structural_f1: float | None = None
    combined_score: float | None = None

    def to_json(self) -> dict:
        row = {
            "query_sentence_id": self.query_sentence_id,
            "corpus_sentence_id": self.corpus_sentence_id,
            "score": self.score,
            "tier": self.tier.label,
            "query_doc_id": self.query_doc_id,
            "corpus_doc_id": self.corpus_doc_id,
            "corpus_pub_year": self.corpus_pub_year,
            "corpus_disciplines": list(self.corpus_disciplines),
        }
        if self.structural_f1 is not None:
            row["structural_f1"] = self.structural_f1
        if self.combined_score is not None:
            row["combined_score"] = self.combined_score
        return row

    @classmethod
    def from_json(cls, row: dict) -> "MatchRecord":
        return cls(
            query_sentence_id=row["query_sentence_id"],
            corpus_sentence_id=row["corpus_sentence_id"],
            score=float(row["score"]),
            tier=ConfidenceTier.from_label(row["tier"]),
            query_doc_id=row["query_doc_id"],
            corpus_doc_id=row["corpus_doc_id"],
            corpus_pub_year=int(row["corpus_pub_year"]),
            corpus_disciplines=tuple(row.get("corpus_disciplines", ())),
            structural_f1=row.get("structural_f1"),
            combined_score=row.get("combined_score"),
        )


@dataclass
class MatchSet:
    focus_doc_id: str
    config: MatchConfig
    records: list[MatchRecord] = field(default_factory=list)
    truncated: dict[str, int] = field(default_factory=dict)

    @property
    def book_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for record in self.records:
            counts[record.corpus_doc_id] = counts.get(record.corpus_doc_id, 0) + 1
        return counts

    def for_tier(self, minimum: ConfidenceTier) -> list[MatchRecord]:
        """Records at or above a tier (cumulative: Direct ⊆ Indirect ⊆ Speculative)."""
        return [r for r in self.records if r.tier.value >= minimum.value]

    def __len__(self) -> int:
        return len(self.records)


def query_book(
    focus_doc: Document,
    index: VectorIndex,
    corpus: CorpusStore,
    provider: EmbeddingProvider,
    config: MatchConfig = MatchConfig(),
) -> MatchSet:
    """Match every surviving focus sentence against the corpus index.

    The index manifest must name the provider's model and the corpus store's
    content hash; querying with a different embedder or against a different
    corpus build is refused rather than silently producing garbage.
    """
    if index.manifest.get("model") != provider.model_id:
        raise ManifestMismatch(
            f"index built with model {index.manifest.get('model')!r}, "
            f"querying with {provider.model_id!r}"
        )
    if index.manifest.get("corpus_hash") != corpus.corpus_hash():
        raise ManifestMismatch("index was built from a different corpus build")

    sentences = filter_corpus([focus_doc], corpus.filters)
    if not sentences:
        raise EmptyFocusBook(
            f"{focus_doc.meta.doc_id}: no sentences survive the length filters"
        )
    embed_config = EmbeddingProviderConfig(dimension=index.dimension)
    vectors = embed_batch(sentences, embed_config, provider)
    metas = corpus.metas()

    def search_one(item) -> tuple[list[MatchRecord], int]:
        sentence, vector = item
        hits = index.range_search(vector.values, config.floor)
        if config.exclude_same_doc:
            hits = [
                h for h in hits
                if split_sentence_id(h.sentence_id)[0] != focus_doc.meta.doc_id
            ]
        full_count = len(hits)
        hits = hits[: config.max_hits_per_sentence]
        records = []
        for hit in hits:
            corpus_doc_id = split_sentence_id(hit.sentence_id)[0]
            meta = metas[corpus_doc_id]
            records.append(
                MatchRecord(
                    query_sentence_id=sentence.sentence_id,
                    corpus_sentence_id=hit.sentence_id,
                    score=hit.score,
                    tier=classify_tier(hit.score),
                    query_doc_id=focus_doc.meta.doc_id,
                    corpus_doc_id=corpus_doc_id,
                    corpus_pub_year=meta.pub_year,
                    corpus_disciplines=tuple(sorted(meta.disciplines)),
                )
            )
        return records, full_count

    work = list(zip(sentences, vectors))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(search_one, work))
    else:
        results = [search_one(item) for item in work]

    match_set = MatchSet(focus_doc.meta.doc_id, config)
    for sentence, (records, full_count) in zip(sentences, results):
        match_set.records.extend(records)
        if full_count > config.max_hits_per_sentence:
            match_set.truncated[sentence.sentence_id] = full_count
    return match_set


def influenced_books(match_set: MatchSet, min_matching_sentences: int = 6) -> set[str]:
    """Corpus books with at least min_matching_sentences distinct matched sentences."""
    distinct: dict[str, set[str]] = {}
    for record in match_set.records:
        distinct.setdefault(record.corpus_doc_id, set()).add(record.corpus_sentence_id)
    return {
        doc_id
        for doc_id, sentence_ids in distinct.items()
        if len(sentence_ids) >= min_matching_sentences
    }


def _header_manifest(match_set: MatchSet) -> dict:
    return {
        "type": "match_set",
        "focus_doc_id": match_set.focus_doc_id,
        "config": match_set.config.to_json(),
        "record_count": len(match_set.records),
        "book_counts": dict(sorted(match_set.book_counts.items())),
        "truncated": dict(sorted(match_set.truncated.items())),
    }


_CSV_COLUMNS = [
    "query_sentence_id",
    "corpus_sentence_id",
    "score",
    "tier",
    "query_doc_id",
    "corpus_doc_id",
    "corpus_pub_year",
    "corpus_disciplines",
    "structural_f1",
    "combined_score",
]


def export_match_set(match_set: MatchSet, path: Path | str, format: str = "jsonl") -> None:
    """Write a MatchSet as JSONL or CSV; the first line is a manifest."""
    path = Path(path)
    header = json.dumps(_header_manifest(match_set), sort_keys=True)
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(header + "\n")
            for record in match_set.records:
                handle.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write("# " + header + "\n")
            writer = csv.writer(handle)
            writer.writerow(_CSV_COLUMNS)
            for record in match_set.records:
                row = record.to_json()
                row["corpus_disciplines"] = ";".join(record.corpus_disciplines)
                writer.writerow([row.get(c, "") for c in _CSV_COLUMNS])
    else:
        raise UnsupportedFormat(f"unknown export format {format!r}")


def load_match_set(path: Path | str) -> MatchSet:
    """Read back a JSONL export written by export_match_set."""
    with open(path, encoding="utf-8") as handle:
        header = json.loads(handle.readline())
        if header.get("type") != "match_set":
            raise UnsupportedFormat(f"{path} is not a match-set export")
        config = MatchConfig(**header["config"])
        records = [MatchRecord.from_json(json.loads(line)) for line in handle if line.strip()]
    match_set = MatchSet(header["focus_doc_id"], config, records)
    match_set.truncated = {k: int(v) for k, v in header.get("truncated", {}).items()}
    return match_set
