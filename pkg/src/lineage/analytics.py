"""Aggregate a MatchSet into timeline, discipline-table, and flow views.

All three aggregations treat a publication-year tie with the focus book as
post-publication: influence can circulate within the year, and the focus
year is the inflection point of the timeline.

Floating-point folds sort their inputs before summing, so two runs over the
same multiset of values produce bitwise-identical means no matter how the
values were ordered upstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DocumentMeta
from .errors import ConfigError, MissingMetadata
from .matching import ConfidenceTier, MatchSet, influenced_books

UNCLASSIFIED = "unclassified"
CORRESPONDENTS = "correspondents"
ORIGIN = "origin"
AFTERLIFE = "afterlife"

TIMELINE_STATS = ("mean", "max", "density")


@dataclass(frozen=True)
class TimelinePoint:
    year: int
    mean_similarity: float
    book_count: int
    match_count: int

    def to_json(self) -> dict:
        return {
            "year": self.year,
            "mean_similarity": self.mean_similarity,
            "book_count": self.book_count,
            "match_count": self.match_count,
        }


@dataclass(frozen=True)
class InfluenceTimeline:
    focus_doc_id: str
    pub_year: int
    points: list[TimelinePoint]
    pre_mean: float
    post_mean: float
    stat: str = "mean"

    def to_json(self) -> dict:
        return {
            "focus_doc_id": self.focus_doc_id,
            "pub_year": self.pub_year,
            "stat": self.stat,
            "pre_mean": self.pre_mean,
            "post_mean": self.post_mean,
            "points": [p.to_json() for p in self.points],
        }


@dataclass(frozen=True)
class DisciplineInfluence:
    discipline: str
    eligible_books: int
    influenced_books: int
    percent: float

    def to_json(self) -> dict:
        return {
            "discipline": self.discipline,
            "eligible_books": self.eligible_books,
            "influenced_books": self.influenced_books,
            "percent": self.percent,
        }


@dataclass(frozen=True)
class AlluvialFlow:
    direction: str  # origin | afterlife
    discipline: str
    tier: ConfidenceTier
    weight: float

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "discipline": self.discipline,
            "tier": self.tier.label,
            "weight": self.weight,
        }


def _sorted_mean(values: list[float]) -> float:
    """Mean with a canonical summation order (ascending), 0 for no values."""
    if not values:
        return 0.0
    return float(np.sort(np.asarray(values, dtype=np.float64)).sum() / len(values))


def _book_values(
    match_set: MatchSet,
    corpus_meta: dict[str, DocumentMeta],
    stat: str,
    book_sizes: dict[str, int] | None,
) -> dict[str, float]:
    """Book-level similarity statistic for every corpus book (0 if unmatched)."""
    if stat not in TIMELINE_STATS:
        raise ConfigError(f"unknown timeline stat {stat!r}; pick one of {TIMELINE_STATS}")
    scores: dict[str, list[float]] = {}
    matched_sentences: dict[str, set[str]] = {}
    for record in match_set.records:
        if record.corpus_doc_id not in corpus_meta:
            raise MissingMetadata(f"no metadata for {record.corpus_doc_id}")
        scores.setdefault(record.corpus_doc_id, []).append(record.score)
        matched_sentences.setdefault(record.corpus_doc_id, set()).add(
            record.corpus_sentence_id
        )
    values: dict[str, float] = {}
    for doc_id in corpus_meta:
        if doc_id == match_set.focus_doc_id:
            continue
        if stat == "mean":
            values[doc_id] = _sorted_mean(scores.get(doc_id, []))
        elif stat == "max":
            values[doc_id] = max(scores.get(doc_id, []), default=0.0)
        else:  # density
            if book_sizes is None or doc_id not in book_sizes:
                raise ConfigError("density stat needs a sentence count per book")
            size = book_sizes[doc_id]
            values[doc_id] = len(matched_sentences.get(doc_id, ())) / size if size else 0.0
    return values


def build_timeline(
    match_set: MatchSet,
    corpus_meta: dict[str, DocumentMeta],
    pub_year: int,
    stat: str = "mean",
    book_sizes: dict[str, int] | None = None,
) -> InfluenceTimeline:
    """Per-year means of a book-level similarity statistic, split pre/post.

    Every corpus book (except the focus book itself) contributes one value
    to its publication year — zero when it has no matches — so a year with
    quiet books drags the mean down rather than vanishing. The pre/post
    means average book values, not year points.
    """
    values = _book_values(match_set, corpus_meta, stat, book_sizes)
    match_counts = {}
    for record in match_set.records:
        match_counts[record.corpus_doc_id] = match_counts.get(record.corpus_doc_id, 0) + 1

    by_year: dict[int, list[str]] = {}
    for doc_id in values:
        by_year.setdefault(corpus_meta[doc_id].pub_year, []).append(doc_id)
    points = [
        TimelinePoint(
            year=year,
            mean_similarity=_sorted_mean([values[d] for d in docs]),
            book_count=len(docs),
            match_count=sum(match_counts.get(d, 0) for d in docs),
        )
        for year, docs in sorted(by_year.items())
    ]
    pre = [values[d] for d in values if corpus_meta[d].pub_year < pub_year]
    post = [values[d] for d in values if corpus_meta[d].pub_year >= pub_year]
    return InfluenceTimeline(
        focus_doc_id=match_set.focus_doc_id,
        pub_year=pub_year,
        points=points,
        pre_mean=_sorted_mean(pre),
        post_mean=_sorted_mean(post),
        stat=stat,
    )


def discipline_table(
    match_set: MatchSet,
    corpus_meta: dict[str, DocumentMeta],
    pub_year: int,
    min_matching_sentences: int = 6,
) -> list[DisciplineInfluence]:
    """Share of post-publication books per discipline showing influence.

    A book carrying k discipline labels counts in all k rows; books with no
    labels fall under the reserved "unclassified" row. A final
    "correspondents" pseudo-row covers flagged books across disciplines.
    """
    influenced = influenced_books(match_set, min_matching_sentences)
    labels = sorted(
        {label for meta in corpus_meta.values() for label in meta.disciplines}
    )
    if any(
        not meta.disciplines
        for doc_id, meta in corpus_meta.items()
        if doc_id != match_set.focus_doc_id
    ):
        labels.append(UNCLASSIFIED)

    eligible = {
        doc_id: meta
        for doc_id, meta in corpus_meta.items()
        if doc_id != match_set.focus_doc_id and meta.pub_year >= pub_year
    }

    def row(label: str, members: list[str]) -> DisciplineInfluence:
        hits = sum(1 for doc_id in members if doc_id in influenced)
        percent = 100.0 * hits / len(members) if members else 0.0
        return DisciplineInfluence(label, len(members), hits, percent)

    rows = []
    for label in labels:
        if label == UNCLASSIFIED:
            members = [d for d, m in eligible.items() if not m.disciplines]
        else:
            members = [d for d, m in eligible.items() if label in m.disciplines]
        rows.append(row(label, members))
    rows.append(row(CORRESPONDENTS, [d for d, m in eligible.items() if m.is_correspondent]))
    return rows


def alluvial_flows(
    match_set: MatchSet, corpus_meta: dict[str, DocumentMeta], pub_year: int
) -> list[AlluvialFlow]:
    """Match weight flowing from origins (pre) and into afterlives (post).

    Each record carries weight 1, split evenly across its book's discipline
    labels, so total flow weight equals the match count exactly (up to
    float summation error well below 1e-9).
    """
    totals: dict[tuple[str, str, ConfidenceTier], float] = {}
    for record in match_set.records:
        direction = ORIGIN if record.corpus_pub_year < pub_year else AFTERLIFE
        labels = record.corpus_disciplines or (UNCLASSIFIED,)
        share = 1.0 / len(labels)
        for label in labels:
            key = (direction, label, record.tier)
            totals[key] = totals.get(key, 0.0) + share
    order = {ORIGIN: 0, AFTERLIFE: 1}
    return [
        AlluvialFlow(direction, label, tier, weight)
        for (direction, label, tier), weight in sorted(
            totals.items(), key=lambda kv: (order[kv[0][0]], kv[0][1], -kv[0][2].value)
        )
    ]
