import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lineage.corpus import FilterConfig
from lineage.errors import (
    ConfigError,
    EmptyFocusBook,
    ManifestMismatch,
    UnsupportedFormat,
)
from lineage.index import build_index
from lineage.matching import (
    ConfidenceTier,
    MatchConfig,
    MatchRecord,
    MatchSet,
    classify_tier,
    export_match_set,
    influenced_books,
    load_match_set,
    query_book,
)

from corpus_factory import (
    build_store,
    focus_document,
    hash_index_for,
    meta,
    synthetic_sentence,
    synthetic_text,
)

# One 47-word sentence and three perturbed variants whose hash-embedding
# cosines (d=384) were measured once and sit comfortably inside each band:
# 1 word changed -> 0.9888, 5 words -> 0.9284, 8 words -> 0.8853.
_BASE_WORDS = (
    "the slow accumulation of sediment along the river delta preserves a faithful "
    "record of seasonal floods and the gradual subsidence of the basin floor over "
    "many thousands of years which the patient observer may read as plainly as the "
    "pages of a printed chronicle of the earth"
).split()


def _variant(changes):
    words = list(_BASE_WORDS)
    for idx, replacement in changes:
        words[idx] = replacement
    return " ".join(words).capitalize() + "."


TIER_BASE = _variant([])
TIER_DIRECT = _variant([(10, "preserved")])
TIER_INDIRECT = _variant(
    [(3, "silt"), (10, "preserved"), (20, "slow"), (30, "careful"), (40, "written")]
)
TIER_SPECULATIVE = _variant(
    [
        (1, "gradual"),
        (3, "silt"),
        (10, "preserved"),
        (16, "yearly"),
        (20, "slow"),
        (30, "careful"),
        (40, "written"),
        (44, "story"),
    ]
)


class TestClassifyTier:
    @pytest.mark.parametrize(
        "score,tier",
        [
            (0.97, ConfidenceTier.DIRECT),
            (0.95, ConfidenceTier.DIRECT),
            (0.92, ConfidenceTier.INDIRECT),
            (0.90, ConfidenceTier.INDIRECT),
            (0.949, ConfidenceTier.INDIRECT),
            (0.85, ConfidenceTier.SPECULATIVE),
            (0.899, ConfidenceTier.SPECULATIVE),
            (1.0, ConfidenceTier.DIRECT),
        ],
    )
    def test_band_placement(self, score, tier):
        assert classify_tier(score) is tier

    @pytest.mark.parametrize("score", [0.8499, 0.0, -1.0, 0.5])
    def test_below_floor_is_none(self, score):
        assert classify_tier(score) is None

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            classify_tier(1.5)
        with pytest.raises(ValueError):
            classify_tier(-1.01)

    @given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    def test_monotone(self, a, b):
        lo, hi = min(a, b), max(a, b)
        rank = lambda t: 0.0 if t is None else t.value
        assert rank(classify_tier(lo)) <= rank(classify_tier(hi))

    @given(st.floats(0.85, 1.0))
    def test_partition_of_match_range(self, score):
        assert classify_tier(score) is not None

    def test_labels(self):
        assert ConfidenceTier.DIRECT.label == "Direct"
        assert ConfidenceTier.from_label("speculative") is ConfidenceTier.SPECULATIVE
        with pytest.raises(ValueError):
            ConfidenceTier.from_label("certain")


class TestMatchConfig:
    def test_floor_below_tier_floor_rejected(self):
        with pytest.raises(ConfigError):
            MatchConfig(floor=0.80)

    def test_floor_above_one_rejected(self):
        with pytest.raises(ConfigError):
            MatchConfig(floor=1.01)

    def test_bad_cap_rejected(self):
        with pytest.raises(ConfigError):
            MatchConfig(max_hits_per_sentence=0)


@pytest.fixture(scope="module")
def tier_setup(tmp_path_factory):
    rng = random.Random(101)
    docs = [
        (meta("direct_src", 1840, {"geology"}), TIER_DIRECT + " " + synthetic_text(rng)),
        (meta("indirect_src", 1855, {"natural_history"}), TIER_INDIRECT + " " + synthetic_text(rng)),
        (meta("spec_src", 1862, {"general"}), TIER_SPECULATIVE + " " + synthetic_text(rng)),
        (meta("noise_a", 1830), synthetic_text(rng)),
        (meta("noise_b", 1870), synthetic_text(rng)),
    ]
    store = build_store(tmp_path_factory.mktemp("tier") / "corpus", docs)
    index, provider = hash_index_for(store)
    focus = focus_document("focus_book", TIER_BASE + " " + synthetic_text(rng, sentences=2))
    return store, index, provider, focus


class TestQueryBook:
    def test_one_record_per_band(self, tier_setup):
        store, index, provider, focus = tier_setup
        result = query_book(focus, index, store, provider)
        by_book = {r.corpus_doc_id: r for r in result.records}
        assert by_book["direct_src"].tier is ConfidenceTier.DIRECT
        assert by_book["indirect_src"].tier is ConfidenceTier.INDIRECT
        assert by_book["spec_src"].tier is ConfidenceTier.SPECULATIVE
        assert len(result.records) == 3

    def test_record_fields_and_invariants(self, tier_setup):
        store, index, provider, focus = tier_setup
        result = query_book(focus, index, store, provider)
        assert result.focus_doc_id == "focus_book"
        for record in result.records:
            assert record.score >= 0.85
            assert classify_tier(record.score) is record.tier
            assert record.query_doc_id == "focus_book"
            assert record.query_doc_id != record.corpus_doc_id
        direct = next(r for r in result.records if r.corpus_doc_id == "direct_src")
        assert direct.corpus_pub_year == 1840
        assert direct.corpus_disciplines == ("geology",)
        assert direct.corpus_sentence_id == "direct_src:0"

    def test_ordering_by_ordinal_then_score(self, tier_setup):
        store, index, provider, focus = tier_setup
        result = query_book(focus, index, store, provider)
        keys = [
            (int(r.query_sentence_id.rpartition(":")[2]), -r.score, r.corpus_sentence_id)
            for r in result.records
        ]
        assert keys == sorted(keys)
        assert [r.corpus_doc_id for r in result.records] == [
            "direct_src", "indirect_src", "spec_src",
        ]

    def test_requery_is_deterministic(self, tier_setup):
        store, index, provider, focus = tier_setup
        first = query_book(focus, index, store, provider)
        second = query_book(focus, index, store, provider)
        assert first.records == second.records

    def test_parallel_workers_equal_serial(self, tier_setup):
        store, index, provider, focus = tier_setup
        serial = query_book(focus, index, store, provider, MatchConfig(workers=1))
        threaded = query_book(focus, index, store, provider, MatchConfig(workers=4))
        assert serial.records == threaded.records

    def test_raising_floor_never_adds_records(self, tier_setup):
        store, index, provider, focus = tier_setup
        pairs = lambda ms: {(r.query_sentence_id, r.corpus_sentence_id) for r in ms.records}
        low = query_book(focus, index, store, provider, MatchConfig(floor=0.85))
        mid = query_book(focus, index, store, provider, MatchConfig(floor=0.90))
        high = query_book(focus, index, store, provider, MatchConfig(floor=0.95))
        assert pairs(high) <= pairs(mid) <= pairs(low)
        assert len(low) == 3 and len(mid) == 2 and len(high) == 1

    def test_wrong_model_refused(self, tier_setup):
        store, index, provider, focus = tier_setup
        vectors_index = build_index(
            [v for v in _raw_vectors(store, provider)],
            manifest={"model": "someone-elses-model", "corpus_hash": store.corpus_hash()},
        )
        with pytest.raises(ManifestMismatch):
            query_book(focus, vectors_index, store, provider)

    def test_wrong_corpus_refused(self, tier_setup):
        store, index, provider, focus = tier_setup
        vectors_index = build_index(
            [v for v in _raw_vectors(store, provider)],
            manifest={"model": provider.model_id, "corpus_hash": "0000"},
        )
        with pytest.raises(ManifestMismatch):
            query_book(focus, vectors_index, store, provider)

    def test_empty_focus_book(self, tmp_path):
        rng = random.Random(5)
        store = build_store(
            tmp_path / "corpus",
            [(meta("long_doc"), synthetic_text(rng, words_per_sentence=10))],
            filters=FilterConfig(min_doc_chars=1, min_sentence_words=8),
        )
        index, provider = hash_index_for(store)
        focus = focus_document("tiny", "Too short. Very small. Barely anything here.")
        with pytest.raises(EmptyFocusBook):
            query_book(focus, index, store, provider)


def _raw_vectors(store, provider):
    from lineage.embedding import EmbeddingProviderConfig, embed_batch

    return embed_batch(
        store.sentences(),
        EmbeddingProviderConfig(dimension=provider.dimension),
        provider,
    )


@pytest.fixture(scope="module")
def setup(tmp_path_factory):
    rng = random.Random(33)
    docs = [
        (meta("self_book", 1845), synthetic_text(rng, sentences=4)),
        (meta("other", 1850), synthetic_text(rng, sentences=4)),
    ]
    store = build_store(tmp_path_factory.mktemp("self") / "corpus", docs)
    index, provider = hash_index_for(store)
    return store, index, provider


class TestSameDocExclusion:
    def test_self_matches_excluded_by_default(self, setup):
        store, index, provider = setup
        result = query_book(store.get("self_book"), index, store, provider)
        assert result.records == []

    def test_self_matches_kept_when_disabled(self, setup):
        store, index, provider = setup
        result = query_book(
            store.get("self_book"), index, store, provider,
            MatchConfig(exclude_same_doc=False),
        )
        assert len(result.records) == 4
        for record in result.records:
            assert record.corpus_doc_id == "self_book"
            assert record.tier is ConfidenceTier.DIRECT
            assert record.score > 1.0 - 1e-5


class TestPlantedQuotations:
    def test_exactly_the_planted_pairs_come_back(self, tmp_path):
        rng = random.Random(77)
        focus_sentences = [synthetic_sentence(rng, 14) for _ in range(12)]
        docs = []
        for b, lo in enumerate(range(0, 12, 4)):
            own = [synthetic_sentence(rng, 14) for _ in range(3)]
            mixed = own[:1] + focus_sentences[lo : lo + 4] + own[1:]
            docs.append((meta(f"quoting_{b}", 1820 + b), " ".join(mixed)))
        for d in range(30):
            docs.append((meta(f"distractor_{d}", 1800 + d), synthetic_text(rng, sentences=6)))
        store = build_store(tmp_path / "corpus", docs)
        index, provider = hash_index_for(store)
        focus = focus_document("focus", " ".join(focus_sentences))

        result = query_book(focus, index, store, provider)
        assert len(result.records) == 12
        expected_pairs = set()
        for i in range(12):
            book = f"quoting_{i // 4}"
            slot = 1 + (i % 4)  # planted after one leading distractor sentence
            expected_pairs.add((f"focus:{i}", f"{book}:{slot}"))
        got_pairs = {(r.query_sentence_id, r.corpus_sentence_id) for r in result.records}
        assert got_pairs == expected_pairs
        assert all(r.tier is ConfidenceTier.DIRECT for r in result.records)
        assert all(r.score > 1.0 - 1e-5 for r in result.records)


class TestTruncation:
    def test_cap_with_reported_overflow(self, tmp_path):
        rng = random.Random(55)
        boilerplate = synthetic_sentence(rng, 15)
        docs = [
            (meta(f"b{i}", 1810 + i), boilerplate + " " + synthetic_sentence(rng, 12))
            for i in range(5)
        ]
        store = build_store(tmp_path / "corpus", docs)
        index, provider = hash_index_for(store)
        focus = focus_document("focus", boilerplate + " " + synthetic_sentence(rng, 12))
        result = query_book(
            focus, index, store, provider, MatchConfig(max_hits_per_sentence=2)
        )
        capped = [r for r in result.records if r.query_sentence_id == "focus:0"]
        assert [r.corpus_sentence_id for r in capped] == ["b0:0", "b1:0"]
        assert result.truncated == {"focus:0": 5}


def _record(qsid, csid, score=0.96, book=None, year=1840, disciplines=()):
    book = book or csid.split(":")[0]
    return MatchRecord(
        query_sentence_id=qsid,
        corpus_sentence_id=csid,
        score=score,
        tier=classify_tier(score),
        query_doc_id="focus",
        corpus_doc_id=book,
        corpus_pub_year=year,
        corpus_disciplines=tuple(disciplines),
    )


class TestInfluencedBooks:
    def make_set(self):
        records = []
        records += [_record(f"focus:{i}", f"six:{i}") for i in range(6)]
        records += [_record(f"focus:{i}", f"five:{i}") for i in range(5)]
        # seven records but only five distinct corpus sentences
        records += [_record(f"focus:{i}", f"dupes:{i}") for i in range(5)]
        records += [_record("focus:7", "dupes:0"), _record("focus:8", "dupes:1")]
        return MatchSet("focus", MatchConfig(), records)

    def test_default_threshold(self):
        assert influenced_books(self.make_set()) == {"six"}

    def test_distinct_sentences_not_record_count(self):
        match_set = self.make_set()
        assert match_set.book_counts["dupes"] == 7
        assert "dupes" not in influenced_books(match_set)

    def test_lower_threshold(self):
        assert influenced_books(self.make_set(), 5) == {"six", "five", "dupes"}

    def test_empty(self):
        assert influenced_books(MatchSet("focus", MatchConfig())) == set()

    def test_book_counts_aggregate_records(self):
        match_set = self.make_set()
        assert sum(match_set.book_counts.values()) == len(match_set.records)
        assert match_set.book_counts == {"six": 6, "five": 5, "dupes": 7}


class TestTierFilter:
    def test_cumulative_subsets(self):
        records = [
            _record("focus:0", "a:0", 0.99),
            _record("focus:1", "b:0", 0.93),
            _record("focus:2", "c:0", 0.86),
        ]
        match_set = MatchSet("focus", MatchConfig(), records)
        direct = match_set.for_tier(ConfidenceTier.DIRECT)
        indirect = match_set.for_tier(ConfidenceTier.INDIRECT)
        speculative = match_set.for_tier(ConfidenceTier.SPECULATIVE)
        assert set(r.corpus_doc_id for r in direct) == {"a"}
        assert set(r.corpus_doc_id for r in indirect) == {"a", "b"}
        assert len(speculative) == 3


class TestExports:
    def test_jsonl_round_trip(self, tier_setup, tmp_path):
        store, index, provider, focus = tier_setup
        match_set = query_book(focus, index, store, provider)
        path = tmp_path / "matches.jsonl"
        export_match_set(match_set, path)
        loaded = load_match_set(path)
        assert loaded.focus_doc_id == match_set.focus_doc_id
        assert loaded.records == match_set.records
        assert loaded.config == MatchConfig()
        assert loaded.truncated == match_set.truncated

    def test_jsonl_header_manifest(self, tier_setup, tmp_path):
        store, index, provider, focus = tier_setup
        match_set = query_book(focus, index, store, provider)
        path = tmp_path / "matches.jsonl"
        export_match_set(match_set, path)
        header = json.loads(path.read_text().splitlines()[0])
        assert header["type"] == "match_set"
        assert header["focus_doc_id"] == "focus_book"
        assert header["record_count"] == 3
        assert header["book_counts"] == {"direct_src": 1, "indirect_src": 1, "spec_src": 1}
        assert header["config"]["floor"] == 0.85

    def test_csv_layout(self, tier_setup, tmp_path):
        store, index, provider, focus = tier_setup
        match_set = query_book(focus, index, store, provider)
        path = tmp_path / "matches.csv"
        export_match_set(match_set, path, format="csv")
        lines = path.read_text().splitlines()
        manifest = json.loads(lines[0].removeprefix("# "))
        assert manifest["type"] == "match_set"
        columns = lines[1].split(",")
        assert columns[:4] == [
            "query_sentence_id", "corpus_sentence_id", "score", "tier",
        ]
        assert columns[-2:] == ["structural_f1", "combined_score"]
        assert len(lines) == 2 + 3
        assert lines[2].endswith("geology,,")  # ensemble columns empty until scored

    def test_unknown_format(self, tier_setup, tmp_path):
        store, index, provider, focus = tier_setup
        match_set = query_book(focus, index, store, provider)
        with pytest.raises(UnsupportedFormat):
            export_match_set(match_set, tmp_path / "m.xml", format="xml")

    def test_truncation_survives_round_trip(self, tmp_path):
        match_set = MatchSet(
            "focus", MatchConfig(max_hits_per_sentence=2),
            [_record("focus:0", "b0:0"), _record("focus:0", "b1:0")],
        )
        match_set.truncated = {"focus:0": 5}
        path = tmp_path / "m.jsonl"
        export_match_set(match_set, path)
        assert load_match_set(path).truncated == {"focus:0": 5}
