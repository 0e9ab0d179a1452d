"""Graph parsing, alignment scoring, and ensemble combination."""

import json
import random
from collections import Counter

import pytest

from lineage.amr import (
    AmrGraph,
    EnsembleScore,
    SmatchScore,
    ensemble,
    ensemble_match_set,
    load_graph_sidecar,
    parse_graph,
    serialize_graph,
    smatch,
)
from lineage.errors import (
    DanglingReference,
    DuplicateVariable,
    GraphSyntaxError,
    InvalidWeights,
    UnsupportedFormat,
)
from lineage.matching import MatchConfig, MatchRecord, MatchSet, classify_tier

from graph_factory import add_attribute, random_graph
from oracles import exhaustive_smatch

CANONICAL = "(w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))"


def triple_multisets(graph):
    return (
        Counter(graph.instance_triples),
        Counter(graph.relation_triples),
        Counter(graph.attribute_triples),
    )


class TestParser:
    def test_canonical_example(self):
        graph = parse_graph(CANONICAL)
        assert graph.variables == {"w", "b", "g"}
        assert graph.root == "w"
        assert set(graph.instance_triples) == {
            ("w", "instance", "want-01"),
            ("b", "instance", "boy"),
            ("g", "instance", "go-02"),
        }
        assert set(graph.relation_triples) == {
            ("w", "ARG0", "b"),
            ("w", "ARG1", "g"),
            ("g", "ARG0", "b"),
        }
        assert len(graph.relation_triples) == 3
        assert graph.attribute_triples == ()

    def test_minimal_graph(self):
        graph = parse_graph("(a / alpha)")
        assert graph.variables == {"a"}
        assert graph.instance_triples == (("a", "instance", "alpha"),)
        assert graph.relation_triples == ()
        assert graph.root == "a"

    def test_duplicate_variable_rejected(self):
        with pytest.raises(DuplicateVariable):
            parse_graph("(a / alpha :mod (a / beta))")

    def test_dangling_reference_rejected(self):
        with pytest.raises(DanglingReference):
            parse_graph("(a / alpha :ARG0 b)")

    def test_forward_reference_resolves(self):
        graph = parse_graph("(a / alpha :ARG0 b :ARG1 (b / beta))")
        assert set(graph.relation_triples) == {("a", "ARG0", "b"), ("a", "ARG1", "b")}
        assert graph.attribute_triples == ()

    def test_self_loop_allowed(self):
        graph = parse_graph("(a / alpha :r a)")
        assert graph.relation_triples == (("a", "r", "a"),)

    def test_constant_kinds(self):
        graph = parse_graph(
            '(d / die-01 :polarity - :quant 3 :year 1859 :name "Ovid" :ratio 0.5)'
        )
        assert set(graph.attribute_triples) == {
            ("d", "polarity", "-"),
            ("d", "quant", "3"),
            ("d", "year", "1859"),
            ("d", "name", "Ovid"),
            ("d", "ratio", "0.5"),
        }
        assert graph.relation_triples == ()

    def test_string_escapes(self):
        graph = parse_graph(r'(a / alpha :label "say \"hi\"")')
        assert graph.attribute_triples == (("a", "label", 'say "hi"'),)

    def test_whitespace_insensitive(self):
        padded = "(w / want-01\n  :ARG0 (b / boy)\n  :ARG1 (g / go-02 :ARG0 b))"
        assert triple_multisets(parse_graph(padded)) == triple_multisets(
            parse_graph(CANONICAL)
        )

    @pytest.mark.parametrize(
        "text,position",
        [
            ("", 0),
            ("a / b", 0),
            ("(a / )", 5),
            ("(a b c)", 3),
            ("(a / alpha", 10),
            ("(a / alpha))", 11),
            ("(a / alpha :mod)", 15),
            ('(a / alpha :x "oops)', 14),
            ("(a / alpha : b)", 11),
        ],
    )
    def test_syntax_error_positions(self, text, position):
        with pytest.raises(GraphSyntaxError) as exc_info:
            parse_graph(text)
        assert exc_info.value.position == position

    def test_validate_rejects_bad_root(self):
        graph = AmrGraph(
            root="zz",
            variables=frozenset({"a"}),
            instance_triples=(("a", "instance", "alpha"),),
            relation_triples=(),
            attribute_triples=(),
        )
        with pytest.raises(ValueError):
            graph.validate()

    def test_validate_rejects_missing_instance(self):
        graph = AmrGraph(
            root="a",
            variables=frozenset({"a", "b"}),
            instance_triples=(("a", "instance", "alpha"),),
            relation_triples=(("a", "r", "b"),),
            attribute_triples=(),
        )
        with pytest.raises(ValueError):
            graph.validate()

    def test_validate_rejects_unreachable_variable(self):
        graph = AmrGraph(
            root="a",
            variables=frozenset({"a", "b"}),
            instance_triples=(("a", "instance", "alpha"), ("b", "instance", "beta")),
            relation_triples=(),
            attribute_triples=(),
        )
        with pytest.raises(ValueError):
            graph.validate()


class TestSerializer:
    def test_canonical_round_trips_verbatim(self):
        assert serialize_graph(parse_graph(CANONICAL)) == CANONICAL

    def test_round_trip_preserves_triples_on_random_graphs(self):
        rng = random.Random(7)
        for _ in range(50):
            graph = random_graph(rng, max_vars=7)
            back = parse_graph(serialize_graph(graph))
            assert back.root == graph.root
            assert back.variables == graph.variables
            assert triple_multisets(back) == triple_multisets(graph)

    def test_constant_kind_survives_round_trip(self):
        # "b" is both a variable and a string constant; the quoting must keep
        # the attribute from turning into a relation on re-parse.
        graph = parse_graph('(a / alpha :ref (b / beta) :tag "b" :num "3")')
        back = parse_graph(serialize_graph(graph))
        assert set(back.attribute_triples) == {("a", "tag", "b"), ("a", "num", "3")}
        assert set(back.relation_triples) == {("a", "ref", "b")}

    def test_serialize_requires_valid_graph(self):
        graph = AmrGraph(
            root="a",
            variables=frozenset({"a", "b"}),
            instance_triples=(("a", "instance", "alpha"), ("b", "instance", "beta")),
            relation_triples=(),
            attribute_triples=(),
        )
        with pytest.raises(ValueError):
            serialize_graph(graph)


class TestSmatch:
    def test_identity_on_canonical(self):
        graph = parse_graph(CANONICAL)
        score = smatch(graph, graph)
        assert score.precision == score.recall == score.f1 == 1.0
        assert score.matched_triples == graph.triple_count == 6
        assert score.alignment == {"w": "w", "b": "b", "g": "g"}

    def test_identity_on_random_graphs(self):
        rng = random.Random(11)
        for i in range(25):
            graph = random_graph(rng, max_vars=7)
            score = smatch(graph, graph, seed=i)
            assert score.f1 == 1.0
            assert score.matched_triples == graph.triple_count

    def test_disjoint_label_sets_score_zero(self):
        g1 = parse_graph("(a / cat :on (b / mat))")
        g2 = parse_graph("(p / dog :in (q / house))")
        score = smatch(g1, g2)
        assert score.f1 == 0.0
        assert score.matched_triples == 0
        assert score.alignment == {}

    def test_hand_computed_partial_overlap(self):
        g1 = parse_graph("(a / cat :on (b / mat))")
        g2 = parse_graph("(x / cat :on (y / mat) :mod (z / red))")
        score = smatch(g1, g2)
        assert score.matched_triples == 3
        assert score.precision == 1.0
        assert score.recall == pytest.approx(0.6)
        assert score.f1 == pytest.approx(0.75)
        assert score.alignment == {"a": "x", "b": "y"}

    def test_duplicate_triples_count_as_multiset(self):
        g1 = parse_graph("(a / x :r (b / y) :r b)")
        g2 = parse_graph("(p / x :r (q / y))")
        score = smatch(g1, g2)
        assert score.matched_triples == 3  # the doubled edge matches only once
        assert score.precision == pytest.approx(0.75)
        assert score.recall == 1.0
        assert score.f1 == pytest.approx(6 / 7)

    def test_more_variables_than_targets(self):
        g1 = parse_graph("(a / cat :r (b / cat) :s (c / cat))")
        g2 = parse_graph("(z / cat)")
        score = smatch(g1, g2)
        assert score.matched_triples == 1
        assert score.recall == 1.0
        assert score.f1 == pytest.approx(1 / 3)
        assert len(score.alignment) == 1

    def test_precision_recall_swap_on_reversal(self):
        g1 = parse_graph("(a / cat :on (b / mat))")
        g2 = parse_graph("(x / cat :on (y / mat) :mod (z / red))")
        forward = smatch(g1, g2)
        backward = smatch(g2, g1)
        assert forward.precision == pytest.approx(backward.recall)
        assert forward.recall == pytest.approx(backward.precision)
        assert forward.f1 == pytest.approx(backward.f1, abs=1e-9)

    def test_matches_exhaustive_oracle(self):
        rng = random.Random(23)
        equal = 0
        pairs = 50
        for i in range(pairs):
            g1 = random_graph(rng, max_vars=6, prefix="v")
            g2 = random_graph(rng, max_vars=6, prefix="w")
            climbed = smatch(g1, g2, seed=i)
            oracle_matched, _, _, oracle_f1 = exhaustive_smatch(g1, g2)
            assert climbed.matched_triples <= oracle_matched
            assert climbed.f1 <= oracle_f1 + 1e-12
            if climbed.matched_triples == oracle_matched:
                equal += 1
        assert equal >= 0.95 * pairs

    def test_symmetry_on_random_pairs(self):
        rng = random.Random(31)
        for i in range(20):
            g1 = random_graph(rng, max_vars=6, prefix="v")
            g2 = random_graph(rng, max_vars=6, prefix="w")
            forward = smatch(g1, g2, seed=i)
            backward = smatch(g2, g1, seed=i)
            assert forward.f1 == pytest.approx(backward.f1, abs=1e-9)
            assert forward.matched_triples == backward.matched_triples

    def test_extra_shared_triple_never_decreases_matched(self):
        rng = random.Random(43)
        for i in range(20):
            g1 = random_graph(rng, max_vars=5, prefix="v")
            g2 = random_graph(rng, max_vars=5, prefix="w")
            before = smatch(g1, g2, seed=i).matched_triples
            oracle_before, *_ = exhaustive_smatch(g1, g2)
            g1_plus = add_attribute(g1, g1.root, "tag", "shared")
            g2_plus = add_attribute(g2, g2.root, "tag", "shared")
            after = smatch(g1_plus, g2_plus, seed=i).matched_triples
            oracle_after, *_ = exhaustive_smatch(g1_plus, g2_plus)
            assert after >= before
            assert oracle_after >= oracle_before

    def test_matched_bounded_by_smaller_triple_set(self):
        rng = random.Random(53)
        for i in range(20):
            g1 = random_graph(rng, max_vars=6, prefix="v")
            g2 = random_graph(rng, max_vars=6, prefix="w")
            score = smatch(g1, g2, seed=i)
            assert score.matched_triples <= min(g1.triple_count, g2.triple_count)
            assert 0.0 <= score.precision <= 1.0
            assert 0.0 <= score.recall <= 1.0

    def test_deterministic_for_a_seed(self):
        rng = random.Random(61)
        g1 = random_graph(rng, max_vars=6, prefix="v")
        g2 = random_graph(rng, max_vars=6, prefix="w")
        first = smatch(g1, g2, seed=9)
        second = smatch(g1, g2, seed=9)
        assert first == second

    def test_zero_restarts_still_scores_identity(self):
        graph = parse_graph(CANONICAL)
        assert smatch(graph, graph, restarts=0).f1 == 1.0


class TestEnsemble:
    def test_weighted_mean(self):
        structural = SmatchScore(0.5, 0.5, 0.5, 3, {})
        score = ensemble(0.9, structural, weights=(0.5, 0.5))
        assert score.combined == pytest.approx(0.7)
        assert score.structural_f1 == 0.5
        assert score.cosine == 0.9

    def test_absent_structural_degrades_to_cosine(self):
        score = ensemble(0.91)
        assert score.combined == 0.91
        assert score.structural_f1 is None
        assert score.weights == (0.5, 0.5)

    def test_full_semantic_weight_ignores_f1(self):
        score = ensemble(0.88, 0.1, weights=(1.0, 0.0))
        assert score.combined == pytest.approx(0.88)

    def test_float_structural_accepted(self):
        assert ensemble(0.8, 0.6).combined == pytest.approx(0.7)

    @pytest.mark.parametrize(
        "weights",
        [(0.6, 0.6), (-0.1, 1.1), (0.5,), (0.3, 0.3, 0.4), ("a", "b"), (float("nan"), 1.0)],
    )
    def test_invalid_weights_rejected(self, weights):
        with pytest.raises(InvalidWeights):
            ensemble(0.9, 0.5, weights=weights)

    def test_result_is_a_value_object(self):
        assert ensemble(0.9, 0.5) == EnsembleScore(0.9, 0.5, 0.7, (0.5, 0.5))


def claim_graph(tag, full=True):
    if full:
        return f"({tag}s / claim :arg0 ({tag}x / species) :arg1 ({tag}y / change))"
    return f"({tag}s / claim :arg0 ({tag}x / species))"


@pytest.fixture()
def enrichment_setup():
    records = [
        MatchRecord(
            query_sentence_id=f"focus:{i}",
            corpus_sentence_id=f"echo:{i}",
            score=0.96,
            tier=classify_tier(0.96),
            query_doc_id="focus",
            corpus_doc_id="echo",
            corpus_pub_year=1880,
        )
        for i in range(6)
    ]
    records.append(
        MatchRecord(
            query_sentence_id="focus:0",
            corpus_sentence_id="minor:0",
            score=0.90,
            tier=classify_tier(0.90),
            query_doc_id="focus",
            corpus_doc_id="minor",
            corpus_pub_year=1875,
        )
    )
    match_set = MatchSet("focus", MatchConfig(), records)
    graphs = {}
    for i in range(6):
        graphs[f"focus:{i}"] = parse_graph(claim_graph(f"f{i}"))
        if i == 3:
            continue  # echo:3 has no sidecar graph on the corpus side
        graphs[f"echo:{i}"] = parse_graph(claim_graph(f"e{i}", full=i != 1))
    graphs["minor:0"] = parse_graph(claim_graph("m0"))
    return match_set, graphs


class TestEnsembleMatchSet:
    def test_survivor_records_gain_structural_scores(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        by_pair = {(r.query_sentence_id, r.corpus_sentence_id): r for r in enriched.records}
        for i in (0, 2, 4, 5):  # isomorphic graphs on both sides
            record = by_pair[(f"focus:{i}", f"echo:{i}")]
            assert record.structural_f1 == 1.0
            assert record.combined_score == pytest.approx(0.5 * 0.96 + 0.5)

    def test_partial_graph_scores_below_one(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        record = next(r for r in enriched.records if r.corpus_sentence_id == "echo:1")
        assert record.structural_f1 == pytest.approx(0.75)
        assert record.combined_score == pytest.approx(0.5 * 0.96 + 0.5 * 0.75)

    def test_missing_graph_falls_back_to_cosine(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        record = next(r for r in enriched.records if r.corpus_sentence_id == "echo:3")
        assert record.structural_f1 is None
        assert record.combined_score == pytest.approx(0.96)

    def test_non_survivors_pass_through_untouched(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        record = next(r for r in enriched.records if r.corpus_doc_id == "minor")
        assert record.structural_f1 is None
        assert record.combined_score is None

    def test_threshold_can_exclude_everything(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs, min_matching_sentences=7)
        assert all(r.combined_score is None for r in enriched.records)
        assert enriched.records == match_set.records

    def test_custom_weights(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs, weights=(0.7, 0.3))
        record = next(r for r in enriched.records if r.corpus_sentence_id == "echo:0")
        assert record.combined_score == pytest.approx(0.7 * 0.96 + 0.3)

    def test_record_order_does_not_change_scores(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        forward = ensemble_match_set(match_set, graphs)
        reversed_set = MatchSet(
            match_set.focus_doc_id, match_set.config, list(reversed(match_set.records))
        )
        backward = ensemble_match_set(reversed_set, graphs)
        key = lambda r: (r.query_sentence_id, r.corpus_sentence_id)
        assert sorted(forward.records, key=key) == sorted(backward.records, key=key)

    def test_enrichment_is_deterministic(self, enrichment_setup):
        match_set, graphs = enrichment_setup
        assert (
            ensemble_match_set(match_set, graphs).records
            == ensemble_match_set(match_set, graphs).records
        )

    def test_csv_export_carries_ensemble_columns(self, enrichment_setup, tmp_path):
        from lineage.matching import export_match_set

        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        path = tmp_path / "enriched.csv"
        export_match_set(enriched, path, format="csv")
        lines = path.read_text().splitlines()
        assert lines[1].split(",")[-2:] == ["structural_f1", "combined_score"]
        first_row = lines[2].split(",")
        assert first_row[-2:] == ["1.0", "0.98"]

    def test_jsonl_round_trip_keeps_scores(self, enrichment_setup, tmp_path):
        from lineage.matching import export_match_set, load_match_set

        match_set, graphs = enrichment_setup
        enriched = ensemble_match_set(match_set, graphs)
        path = tmp_path / "enriched.jsonl"
        export_match_set(enriched, path)
        assert load_match_set(path).records == enriched.records


class TestSidecar:
    def write_sidecar(self, path, rows):
        path.write_text("".join(json.dumps(row) + "\n" for row in rows))

    def test_round_trip(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        self.write_sidecar(
            path,
            [
                {"sentence_id": "bk:0", "graph": "(a / alpha)"},
                {"sentence_id": "bk:1", "graph": CANONICAL},
            ],
        )
        graphs = load_graph_sidecar(path)
        assert set(graphs) == {"bk:0", "bk:1"}
        assert graphs["bk:1"].variables == {"w", "b", "g"}

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        path.write_text('\n{"sentence_id": "bk:0", "graph": "(a / alpha)"}\n\n')
        assert set(load_graph_sidecar(path)) == {"bk:0"}

    def test_invalid_json_line_reports_position(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        path.write_text('{"sentence_id": "bk:0", "graph": "(a / alpha)"}\nnot json {\n')
        with pytest.raises(UnsupportedFormat, match=":2"):
            load_graph_sidecar(path)

    def test_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        self.write_sidecar(path, [{"sentence_id": "bk:0"}])
        with pytest.raises(UnsupportedFormat):
            load_graph_sidecar(path)

    def test_duplicate_sentence_id_rejected(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        self.write_sidecar(
            path,
            [
                {"sentence_id": "bk:0", "graph": "(a / alpha)"},
                {"sentence_id": "bk:0", "graph": "(b / beta)"},
            ],
        )
        with pytest.raises(UnsupportedFormat):
            load_graph_sidecar(path)

    def test_graph_errors_propagate(self, tmp_path):
        path = tmp_path / "graphs.jsonl"
        self.write_sidecar(
            path, [{"sentence_id": "bk:0", "graph": "(a / alpha :mod (a / beta))"}]
        )
        with pytest.raises(DuplicateVariable):
            load_graph_sidecar(path)
