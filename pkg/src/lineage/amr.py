"""Meaning-representation graphs: parsing, alignment scoring, ensembles.

Graphs arrive pre-serialized in the standard nested parenthesized notation,

    (w / want-01 :ARG0 (b / boy) :ARG1 (g / go-02 :ARG0 b))

one graph per sentence, shipped in a JSON-lines sidecar file keyed by
sentence_id (producing graphs from raw text needs a neural parser and is out
of scope). Structural similarity between two graphs is scored by aligning
their variables to maximize matched triples (hill-climbing with random
restarts), reported as precision/recall/F1. The structural arm runs only on
books that already cleared the semantic match gate -- scoring every corpus
pair would be prohibitively slow.

Notation rules enforced by the parser:

- a node is ``(var / concept :role value ...)``; the same variable may be
  defined (given a ``/ concept``) only once, but may be referenced from any
  number of roles, including before its definition appears in the text;
- a bare identifier in value position is always a variable reference; if no
  definition exists anywhere in the graph it is a dangling reference, not a
  constant;
- constants are quoted strings, numeric literals, or the polarity marks
  ``-`` / ``+``;
- role names are opaque labels (no inverse-role normalization): ``:arg0-of``
  is simply a different role than ``:arg0``.

When counting matched triples, instance, relation, and attribute triples are
distinct kinds: a relation never matches an attribute even if their labels
and endpoint spellings coincide.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import (
    DanglingReference,
    DuplicateVariable,
    GraphSyntaxError,
    InvalidWeights,
    UnsupportedFormat,
)
from .matching import MatchSet, influenced_books

INSTANCE = "instance"

Triple = tuple[str, str, str]


# -- graph type ---------------------------------------------------------------


@dataclass(frozen=True)
class AmrGraph:
    root: str
    variables: frozenset[str]
    instance_triples: tuple[Triple, ...]
    relation_triples: tuple[Triple, ...]
    attribute_triples: tuple[Triple, ...]

    @property
    def triple_count(self) -> int:
        return (
            len(self.instance_triples)
            + len(self.relation_triples)
            + len(self.attribute_triples)
        )

    def concepts(self) -> dict[str, str]:
        """Variable -> concept from the instance triples."""
        return {var: concept for var, _, concept in self.instance_triples}

    def validate(self) -> "AmrGraph":
        """Check the structural invariants; raise ValueError on violation."""
        instance_counts = Counter(var for var, _, _ in self.instance_triples)
        for var in self.variables:
            if instance_counts[var] != 1:
                raise ValueError(
                    f"variable {var!r} has {instance_counts[var]} instance triples"
                )
        if set(instance_counts) - self.variables:
            extra = sorted(set(instance_counts) - self.variables)
            raise ValueError(f"instance triples for unknown variables {extra}")
        if self.root not in self.variables:
            raise ValueError(f"root {self.root!r} is not a variable")
        adjacency: dict[str, list[str]] = {var: [] for var in self.variables}
        for source, _, target in self.relation_triples:
            if source not in self.variables or target not in self.variables:
                raise ValueError(f"relation endpoint missing: ({source}, {target})")
            adjacency[source].append(target)
        for source, _, _ in self.attribute_triples:
            if source not in self.variables:
                raise ValueError(f"attribute on unknown variable {source!r}")
        seen = {self.root}
        stack = [self.root]
        while stack:
            for target in adjacency[stack.pop()]:
                if target not in seen:
                    seen.add(target)
                    stack.append(target)
        if seen != self.variables:
            unreachable = sorted(self.variables - seen)
            raise ValueError(f"variables unreachable from root: {unreachable}")
        return self


# -- tokenizer ----------------------------------------------------------------


_TOKEN_RE = re.compile(
    r"""(?P<lparen>\()
      | (?P<rparen>\))
      | (?P<slash>/)
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<role>:[^\s()":/]+)
      | (?P<atom>[^\s()":/]+)
    """,
    re.VERBOSE,
)

_NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:\.\d+)?|\.\d+)")


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        found = _TOKEN_RE.match(text, pos)
        if found is None:
            if text[pos] == '"':
                raise GraphSyntaxError("unterminated string", pos)
            raise GraphSyntaxError(f"unrecognized character {text[pos]!r}", pos)
        tokens.append(_Token(found.lastgroup, found.group(), pos))
        pos = found.end()
    return tokens


# -- parser -------------------------------------------------------------------


class _Parser:
    """Recursive descent over the token list; collects triples as it goes."""

    def __init__(self, text: str, tokens: list[_Token]):
        self.text = text
        self.tokens = tokens
        self.pos = 0
        self.concepts: dict[str, str] = {}
        self.instances: list[Triple] = []
        # (source, role, raw value, value kind) pending reference resolution
        self.pending: list[tuple[str, str, str, str]] = []

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self, kind: str, what: str) -> _Token:
        token = self._peek()
        if token is None:
            raise GraphSyntaxError(f"expected {what}, found end of input", len(self.text))
        if token.kind != kind:
            raise GraphSyntaxError(
                f"expected {what}, found {token.value!r}", token.position
            )
        self.pos += 1
        return token

    def parse_node(self) -> str:
        self._next("lparen", "'('")
        var = self._next("atom", "a variable name").value
        self._next("slash", "'/'")
        concept = self._next("atom", "a concept").value
        if var in self.concepts:
            raise DuplicateVariable(f"variable {var!r} defined more than once")
        self.concepts[var] = concept
        self.instances.append((var, INSTANCE, concept))
        while True:
            token = self._peek()
            if token is None:
                raise GraphSyntaxError("expected ')', found end of input", len(self.text))
            if token.kind == "rparen":
                self.pos += 1
                return var
            if token.kind != "role":
                raise GraphSyntaxError(
                    f"expected a role or ')', found {token.value!r}", token.position
                )
            self.pos += 1
            role = token.value[1:]
            self._parse_value(var, role)

    def _parse_value(self, source: str, role: str) -> None:
        token = self._peek()
        if token is None:
            raise GraphSyntaxError(
                f"expected a value after :{role}, found end of input", len(self.text)
            )
        if token.kind == "lparen":
            child = self.parse_node()
            self.pending.append((source, role, child, "var"))
        elif token.kind == "string":
            self.pos += 1
            inner = re.sub(r"\\(.)", r"\1", token.value[1:-1])
            self.pending.append((source, role, inner, "const"))
        elif token.kind == "atom":
            self.pos += 1
            self.pending.append((source, role, token.value, "atom"))
        else:
            raise GraphSyntaxError(
                f"expected a value after :{role}, found {token.value!r}", token.position
            )


def parse_graph(text: str) -> AmrGraph:
    """Parse nested parenthesized graph notation into an AmrGraph.

    Two phases: build the node tree while recording definitions, then resolve
    bare identifiers (which may legally appear before the node that defines
    them) into relation triples.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise GraphSyntaxError("empty input", 0)
    parser = _Parser(text, tokens)
    root = parser.parse_node()
    trailing = parser._peek()
    if trailing is not None:
        raise GraphSyntaxError(
            f"unexpected trailing input {trailing.value!r}", trailing.position
        )
    relations: list[Triple] = []
    attributes: list[Triple] = []
    for source, role, value, kind in parser.pending:
        if kind == "var":
            relations.append((source, role, value))
        elif kind == "const":
            attributes.append((source, role, value))
        elif _NUMBER_RE.fullmatch(value) or value in ("-", "+"):
            attributes.append((source, role, value))
        elif value in parser.concepts:
            relations.append((source, role, value))
        else:
            raise DanglingReference(f"variable {value!r} referenced but never defined")
    return AmrGraph(
        root=root,
        variables=frozenset(parser.concepts),
        instance_triples=tuple(parser.instances),
        relation_triples=tuple(relations),
        attribute_triples=tuple(attributes),
    )


def serialize_graph(graph: AmrGraph) -> str:
    """Render a graph back to notation that parses to an isomorphic graph.

    Each variable's definition is emitted at its first visit walking relation
    triples from the root; later mentions become bare references.
    """
    graph.validate()
    concepts = graph.concepts()
    relations: dict[str, list[tuple[str, str]]] = {var: [] for var in graph.variables}
    attributes: dict[str, list[tuple[str, str]]] = {var: [] for var in graph.variables}
    for source, role, target in graph.relation_triples:
        relations[source].append((role, target))
    for source, role, value in graph.attribute_triples:
        attributes[source].append((role, value))
    emitted: set[str] = set()

    def emit(var: str) -> str:
        emitted.add(var)
        parts = [f"({var} / {concepts[var]}"]
        for role, target in relations[var]:
            if target in emitted:
                parts.append(f" :{role} {target}")
            else:
                parts.append(f" :{role} {emit(target)}")
        for role, value in attributes[var]:
            parts.append(f" :{role} {_emit_constant(value)}")
        parts.append(")")
        return "".join(parts)

    return emit(graph.root)


def _emit_constant(value: str) -> str:
    if value in ("-", "+") or _NUMBER_RE.fullmatch(value):
        return value
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


# -- alignment scoring --------------------------------------------------------


@dataclass(frozen=True)
class SmatchScore:
    precision: float
    recall: float
    f1: float
    matched_triples: int
    alignment: dict[str, str]


def _typed_triples(graph: AmrGraph) -> list[tuple]:
    """Kind-tagged triples so relation/attribute labels can never cross-match."""
    triples: list[tuple] = [("inst", s, c) for s, _, c in graph.instance_triples]
    triples += [("rel", s, r, t) for s, r, t in graph.relation_triples]
    triples += [("attr", s, r, v) for s, r, v in graph.attribute_triples]
    return triples


def _matched_count(triples, target_counter, mapping) -> int:
    mapped: Counter = Counter()
    for triple in triples:
        if triple[0] == "rel":
            key = ("rel", mapping.get(triple[1]), triple[2], mapping.get(triple[3]))
        else:
            key = (triple[0], mapping.get(triple[1]), *triple[2:])
        mapped[key] += 1
    return sum((mapped & target_counter).values())


def _smart_start(triples, target_counter, sources, targets):
    """Greedy initialization: assign each variable the best marginal target."""
    mapping: dict[str, str | None] = {}
    used: set[str] = set()
    for var in sources:
        best_target = None
        best_score = _matched_count(triples, target_counter, mapping)
        for candidate in targets:
            if candidate in used:
                continue
            mapping[var] = candidate
            score = _matched_count(triples, target_counter, mapping)
            if score > best_score:
                best_score, best_target = score, candidate
        mapping[var] = best_target
        if best_target is not None:
            used.add(best_target)
    return mapping


def _climb(triples, target_counter, sources, targets, start):
    """Best-improvement hill-climbing over reassign and swap moves."""
    current = dict(start)
    current_score = _matched_count(triples, target_counter, current)
    while True:
        used = {t for t in current.values() if t is not None}
        best_score, best_move = current_score, None
        for var in sources:
            old = current[var]
            for candidate in (*targets, None):
                if candidate == old or (candidate is not None and candidate in used):
                    continue
                current[var] = candidate
                score = _matched_count(triples, target_counter, current)
                if score > best_score:
                    best_score, best_move = score, {var: candidate}
            current[var] = old
        for i, var in enumerate(sources):
            for other in sources[i + 1 :]:
                if current[var] == current[other]:
                    continue
                current[var], current[other] = current[other], current[var]
                score = _matched_count(triples, target_counter, current)
                if score > best_score:
                    best_score = score
                    best_move = {var: current[var], other: current[other]}
                current[var], current[other] = current[other], current[var]
        if best_move is None:
            return current, current_score
        current.update(best_move)
        current_score = best_score


def smatch(g1: AmrGraph, g2: AmrGraph, restarts: int = 16, seed: int = 0) -> SmatchScore:
    """Score structural similarity by maximizing matched triples over variable
    alignments: `restarts` random initializations plus one greedy start, each
    refined by hill-climbing. Deterministic for a given seed.

    Precision is against g1's triples, recall against g2's.
    """
    g1.validate()
    g2.validate()
    sources = sorted(g1.variables)
    targets = sorted(g2.variables)
    triples = _typed_triples(g1)
    target_counter = Counter(_typed_triples(g2))
    rng = random.Random(seed)

    starts = [_smart_start(triples, target_counter, sources, targets)]
    pool = targets + [None] * max(0, len(sources) - len(targets))
    for _ in range(restarts):
        assignment = rng.sample(pool, len(sources))
        starts.append(dict(zip(sources, assignment)))

    best_mapping: dict[str, str | None] = {var: None for var in sources}
    best_score = -1
    for start in starts:
        mapping, score = _climb(triples, target_counter, sources, targets, start)
        if score > best_score:
            best_mapping, best_score = mapping, score

    matched = max(best_score, 0)
    total1 = len(triples)
    total2 = sum(target_counter.values())
    precision = matched / total1 if total1 else 0.0
    recall = matched / total2 if total2 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    alignment = {v: t for v, t in sorted(best_mapping.items()) if t is not None}
    return SmatchScore(precision, recall, f1, matched, alignment)


# -- ensemble -----------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleScore:
    cosine: float
    structural_f1: float | None
    combined: float
    weights: tuple[float, float]


def ensemble(
    cosine: float,
    structural: SmatchScore | float | None = None,
    weights: tuple[float, float] = (0.5, 0.5),
) -> EnsembleScore:
    """Weighted mean of the semantic and structural scores.

    With no structural score the combined score degrades to the cosine alone.
    """
    try:
        w_sem, w_struct = (float(w) for w in weights)
    except (TypeError, ValueError) as exc:
        raise InvalidWeights(f"weights must be two numbers, got {weights!r}") from exc
    if not (w_sem == w_sem and w_struct == w_struct):  # NaN check
        raise InvalidWeights(f"weights must be finite, got {weights!r}")
    if w_sem < 0 or w_struct < 0:
        raise InvalidWeights(f"weights must be non-negative, got {weights!r}")
    if abs(w_sem + w_struct - 1.0) > 1e-9:
        raise InvalidWeights(f"weights must sum to 1, got {weights!r}")
    cosine = float(cosine)
    if structural is None:
        return EnsembleScore(cosine, None, cosine, (w_sem, w_struct))
    f1 = structural.f1 if isinstance(structural, SmatchScore) else float(structural)
    return EnsembleScore(cosine, f1, w_sem * cosine + w_struct * f1, (w_sem, w_struct))


# -- sidecar + match-set enrichment -------------------------------------------


def load_graph_sidecar(path: Path | str) -> dict[str, AmrGraph]:
    """Read a JSON-lines file of {sentence_id, graph} rows into parsed graphs."""
    graphs: dict[str, AmrGraph] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise UnsupportedFormat(f"{path}:{lineno}: not valid JSON") from exc
            if not isinstance(row, dict) or "sentence_id" not in row or "graph" not in row:
                raise UnsupportedFormat(
                    f"{path}:{lineno}: expected a {{sentence_id, graph}} object"
                )
            sentence_id = str(row["sentence_id"])
            if sentence_id in graphs:
                raise UnsupportedFormat(
                    f"{path}:{lineno}: duplicate sentence_id {sentence_id!r}"
                )
            graphs[sentence_id] = parse_graph(row["graph"])
    return graphs


def _pair_seed(seed: int, query_id: str, corpus_id: str) -> int:
    digest = hashlib.blake2b(
        f"{seed}|{query_id}|{corpus_id}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def ensemble_match_set(
    match_set: MatchSet,
    graphs: dict[str, AmrGraph],
    weights: tuple[float, float] = (0.5, 0.5),
    restarts: int = 16,
    seed: int = 0,
    min_matching_sentences: int = 6,
) -> MatchSet:
    """Attach structural scores to the records of books that cleared the
    semantic gate (more than five distinct matched sentences); everything
    else is passed through untouched.

    Records whose sentence pair lacks a graph on either side fall back to the
    pure cosine as their combined score. Per-pair seeds are derived from
    (seed, sentence ids), so results do not depend on scoring order.
    """
    survivors = influenced_books(match_set, min_matching_sentences)
    enriched = []
    for record in match_set.records:
        if record.corpus_doc_id not in survivors:
            enriched.append(record)
            continue
        g_query = graphs.get(record.query_sentence_id)
        g_corpus = graphs.get(record.corpus_sentence_id)
        if g_query is None or g_corpus is None:
            score = ensemble(record.score, None, weights)
            enriched.append(replace(record, combined_score=score.combined))
        else:
            structural = smatch(
                g_query,
                g_corpus,
                restarts=restarts,
                seed=_pair_seed(seed, record.query_sentence_id, record.corpus_sentence_id),
            )
            score = ensemble(record.score, structural, weights)
            enriched.append(
                replace(
                    record,
                    structural_f1=score.structural_f1,
                    combined_score=score.combined,
                )
            )
    return MatchSet(
        match_set.focus_doc_id,
        match_set.config,
        enriched,
        truncated=dict(match_set.truncated),
    )
