"""Reference implementations used as test oracles. Deliberately naive."""

import itertools
from collections import Counter

import numpy as np


def naive_scan(ids, matrix, query, k=None, threshold=None):
    """All-pairs cosine scan in float64; sort by (-score, id); slice to k."""
    scores = np.asarray(matrix, dtype=np.float64) @ np.asarray(query, dtype=np.float64)
    pool = enumerate(scores.tolist())
    if threshold is not None:
        pool = ((i, s) for i, s in pool if s >= threshold)
    order = sorted((-s, ids[i]) for i, s in pool)
    if k is not None:
        order = order[:k]
    return [(sid, -neg) for neg, sid in order]


def random_unit_rows(rng, n, d):
    matrix = rng.standard_normal((n, d)).astype(np.float32)
    matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix


def _typed_triples(graph):
    """Tag triples by kind so a relation can never match an attribute."""
    triples = [("inst", s, c) for (s, _, c) in graph.instance_triples]
    triples += [("rel", s, r, t) for (s, r, t) in graph.relation_triples]
    triples += [("attr", s, r, v) for (s, r, v) in graph.attribute_triples]
    return triples


def _mapped_count(triples_a, counter_b, mapping):
    mapped = Counter()
    for triple in triples_a:
        if triple[0] == "rel":
            key = ("rel", mapping.get(triple[1]), triple[2], mapping.get(triple[3]))
        else:
            key = (triple[0], mapping.get(triple[1]), *triple[2:])
        mapped[key] += 1
    return sum((mapped & counter_b).values())


def exhaustive_smatch(g1, g2):
    """Best triple-match F1 over ALL injective variable mappings, by brute force.

    Only usable on small graphs (cost is a falling factorial in the variable
    counts).  Returns (matched, precision, recall, f1).
    """
    v1, v2 = sorted(g1.variables), sorted(g2.variables)
    t1, t2 = _typed_triples(g1), _typed_triples(g2)
    counter2 = Counter(t2)
    best = 0
    # An unmapped variable never scores, so only maximal injective mappings
    # (image size min(|v1|, |v2|)) need enumerating.
    if len(v1) <= len(v2):
        for image in itertools.permutations(v2, len(v1)):
            best = max(best, _mapped_count(t1, counter2, dict(zip(v1, image))))
    else:
        for sources in itertools.permutations(v1, len(v2)):
            best = max(best, _mapped_count(t1, counter2, dict(zip(sources, v2))))
    precision = best / len(t1) if t1 else 0.0
    recall = best / len(t2) if t2 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return best, precision, recall, f1
