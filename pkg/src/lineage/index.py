"""Cosine-similarity vector index: exact flat scan plus optional IVF.

Vectors are unit-norm float32, so cosine similarity is a dot product and a
flat search is one matrix-vector product over a row-major matrix. The IVF
mode clusters rows with seeded k-means and probes only the nearest lists,
trading recall for speed; probing every list degenerates to exact search.

Persistence is a single little-endian binary file:

    magic "LINIDX01" | u32 layout version | u8 mode + 3 pad | u32 d | u64 n
    | u32 manifest length + manifest JSON | u64 id-table length + id table
    (newline-joined sentence ids, aligned with matrix rows)
    | [ivf only: u32 n_lists | u32 n_probe | u64 seed | centroids f32
       | u64 offsets per list boundary]
    | zero padding to a 64-byte boundary | row-major float32 matrix
    | u32 CRC-32 of all preceding bytes

The matrix region is memory-mapped on load; the CRC is verified by streaming
the file once, so a truncated or bit-flipped file never yields a partial
index.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .embedding import EmbeddingVector
from .errors import (
    ChecksumMismatch,
    DimensionMismatch,
    EmptyInput,
    IndexIOError,
    InsufficientTrainingData,
    VersionMismatch,
)

MAGIC = b"LINIDX01"
LAYOUT_VERSION = 1
FLAT_EXACT = "flat_exact"
IVF_APPROX = "ivf_approx"
_MODE_CODES = {FLAT_EXACT: 0, IVF_APPROX: 1}
_MODE_NAMES = {code: name for name, code in _MODE_CODES.items()}
_ALIGN = 64
_KMEANS_ITERATIONS = 20


@dataclass(frozen=True)
class SearchHit:
    sentence_id: str
    score: float


@dataclass(frozen=True)
class IvfParams:
    n_lists: int = 64
    n_probe: int = 8
    seed: int = 0


def _as_query(query, dimension: int) -> np.ndarray:
    arr = np.asarray(query, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != dimension:
        raise DimensionMismatch(f"query shape {arr.shape}, index dimension {dimension}")
    return arr


def _cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dot products via einsum, never BLAS.

    BLAS gemv kernels round differently depending on row position (remainder
    blocks) and thread count, so identical rows can score differently and
    results can vary across machines' thread settings. einsum reduces every
    row in the same order, single-threaded. Scores are clamped to [-1, 1]:
    float32 self-products of unit rows can land a few ulp above 1.
    """
    scores = np.einsum("ij,j->i", matrix, query)
    return np.clip(scores, -1.0, 1.0)


def _centroid_assignments(matrix: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin ||x - c||^2 = argmin (||c||^2 - 2 x.c) for unit-norm x
    self_dots = np.einsum("ij,ij->i", centroids, centroids)
    cross = np.einsum("ij,kj->ik", matrix, centroids)
    return np.argmin(self_dots[None, :] - 2.0 * cross, axis=1)


def _kmeans(matrix: np.ndarray, n_lists: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ with a fixed iteration budget; fully deterministic."""
    rng = np.random.default_rng(seed)
    n = matrix.shape[0]
    chosen = [int(rng.integers(n))]
    nearest = np.full(n, np.inf)
    for _ in range(1, n_lists):
        diff = matrix - matrix[chosen[-1]]
        nearest = np.minimum(nearest, np.einsum("ij,ij->i", diff, diff))
        total = float(nearest.sum())
        if total <= 0.0:
            chosen.append(int(rng.integers(n)))
        else:
            chosen.append(int(rng.choice(n, p=nearest / total)))
    centroids = matrix[chosen].astype(np.float32).copy()
    for _ in range(_KMEANS_ITERATIONS):
        assign = _centroid_assignments(matrix, centroids)
        for j in range(n_lists):
            members = matrix[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids, _centroid_assignments(matrix, centroids)


class VectorIndex:
    """Immutable after build; queries are pure reads and freely concurrent."""

    def __init__(
        self,
        ids: list[str],
        matrix: np.ndarray,
        mode: str,
        manifest: dict,
        ivf_params: IvfParams | None = None,
        centroids: np.ndarray | None = None,
        offsets: np.ndarray | None = None,
    ):
        self._ids = ids
        self._matrix = matrix
        self.mode = mode
        self.manifest = manifest
        self.ivf_params = ivf_params
        self._centroids = centroids
        self._offsets = offsets

    @property
    def dimension(self) -> int:
        return int(self._matrix.shape[1])

    @property
    def count(self) -> int:
        return int(self._matrix.shape[0])

    @property
    def id_table(self) -> list[str]:
        return list(self._ids)

    def _hits_from_scores(
        self, scores: np.ndarray, rows: np.ndarray | None, k: int | None, threshold: float | None
    ) -> list[SearchHit]:
        ids = self._ids
        if rows is None:
            rows = np.arange(len(scores))
        if threshold is not None:
            keep = np.flatnonzero(scores >= threshold)
            candidates = rows[keep]
            cand_scores = scores[keep]
        elif k is not None and k < len(scores):
            part = np.argpartition(scores, len(scores) - k)[len(scores) - k :]
            boundary = scores[part].min()
            keep = np.flatnonzero(scores >= boundary)
            candidates = rows[keep]
            cand_scores = scores[keep]
        else:
            candidates = rows
            cand_scores = scores
        order = sorted(
            range(len(candidates)),
            key=lambda i: (-cand_scores[i], ids[candidates[i]]),
        )
        if k is not None:
            order = order[:k]
        return [SearchHit(ids[candidates[i]], float(cand_scores[i])) for i in order]

    def _probe_rows(self, query: np.ndarray, n_probe: int | None = None) -> np.ndarray:
        assert self._centroids is not None and self._offsets is not None
        probe = n_probe if n_probe is not None else self.ivf_params.n_probe
        probe = min(probe, len(self._centroids))
        self_dots = np.einsum("ij,ij->i", self._centroids, self._centroids)
        dists = self_dots - 2.0 * np.einsum("ij,j->i", self._centroids, query)
        lists = np.argsort(dists, kind="stable")[:probe]
        spans = [
            np.arange(self._offsets[j], self._offsets[j + 1]) for j in sorted(lists.tolist())
        ]
        return np.concatenate(spans) if spans else np.arange(0)

    def top_k(self, query, k: int) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be at least 1")
        q = _as_query(query, self.dimension)
        if self.mode == FLAT_EXACT:
            return self._hits_from_scores(_cosine_scores(self._matrix, q), None, k, None)
        rows = self._probe_rows(q)
        return self._hits_from_scores(_cosine_scores(self._matrix[rows], q), rows, k, None)

    def range_search(self, query, threshold: float) -> list[SearchHit]:
        if not -1.0 <= threshold <= 1.0:
            raise ValueError(f"threshold {threshold} outside [-1, 1]")
        q = _as_query(query, self.dimension)
        if self.mode == FLAT_EXACT:
            return self._hits_from_scores(_cosine_scores(self._matrix, q), None, None, threshold)
        rows = self._probe_rows(q)
        return self._hits_from_scores(_cosine_scores(self._matrix[rows], q), rows, None, threshold)

    def range_search_block(self, queries: np.ndarray, threshold: float) -> list[list[SearchHit]]:
        """Range search for a block of queries.

        Runs each query through the exact same matrix-vector product as
        range_search — never a matrix-matrix product, whose accumulation
        order (and therefore last-bit rounding) can depend on the BLAS
        thread count. Scores must not vary across thread counts.
        """
        queries = np.asarray(queries, dtype=np.float32)
        if queries.ndim != 2 or queries.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"query block shape {queries.shape}, index dimension {self.dimension}"
            )
        return [self.range_search(q, threshold) for q in queries]


def build_index_from_arrays(
    ids: Sequence[str],
    matrix: np.ndarray,
    mode: str = FLAT_EXACT,
    ivf_params: IvfParams | None = None,
    manifest: dict | None = None,
) -> VectorIndex:
    if mode not in _MODE_CODES:
        raise ValueError(f"unknown index mode {mode!r}")
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {matrix.shape}")
    n = matrix.shape[0]
    if n == 0:
        raise EmptyInput("cannot build an index over zero vectors")
    if len(ids) != n:
        raise DimensionMismatch(f"{len(ids)} ids for {n} rows")
    bad_rows = 0
    first_bad = -1
    for lo in range(0, n, 262144):  # chunked: the temp stays small at 1M+ rows
        norms = np.linalg.norm(matrix[lo : lo + 262144], axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-4)
        if len(bad):
            bad_rows += len(bad)
            if first_bad < 0:
                first_bad = lo + int(bad[0])
    if bad_rows:
        raise ValueError(f"{bad_rows} rows are not unit-norm (first: row {first_bad})")
    full_manifest = {"model": "", "corpus_hash": "", "built_at": _now_stamp()}
    full_manifest.update(manifest or {})
    ids = [str(i) for i in ids]
    if mode == FLAT_EXACT:
        return VectorIndex(ids, matrix, mode, full_manifest)
    params = ivf_params or IvfParams()
    if n < params.n_lists:
        raise InsufficientTrainingData(
            f"{n} vectors cannot train {params.n_lists} lists"
        )
    centroids, assign = _kmeans(matrix, params.n_lists, params.seed)
    order = np.argsort(assign, kind="stable")
    counts = np.bincount(assign, minlength=params.n_lists)
    offsets = np.zeros(params.n_lists + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return VectorIndex(
        [ids[i] for i in order],
        np.ascontiguousarray(matrix[order]),
        mode,
        full_manifest,
        params,
        centroids,
        offsets,
    )


def build_index(
    vectors: Sequence[EmbeddingVector],
    mode: str = FLAT_EXACT,
    ivf_params: IvfParams | None = None,
    manifest: dict | None = None,
) -> VectorIndex:
    if not vectors:
        raise EmptyInput("cannot build an index over zero vectors")
    widths = {v.values.shape[0] for v in vectors}
    if len(widths) != 1:
        raise DimensionMismatch(f"mixed vector dimensions: {sorted(widths)}")
    matrix = np.stack([v.values for v in vectors])
    return build_index_from_arrays(
        [v.sentence_id for v in vectors], matrix, mode, ivf_params, manifest
    )


def _now_stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class _CrcWriter:
    def __init__(self, handle: io.BufferedWriter):
        self._handle = handle
        self.crc = 0
        self.written = 0

    def write(self, data: bytes) -> None:
        self._handle.write(data)
        self.crc = zlib.crc32(data, self.crc)
        self.written += len(data)


def save_index(index: VectorIndex, path: Path | str) -> None:
    path = Path(path)
    if any("\n" in sid for sid in index._ids):
        raise IndexIOError("sentence ids must not contain newlines")
    manifest_blob = json.dumps(index.manifest, sort_keys=True).encode("utf-8")
    id_blob = "\n".join(index._ids).encode("utf-8")
    with open(path, "wb") as handle:
        out = _CrcWriter(handle)
        out.write(MAGIC)
        out.write(struct.pack("<IBxxxIQ", LAYOUT_VERSION, _MODE_CODES[index.mode],
                              index.dimension, index.count))
        out.write(struct.pack("<I", len(manifest_blob)))
        out.write(manifest_blob)
        out.write(struct.pack("<Q", len(id_blob)))
        out.write(id_blob)
        if index.mode == IVF_APPROX:
            params = index.ivf_params
            out.write(struct.pack("<IIQ", params.n_lists, params.n_probe, params.seed))
            out.write(np.ascontiguousarray(index._centroids, dtype=np.float32).tobytes())
            out.write(np.ascontiguousarray(index._offsets, dtype=np.int64).tobytes())
        pad = (-out.written) % _ALIGN
        out.write(b"\0" * pad)
        for lo in range(0, index.count, 65536):
            out.write(np.ascontiguousarray(index._matrix[lo : lo + 65536]).tobytes())
        handle.write(struct.pack("<I", out.crc))


def _read_exact(handle, size: int, what: str) -> bytes:
    data = handle.read(size)
    if len(data) != size:
        raise ChecksumMismatch(f"file ends inside {what}")
    return data


def load_index(path: Path | str) -> VectorIndex:
    path = Path(path)
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise IndexIOError(f"cannot open {path}: {exc}") from exc
    with handle:
        total = path.stat().st_size
        if total < len(MAGIC) + 4:
            raise ChecksumMismatch(f"{path} too short to be an index file")
        # Integrity gate before anything else: no field in the file — not
        # even the magic — is trusted until the trailing CRC-32 over every
        # preceding byte checks out, so arbitrary corruption has exactly one
        # failure mode.
        crc = 0
        remaining = total - 4
        while remaining:
            chunk = handle.read(min(1 << 20, remaining))
            crc = zlib.crc32(chunk, crc)
            remaining -= len(chunk)
        (stored_crc,) = struct.unpack("<I", handle.read(4))
        if crc != stored_crc:
            raise ChecksumMismatch(
                f"checksum {crc:#010x} does not match stored {stored_crc:#010x}"
            )
        handle.seek(0)
        if _read_exact(handle, len(MAGIC), "magic") != MAGIC:
            raise IndexIOError(f"{path} is not an index file (bad magic)")
        version, mode_code, dimension, count = struct.unpack(
            "<IBxxxIQ", _read_exact(handle, 20, "header")
        )
        if version != LAYOUT_VERSION:
            raise VersionMismatch(version, LAYOUT_VERSION)
        if mode_code not in _MODE_NAMES:
            raise IndexIOError(f"unknown mode code {mode_code}")
        mode = _MODE_NAMES[mode_code]
        (manifest_len,) = struct.unpack("<I", _read_exact(handle, 4, "manifest length"))
        manifest = json.loads(_read_exact(handle, manifest_len, "manifest"))
        (id_len,) = struct.unpack("<Q", _read_exact(handle, 8, "id table length"))
        id_blob = _read_exact(handle, id_len, "id table")
        ids = id_blob.decode("utf-8").split("\n") if id_blob else [""]
        if len(ids) != count:
            raise ChecksumMismatch(f"id table has {len(ids)} entries, header says {count}")
        ivf_params = centroids = offsets = None
        if mode == IVF_APPROX:
            n_lists, n_probe, seed = struct.unpack(
                "<IIQ", _read_exact(handle, 16, "ivf header")
            )
            ivf_params = IvfParams(n_lists, n_probe, seed)
            centroids = np.frombuffer(
                _read_exact(handle, n_lists * dimension * 4, "centroids"), dtype="<f4"
            ).reshape(n_lists, dimension)
            offsets = np.frombuffer(
                _read_exact(handle, (n_lists + 1) * 8, "list offsets"), dtype="<i8"
            )
        matrix_offset = handle.tell() + ((-handle.tell()) % _ALIGN)
        expected = matrix_offset + count * dimension * 4 + 4
        if total != expected:
            raise ChecksumMismatch(
                f"{path} is {total} bytes, layout requires {expected}"
            )
    matrix = np.memmap(path, dtype="<f4", mode="r", offset=matrix_offset,
                       shape=(count, dimension))
    for lo in range(0, count, 262144):
        norms = np.linalg.norm(np.asarray(matrix[lo : lo + 262144]), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise IndexIOError(f"{path} contains rows that are not unit-norm")
    return VectorIndex(ids, matrix, mode, manifest, ivf_params, centroids, offsets)
