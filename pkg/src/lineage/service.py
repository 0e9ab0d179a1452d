"""Local HTTP service over the pipeline: a JSON API for corpus browsing,
per-sentence match lookups, analytics views, and asynchronous pipeline jobs.

Single-tenant and local-first: binds to loopback by default, no auth. Reads
are side-effect-free and deterministic, so identical GETs between writes
return byte-identical bodies. Mutating work (ingest, embed, index builds)
runs through a single-worker job queue, one job at a time; queries keep
using the previous index generation until the new one is swapped in.
"""

from __future__ import annotations

import itertools
import threading
import queue
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import __version__
from .analytics import alluvial_flows, build_timeline, discipline_table
from .config import AppConfig
from .corpus import CorpusStore, split_sentence_id
from .embedding import build_provider, embed_batch, load_vectors, save_vectors
from .errors import (
    ConfigError,
    EmptyFocusBook,
    LineageError,
    ManifestMismatch,
    ProviderUnavailable,
    ServiceNotReady,
    UnsupportedFormat,
)
from .index import IvfParams, build_index_from_arrays, load_index, save_index
from .matching import (
    ConfidenceTier,
    MatchConfig,
    MatchSet,
    export_match_set,
    load_match_set,
    query_book,
)
from .report import render_report

JOB_KINDS = ("ingest", "embed", "build_index", "query", "report")

_PENDING, _RUNNING, _DONE, _FAILED = "pending", "running", "done", "failed"
_TRANSITIONS = {
    _PENDING: {_RUNNING},
    _RUNNING: {_DONE, _FAILED},
    _DONE: set(),
    _FAILED: set(),
}


@dataclass
class JobDescriptor:
    job_id: str
    kind: str
    status: str = _PENDING
    progress: float = 0.0
    error: str | None = None
    result: dict | None = None

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "error": self.error,
            "result": self.result,
        }


class JobRunner:
    """Single worker thread draining a FIFO queue of pipeline jobs."""

    def __init__(self, state: "ServiceState"):
        self._state = state
        self._queue: queue.Queue[str] = queue.Queue()
        self._jobs: dict[str, JobDescriptor] = {}
        self._params: dict[str, dict] = {}
        self._events: dict[str, threading.Event] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        worker = threading.Thread(target=self._run, daemon=True, name="lineage-jobs")
        worker.start()

    def submit(self, kind: str, params: dict) -> dict:
        if kind not in JOB_KINDS:
            raise ValueError(f"unknown job kind {kind!r}; expected one of {JOB_KINDS}")
        with self._lock:
            job_id = f"job-{next(self._ids)}"
            self._jobs[job_id] = JobDescriptor(job_id=job_id, kind=kind)
            self._params[job_id] = dict(params)
            self._events[job_id] = threading.Event()
            snapshot = self._jobs[job_id].to_json()
        self._queue.put(job_id)
        return snapshot

    def get(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(f"no job {job_id!r}")
            return self._jobs[job_id].to_json()

    def wait(self, job_id: str, timeout: float = 30.0) -> dict:
        """Block until the job finishes; mainly for tests and the CLI."""
        event = self._events[job_id]
        if not event.wait(timeout):
            raise TimeoutError(f"job {job_id} did not finish within {timeout}s")
        return self.get(job_id)

    def _set_status(self, job: JobDescriptor, status: str) -> None:
        if status not in _TRANSITIONS[job.status]:
            raise RuntimeError(f"illegal job transition {job.status} -> {status}")
        job.status = status

    def _progress_callback(self, job_id: str):
        def advance(fraction: float) -> None:
            with self._lock:
                job = self._jobs[job_id]
                # Progress is monotone no matter what the stage reports.
                job.progress = min(1.0, max(job.progress, float(fraction)))

        return advance

    def _run(self) -> None:
        while True:
            job_id = self._queue.get()
            with self._lock:
                job = self._jobs[job_id]
                self._set_status(job, _RUNNING)
                params = self._params[job_id]
            try:
                result = self._state.run_job(job.kind, params, self._progress_callback(job_id))
            except Exception as exc:  # job errors are reported, never raised
                with self._lock:
                    self._set_status(job, _FAILED)
                    job.error = f"{type(exc).__name__}: {exc}"
            else:
                with self._lock:
                    self._set_status(job, _DONE)
                    job.progress = 1.0
                    job.result = result
            self._events[job_id].set()


class ServiceState:
    """Everything the endpoints share: store, index, provider, caches, jobs."""

    def __init__(self, config: AppConfig):
        self.config = config
        self.lock = threading.RLock()
        self.store: CorpusStore | None = None
        self.index = None
        self.provider = build_provider(config.provider_config())
        self.match_cache: dict[tuple[str, float], MatchSet] = {}
        self.jobs = JobRunner(self)

    @classmethod
    def open(cls, config: AppConfig) -> "ServiceState":
        state = cls(config)
        if (Path(config.corpus) / "corpus.toml").exists():
            state.store = CorpusStore.open(config.corpus)
        if Path(config.index).exists():
            state.index = load_index(config.index)
        for path in config.match_exports:
            state.import_match_set(path)
        return state

    # -- guarded accessors ----------------------------------------------------

    def require_store(self) -> CorpusStore:
        with self.lock:
            if self.store is None:
                raise ServiceNotReady(f"no corpus store at {self.config.corpus}")
            return self.store

    def require_index(self):
        with self.lock:
            if self.index is None:
                raise ServiceNotReady(f"index not built (expected {self.config.index})")
            return self.index

    def import_match_set(self, path: Path | str) -> MatchSet:
        """Seed the match cache from a persisted export (e.g. scores produced
        by a stronger embedder than the built-in test provider)."""
        match_set = load_match_set(path)
        with self.lock:
            self.match_cache[(match_set.focus_doc_id, match_set.config.floor)] = match_set
        return match_set

    def match_set_for(self, doc_id: str, floor: float) -> MatchSet:
        key = (doc_id, float(floor))
        with self.lock:
            cached = self.match_cache.get(key)
        if cached is not None:
            return cached
        store = self.require_store()
        document = store.get(doc_id)
        index = self.require_index()
        config = MatchConfig(
            floor=float(floor),
            max_hits_per_sentence=self.config.max_hits_per_sentence,
        )
        match_set = query_book(document, index, store, self.provider, config)
        with self.lock:
            self.match_cache[key] = match_set
        return match_set

    # -- job bodies -------------------------------------------------------------

    def run_job(self, kind: str, params: dict, progress) -> dict:
        handler = {
            "ingest": self._job_ingest,
            "embed": self._job_embed,
            "build_index": self._job_build_index,
            "query": self._job_query,
            "report": self._job_report,
        }[kind]
        return handler(params, progress)

    def _job_ingest(self, params: dict, progress) -> dict:
        if "path" not in params:
            raise ValueError("ingest needs params.path (a corpus JSONL file)")
        with self.lock:
            store = self.store
        if store is None:
            store = CorpusStore.create(self.config.corpus, filters=self.config.filter_config())
        count = store.ingest_jsonl(params["path"])
        progress(0.6)
        sentences = store.build_sentence_table()
        with self.lock:
            self.store = store
            self.match_cache.clear()
        progress(1.0)
        return {"documents": count, "sentences": len(sentences)}

    def _job_embed(self, params: dict, progress) -> dict:
        store = self.require_store()
        sentences = store.sentences()
        provider_config = self.config.provider_config()
        chunk = provider_config.batch_size * 8
        vectors = []
        for lo in range(0, len(sentences), chunk):
            vectors.extend(
                embed_batch(sentences[lo : lo + chunk], provider_config, self.provider)
            )
            progress(0.9 * min(1.0, (lo + chunk) / max(1, len(sentences))))
        path = self.config.vectors_path
        save_vectors(path, vectors, self.provider.model_id)
        progress(1.0)
        return {
            "sentences": len(vectors),
            "model": self.provider.model_id,
            "path": str(path),
        }

    def _job_build_index(self, params: dict, progress) -> dict:
        store = self.require_store()
        vectors_path = self.config.vectors_path
        if not Path(vectors_path).exists():
            raise ConfigError(f"no embedded vectors at {vectors_path}; run embed first")
        ids, matrix, model = load_vectors(vectors_path)
        progress(0.2)
        mode = params.get("mode", "flat_exact")
        manifest = {"model": model, "corpus_hash": store.corpus_hash()}
        kwargs = {}
        if params.get("ivf"):
            kwargs["ivf_params"] = IvfParams(**params["ivf"])
        index = build_index_from_arrays(ids, matrix, mode, manifest=manifest, **kwargs)
        progress(0.7)
        save_index(index, self.config.index)
        loaded = load_index(self.config.index)
        with self.lock:
            self.index = loaded
            self.match_cache.clear()
        progress(1.0)
        return {"count": index.count, "dimension": index.dimension, "mode": mode}

    def _job_query(self, params: dict, progress) -> dict:
        if "doc_id" not in params:
            raise ValueError("query needs params.doc_id")
        floor = float(params.get("floor", self.config.floor))
        match_set = self.match_set_for(params["doc_id"], floor)
        progress(0.9)
        if params.get("export_path"):
            export_match_set(
                match_set, params["export_path"], format=params.get("format", "jsonl")
            )
        return {
            "records": len(match_set),
            "books": len(match_set.book_counts),
            "floor": floor,
        }

    def _job_report(self, params: dict, progress) -> dict:
        for required in ("doc_id", "out_dir"):
            if required not in params:
                raise ValueError(f"report needs params.{required}")
        doc_id = params["doc_id"]
        floor = float(params.get("floor", self.config.floor))
        store = self.require_store()
        match_set = self.match_set_for(doc_id, floor)
        progress(0.6)
        metas = store.metas()
        pub_year = metas[doc_id].pub_year
        timeline = build_timeline(match_set, metas, pub_year)
        table = discipline_table(
            match_set, metas, pub_year, self.config.min_matching_sentences
        )
        flows = alluvial_flows(match_set, metas, pub_year)
        render_report(timeline, table, flows, format="bundle", out_dir=params["out_dir"])
        progress(1.0)
        return {"out_dir": str(params["out_dir"])}


@contextmanager
def _http_errors():
    """Translate library errors into the documented HTTP status codes."""
    try:
        yield
    except KeyError as exc:
        raise HTTPException(status_code=404, detail=str(exc)) from exc
    except ServiceNotReady as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except ManifestMismatch as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except ProviderUnavailable as exc:
        raise HTTPException(status_code=503, detail=str(exc)) from exc
    except (ConfigError, ValueError, UnsupportedFormat, EmptyFocusBook) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc
    except LineageError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="lineage", version=__version__)
    app.state.lineage = state

    @app.exception_handler(RequestValidationError)
    async def malformed_query(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.get("/")
    def root():
        return {
            "name": "lineage",
            "version": __version__,
            "endpoints": [
                "/books",
                "/books/{doc_id}",
                "/books/{doc_id}/timeline",
                "/books/{doc_id}/disciplines",
                "/books/{doc_id}/alluvial",
                "/sentences/{sentence_id}/matches",
                "/jobs",
            ],
        }

    @app.get("/books")
    def list_books():
        with _http_errors():
            store = state.require_store()
            try:
                counts: dict[str, int] = {}
                for record in store.sentences():
                    counts[record.doc_id] = counts.get(record.doc_id, 0) + 1
            except ConfigError:  # no sentence table yet
                counts = {}
            metas = store.metas()
            books = []
            for doc_id in sorted(metas):
                row = metas[doc_id].to_json()
                row["sentence_count"] = counts.get(doc_id, 0)
                books.append(row)
        return {"books": books}

    @app.get("/books/{doc_id}")
    def get_book(doc_id: str):
        with _http_errors():
            store = state.require_store()
            meta = store.get(doc_id).meta
            rows = sorted(
                (r for r in store.sentences() if r.doc_id == doc_id),
                key=lambda r: r.ordinal,
            )
        return {"meta": meta.to_json(), "sentences": [r.to_json() for r in rows]}

    @app.get("/sentences/{sentence_id}/matches")
    def sentence_matches(sentence_id: str, floor: float | None = None, tier: str | None = None):
        with _http_errors():
            store = state.require_store()
            doc_id, _ = split_sentence_id(sentence_id)
            lookup = store.sentence_lookup()
            if sentence_id not in lookup:
                raise KeyError(f"no sentence {sentence_id!r}")
            sentence = lookup[sentence_id]
            focus_meta = store.get(doc_id).meta
            minimum = ConfidenceTier.from_label(tier) if tier else None
            the_floor = state.config.floor if floor is None else float(floor)
            match_set = state.match_set_for(doc_id, the_floor)

            metas = store.metas()
            pre, post = [], []
            for record in match_set.records:
                if record.query_sentence_id != sentence_id:
                    continue
                if minimum is not None and record.tier.value < minimum.value:
                    continue
                entry = record.to_json()
                matched = lookup.get(record.corpus_sentence_id)
                entry["corpus_text"] = matched.text if matched else None
                corpus_meta = metas.get(record.corpus_doc_id)
                entry["corpus_title"] = corpus_meta.title if corpus_meta else None
                entry["corpus_author"] = corpus_meta.author if corpus_meta else None
                entry["corpus_is_correspondent"] = (
                    corpus_meta.is_correspondent if corpus_meta else False
                )
                # Publication-year ties count as post, same as the analytics.
                if record.corpus_pub_year < focus_meta.pub_year:
                    pre.append(entry)
                else:
                    post.append(entry)
        return {
            "sentence_id": sentence_id,
            "doc_id": doc_id,
            "ordinal": sentence.ordinal,
            "text": sentence.text,
            "pub_year": focus_meta.pub_year,
            "floor": the_floor,
            "tier": minimum.label if minimum else None,
            "pre": pre,
            "post": post,
            "truncated": match_set.truncated.get(sentence_id, 0),
        }

    @app.get("/books/{doc_id}/timeline")
    def book_timeline(doc_id: str, floor: float | None = None, stat: str = "mean"):
        with _http_errors():
            store = state.require_store()
            metas = store.metas()
            meta = store.get(doc_id).meta
            the_floor = state.config.floor if floor is None else float(floor)
            match_set = state.match_set_for(doc_id, the_floor)
            sizes = None
            if stat == "density":
                sizes = {}
                for record in store.sentences():
                    sizes[record.doc_id] = sizes.get(record.doc_id, 0) + 1
            timeline = build_timeline(match_set, metas, meta.pub_year, stat=stat, book_sizes=sizes)
        return timeline.to_json()

    @app.get("/books/{doc_id}/disciplines")
    def book_disciplines(doc_id: str, floor: float | None = None):
        with _http_errors():
            store = state.require_store()
            meta = store.get(doc_id).meta
            the_floor = state.config.floor if floor is None else float(floor)
            match_set = state.match_set_for(doc_id, the_floor)
            table = discipline_table(
                match_set, store.metas(), meta.pub_year, state.config.min_matching_sentences
            )
        return [row.to_json() for row in table]

    @app.get("/books/{doc_id}/alluvial")
    def book_alluvial(doc_id: str, floor: float | None = None):
        with _http_errors():
            store = state.require_store()
            meta = store.get(doc_id).meta
            the_floor = state.config.floor if floor is None else float(floor)
            match_set = state.match_set_for(doc_id, the_floor)
            flows = alluvial_flows(match_set, store.metas(), meta.pub_year)
        return [flow.to_json() for flow in flows]

    @app.post("/jobs", status_code=202)
    def create_job(payload: dict):
        with _http_errors():
            kind = payload.get("kind")
            params = payload.get("params", {})
            if not isinstance(kind, str):
                raise ValueError("job payload needs a string 'kind'")
            if not isinstance(params, dict):
                raise ValueError("job 'params' must be an object")
            descriptor = state.jobs.submit(kind, params)
        return descriptor

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        with _http_errors():
            return state.jobs.get(job_id)

    ui_dir = state.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def build_app(config: AppConfig) -> FastAPI:
    """Open the state described by config and wrap it in the API app."""
    return create_app(ServiceState.open(config))
