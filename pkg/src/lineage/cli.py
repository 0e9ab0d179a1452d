"""Command-line front end: each subcommand is a thin shell over the library.

Exit codes: 0 on success, 2 for usage errors (argparse), 1 for data errors,
which are reported on stderr as a single machine-parsable line of the form
``error: <ExceptionType>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analytics import alluvial_flows, build_timeline, discipline_table
from .amr import ensemble_match_set, load_graph_sidecar
from .config import AppConfig, load_config
from .corpus import CorpusStore
from .embedding import build_provider, embed_batch, load_vectors, save_vectors
from .errors import ConfigError, LineageError
from .index import IvfParams, build_index_from_arrays, load_index, save_index
from .matching import MatchSet, export_match_set, query_book
from .report import render_report

_OVERRIDE_KEYS = (
    "corpus",
    "index",
    "vectors",
    "provider",
    "endpoint",
    "dimension",
    "batch_size",
    "floor",
    "weights",
    "restarts",
    "seed",
    "host",
    "port",
    "ui_dir",
    "match_exports",
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--corpus", type=Path, help="corpus store directory")
    common.add_argument("--index", type=Path, help="index file path")

    parser = argparse.ArgumentParser(
        prog="lineage",
        description="Trace sentence-level influence across a historical corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="load a corpus JSONL file")
    p.add_argument("source", type=Path, help="JSONL file of {metadata..., text} rows")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("embed", parents=[common], help="embed the sentence table")
    p.add_argument("--provider", choices=["hash_test", "remote_service"])
    p.add_argument("--endpoint", help="remote provider URL")
    p.add_argument("--dimension", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--vectors", type=Path, help="output vectors file")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("index", parents=[common], help="build or inspect the index")
    index_sub = p.add_subparsers(dest="index_command", required=True)
    b = index_sub.add_parser("build", parents=[common])
    b.add_argument("--mode", choices=["flat_exact", "ivf_approx"], default="flat_exact")
    b.add_argument("--vectors", type=Path, help="embedded vectors file")
    b.add_argument("--n-lists", type=int, default=64, dest="n_lists")
    b.add_argument("--n-probe", type=int, default=8, dest="n_probe")
    b.add_argument("--ivf-seed", type=int, default=0, dest="ivf_seed")
    b.set_defaults(handler=cmd_index_build)
    i = index_sub.add_parser("info", parents=[common])
    i.set_defaults(handler=cmd_index_info)

    p = sub.add_parser("query", parents=[common], help="match a focus book")
    p.add_argument("doc_id")
    p.add_argument("--floor", type=float)
    p.add_argument("--out", type=Path, help="export the match set")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser("report", parents=[common], help="render the report bundle")
    p.add_argument("doc_id")
    p.add_argument("--floor", type=float)
    p.add_argument("--out", type=Path, required=True, help="bundle output directory")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("ensemble", parents=[common], help="add structural scores")
    p.add_argument("doc_id")
    p.add_argument("--graphs", type=Path, required=True, help="graph sidecar JSONL")
    p.add_argument("--floor", type=float)
    p.add_argument("--weights", help="semantic,structural (e.g. 0.5,0.5)")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="export the enriched match set")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.set_defaults(handler=cmd_ensemble)

    p = sub.add_parser("serve", parents=[common], help="start the local HTTP service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui-dir", type=Path, dest="ui_dir", help="static UI build directory")
    p.add_argument(
        "--match-export",
        type=Path,
        action="append",
        dest="match_exports",
        help="persisted match-set JSONL to serve from cache (repeatable)",
    )
    p.set_defaults(handler=cmd_serve)

    return parser


def _config_from_args(args: argparse.Namespace) -> AppConfig:
    overrides = {key: getattr(args, key, None) for key in _OVERRIDE_KEYS}
    return load_config(path=getattr(args, "config", None), **overrides)


def _open_store(config: AppConfig) -> CorpusStore:
    if not (Path(config.corpus) / "corpus.toml").exists():
        raise ConfigError(f"no corpus store at {config.corpus}; run ingest first")
    return CorpusStore.open(config.corpus)


def _query(config: AppConfig, doc_id: str) -> tuple[MatchSet, CorpusStore]:
    store = _open_store(config)
    index = load_index(config.index)
    provider = build_provider(config.provider_config())
    document = store.get(doc_id)
    return query_book(document, index, store, provider, config.match_config()), store


def cmd_ingest(args: argparse.Namespace, config: AppConfig) -> int:
    root = Path(config.corpus)
    if (root / "corpus.toml").exists():
        store = CorpusStore.open(root)
    else:
        store = CorpusStore.create(root, filters=config.filter_config())
    count = store.ingest_jsonl(args.source)
    table = store.build_sentence_table()
    print(
        f"ingested {count} documents into {root}; "
        f"{len(table)} sentences survive the filters"
    )
    return 0


def cmd_embed(args: argparse.Namespace, config: AppConfig) -> int:
    store = _open_store(config)
    provider_config = config.provider_config()
    provider = build_provider(provider_config)
    sentences = store.sentences()
    vectors = embed_batch(sentences, provider_config, provider)
    save_vectors(config.vectors_path, vectors, provider.model_id)
    print(
        f"embedded {len(vectors)} sentences with {provider.model_id} "
        f"-> {config.vectors_path}"
    )
    return 0


def cmd_index_build(args: argparse.Namespace, config: AppConfig) -> int:
    store = _open_store(config)
    ids, matrix, model = load_vectors(config.vectors_path)
    manifest = {"model": model, "corpus_hash": store.corpus_hash()}
    ivf = None
    if args.mode == "ivf_approx":
        ivf = IvfParams(n_lists=args.n_lists, n_probe=args.n_probe, seed=args.ivf_seed)
    index = build_index_from_arrays(ids, matrix, args.mode, ivf_params=ivf, manifest=manifest)
    save_index(index, config.index)
    print(
        f"built {args.mode} index over {index.count} vectors "
        f"(d={index.dimension}) -> {config.index}"
    )
    return 0


def cmd_index_info(args: argparse.Namespace, config: AppConfig) -> int:
    index = load_index(config.index)
    print(f"dimension: {index.dimension}")
    print(f"count: {index.count}")
    print(f"mode: {index.mode}")
    print(f"manifest: {json.dumps(index.manifest, sort_keys=True)}")
    return 0


def cmd_query(args: argparse.Namespace, config: AppConfig) -> int:
    match_set, _ = _query(config, args.doc_id)
    print(
        f"{len(match_set)} matches across {len(match_set.book_counts)} books "
        f"at floor {config.floor}"
    )
    if match_set.truncated:
        print(
            f"hit lists truncated for {len(match_set.truncated)} sentences "
            f"(cap {config.max_hits_per_sentence})"
        )
    if args.out:
        export_match_set(match_set, args.out, format=args.format)
        print(f"wrote {args.out}")
    return 0


def cmd_report(args: argparse.Namespace, config: AppConfig) -> int:
    match_set, store = _query(config, args.doc_id)
    metas = store.metas()
    pub_year = metas[args.doc_id].pub_year
    timeline = build_timeline(match_set, metas, pub_year)
    table = discipline_table(match_set, metas, pub_year, config.min_matching_sentences)
    flows = alluvial_flows(match_set, metas, pub_year)
    render_report(timeline, table, flows, format="bundle", out_dir=args.out)
    print(f"wrote report bundle to {args.out}")
    return 0


def cmd_ensemble(args: argparse.Namespace, config: AppConfig) -> int:
    match_set, _ = _query(config, args.doc_id)
    graphs = load_graph_sidecar(args.graphs)
    enriched = ensemble_match_set(
        match_set,
        graphs,
        weights=config.weights,
        restarts=config.restarts,
        seed=config.seed,
        min_matching_sentences=config.min_matching_sentences,
    )
    scored = sum(1 for r in enriched.records if r.structural_f1 is not None)
    print(
        f"structurally scored {scored} of {len(enriched)} matches "
        f"(weights {config.weights[0]:g}/{config.weights[1]:g})"
    )
    if args.out:
        export_match_set(enriched, args.out, format=args.format)
        print(f"wrote {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace, config: AppConfig) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    app = create_app(ServiceState.open(config))
    print(f"serving on http://{config.host}:{config.port}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        return args.handler(args, config)
    except (LineageError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        message = str(exc) or type(exc).__name__
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
