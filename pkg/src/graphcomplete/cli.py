"""Command-line entry point: index, retrieve, complete, eval, config show.

Machine-readable output is JSON on stdout; logs go to stderr.  Exit codes:
0 success, 2 I/O or configuration failure, 3 empty corpus, 4 cursor outside
the addressed file, 5 completion-backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import AppConfig, load_config
from .errors import (
    ConfigError,
    CursorError,
    DecodeError,
    EmptyCorpusError,
    GraphCompleteError,
    TransportError,
)
from .evaluation import load_tasks
from .fusion import build_query_graph
from .graph_builder import build_graph
from .harness import BenchmarkConfig, make_echo_backend, run_benchmark
from .index import FlatIndex, HnswIndex, IndexBundle, build_indexes, load_units, save_units
from .llm_client import MockBackend, RemoteHttpBackend
from .pipeline import Pipeline, VARIANTS
from .report import write_comparison, write_report
from .retriever import retrieve as run_retrieve
from .store import load_graph, save_diagnostics, save_graph

logger = logging.getLogger("graphcomplete")

EXIT_OK = 0
EXIT_IO = 2
EXIT_EMPTY = 3
EXIT_CURSOR = 4
EXIT_BACKEND = 5

META_FILE = "meta.json"

_ABLATION_ALIASES = {
    "no_fusion": "grace_no_fusion",
    "bm25": "grace_bm25_retriever",
    "ast_only": "grace_ast_only",
}


def _emit(payload) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )


def _load_cfg(args: argparse.Namespace) -> AppConfig:
    return load_config(args.config, args.overrides)


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------


def cmd_index(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out_dir = Path(args.out)
    result = build_graph(args.repo, ast_only=args.ast_only)
    out_dir.mkdir(parents=True, exist_ok=True)

    backend = cfg.embedder_backend()
    idx = cfg.values["index"]
    bundle = build_indexes(
        result.graph,
        backend,
        pe_dim=cfg["pe.d2"],
        m=idx["m"],
        ef_construction=idx["ef_construction"],
        ef_search=idx["ef_search"],
    )

    save_graph(result.graph, out_dir / "graph.jsonl")
    bundle.semantic.save(out_dir / "semantic.jsonl")
    bundle.structural.save(out_dir / "structural.jsonl")
    save_units(bundle.units, out_dir / "units.jsonl")
    save_diagnostics(result.diagnostics + bundle.diagnostics, out_dir / "diagnostics.jsonl")
    meta = {
        "format_version": 1,
        "repo_root": str(Path(args.repo).resolve()),
        "repo_name": result.graph.repo_name,
        "embedder": {"kind": backend.kind, "dim": backend.dim},
        "pe_dim": cfg["pe.d2"],
        "ast_only": bool(args.ast_only),
    }
    (out_dir / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    _emit(
        {
            "nodes": len(result.graph.nodes),
            "edges": len(result.graph.edges),
            "units": len(bundle.units),
            "diagnostics": len(result.diagnostics) + len(bundle.diagnostics),
            "call_sites": result.call_sites_total,
            "call_sites_resolved": result.call_sites_resolved,
            "out": str(out_dir),
        }
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# shared loading
# ---------------------------------------------------------------------------


def _load_bundle(index_dir: Path, cfg: AppConfig):
    meta = json.loads((index_dir / META_FILE).read_text(encoding="utf-8"))
    graph = load_graph(index_dir / "graph.jsonl")
    bundle = IndexBundle(
        semantic=HnswIndex.load(index_dir / "semantic.jsonl"),
        structural=FlatIndex.load(index_dir / "structural.jsonl"),
        units=load_units(index_dir / "units.jsonl"),
        pe_dim=meta["pe_dim"],
    )
    from .embedder import make_backend

    embedder = make_backend(
        meta["embedder"]["kind"],
        dim=meta["embedder"]["dim"],
        endpoint=cfg.values["embedder"]["endpoint"] or None,
    )
    return meta, graph, bundle, embedder


def _read_cursor_file(path: str, line: int, col: int) -> str:
    try:
        source = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DecodeError(f"cannot read {path}: {exc}") from exc
    lines = source.splitlines()
    if line < 1 or line > len(lines) + 1:
        raise CursorError(f"line {line} outside {path} ({len(lines)} lines)")
    if line <= len(lines) and col > len(lines[line - 1]) + 1:
        raise CursorError(f"column {col} beyond end of line {line} in {path}")
    if col < 1:
        raise CursorError(f"column {col} is not 1-based")
    return source


# ---------------------------------------------------------------------------
# retrieve
# ---------------------------------------------------------------------------


def cmd_retrieve(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    index_dir = Path(args.index)
    meta, graph, bundle, embedder = _load_bundle(index_dir, cfg)
    source = _read_cursor_file(args.file, args.line, args.col)

    query = build_query_graph(source, args.line, args.col, args.file)
    rerank = cfg.rerank_config()
    if args.k is not None:
        rerank.k = args.k
    pipeline = Pipeline(
        graph=graph, bundle=bundle, embedder=embedder, rerank=rerank,
        fusion=cfg.fusion_config(), prompt=cfg.prompt_config(),
    )
    result = run_retrieve(pipeline._encode_query(query), bundle, rerank)

    payload = {
        "alpha": result.alpha,
        "candidates": [
            {
                "subgraph_id": c.subgraph_id,
                "sem_sim": round(c.sem_sim, 6),
                "struct_sim": round(c.struct_sim, 6),
                "score": round(c.score, 6),
                "origin": c.origin,
                "file_path": bundle.units[c.subgraph_id].file_path
                if c.subgraph_id in bundle.units
                else "",
            }
            for c in result.selected
        ],
    }
    if args.explain:
        payload["semantic_hits"] = [
            {"subgraph_id": i, "score": round(s, 6)} for i, s in result.semantic_hits
        ]
        payload["structural_hits"] = [
            {"subgraph_id": i, "score": round(s, 6)} for i, s in result.structural_hits
        ]
        payload["merged"] = [
            {"subgraph_id": c.subgraph_id, "score": round(c.score, 6), "origin": c.origin}
            for c in result.merged
        ]
    _emit(payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# complete
# ---------------------------------------------------------------------------


def cmd_complete(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    index_dir = Path(args.index)
    meta, graph, bundle, embedder = _load_bundle(index_dir, cfg)
    source = _read_cursor_file(args.file, args.line, args.col)

    variant = _ABLATION_ALIASES.get(args.ablate, args.ablate) if args.ablate else "grace"
    if variant not in VARIANTS:
        raise ConfigError(f"unknown ablation {args.ablate!r}")

    pipeline = Pipeline(
        graph=graph,
        bundle=bundle,
        embedder=embedder,
        rerank=cfg.rerank_config(),
        fusion=cfg.fusion_config(),
        prompt=cfg.prompt_config(),
        variant=variant,
        repo_name=meta["repo_name"],
        repo_root=Path(meta["repo_root"]) if meta.get("repo_root") else None,
    )

    prompt, trace, fused_out = pipeline.prompt_for(source, args.line, args.col, args.file)
    if args.dump_fusion:
        _dump_fusion(fused_out, Path(args.dump_fusion))
    if args.emit_prompt:
        sys.stdout.write(prompt.text + "\n")
        return EXIT_OK

    llm = cfg.values["llm"]
    if llm["kind"] == "mock":
        canned = json.dumps(
            {
                "completed_code": args.mock_completion or "",
                "explanation": "mock backend",
                "confidence_score": 1.0 if args.mock_completion else 0.0,
                "referenced_nodes": [],
            }
        )
        backend = MockBackend(default=canned)
    elif llm["kind"] == "remote":
        backend = RemoteHttpBackend(
            endpoint=llm["endpoint"],
            model=llm["model"],
            api_key_env=llm["api_key_env"],
            max_tokens=llm["max_tokens"],
        )
    else:
        raise ConfigError(f"unknown llm kind {llm['kind']!r}")

    from .llm_client import complete as run_complete

    result = run_complete(prompt.text, backend)
    _emit(
        {
            "completed_code": result.completed_code,
            "explanation": result.explanation,
            "confidence_score": result.confidence_score,
            "referenced_nodes": result.referenced_nodes,
            "diagnostics": result.diagnostics,
            "variant": variant,
            "latency_ms": round(trace.latency_ms, 3),
        }
    )
    return EXIT_OK


def _dump_fusion(fused_out, path: Path) -> None:
    if fused_out is None:
        payload = {"attention": [], "query_rows": [], "retrieved_rows": [], "cross_edges": []}
    else:
        payload = {
            "attention": [[round(float(v), 6) for v in row] for row in fused_out.attention],
            "query_rows": fused_out.query_rows,
            "retrieved_rows": [list(r) for r in fused_out.retrieved_rows],
            "weights": fused_out.weights,
            "cross_edges": [
                {"src": e.src, "dst": e.dst, "weight": round(e.weight, 6)}
                for e in fused_out.fused.cross_edges
            ],
        }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    tasks = load_tasks(args.tasks)
    if args.variant == "all":
        variants = list(VARIANTS)
    else:
        variants = [
            _ABLATION_ALIASES.get(v.strip(), v.strip()) for v in args.variant.split(",")
        ]
    for variant in variants:
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}; choose from {VARIANTS}")

    embedder = cfg.embedder_backend()
    llm_cfg = cfg.values["llm"]
    if args.backend == "echo":
        backend = make_echo_backend(tasks)
    elif args.backend == "remote" or llm_cfg["kind"] == "remote":
        backend = RemoteHttpBackend(
            endpoint=llm_cfg["endpoint"],
            model=llm_cfg["model"],
            api_key_env=llm_cfg["api_key_env"],
            max_tokens=llm_cfg["max_tokens"],
        )
    else:
        backend = make_echo_backend(tasks)

    results = {}
    summary = {}
    for variant in variants:
        bench = BenchmarkConfig(
            variant=variant,
            pe_dim=cfg["pe.d2"],
            rerank=cfg.rerank_config(),
            fusion=cfg.fusion_config(),
            prompt=cfg.prompt_config(),
        )
        metrics = run_benchmark(tasks, backend, embedder, bench)
        results[variant] = metrics
        summary[variant] = metrics.as_dict()
        if args.out:
            write_report(metrics, args.out, variant=variant, figures=not args.no_figures)
    if args.out and len(results) > 1:
        write_comparison(results, args.out, figures=not args.no_figures)
    _emit(summary)
    return EXIT_OK


def cmd_config_show(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    sys.stdout.write(cfg.show() + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphcomplete",
        description=(
            "Repository-level code completion over a unified code graph: "
            "index a repository, inspect retrieval, run single completions, "
            "and evaluate EM/ES/Recall/F1 over task files."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="index a repository into graph + vector indexes")
    p_index.add_argument("repo", help="repository root directory")
    p_index.add_argument("--out", required=True, help="output directory for index artifacts")
    p_index.add_argument("--ast-only", action="store_true", help="restrict the graph to AST edges")
    _add_config_flags(p_index)
    p_index.set_defaults(func=cmd_index)

    p_ret = sub.add_parser("retrieve", help="rank candidate subgraphs for a cursor position")
    p_ret.add_argument("--index", required=True, help="index directory from `index`")
    p_ret.add_argument("--file", required=True, help="source file to complete in")
    p_ret.add_argument("--line", type=int, required=True, help="1-based cursor line")
    p_ret.add_argument("--col", type=int, required=True, help="1-based cursor column")
    p_ret.add_argument("-k", type=int, default=None, help="number of candidates to return")
    p_ret.add_argument("--explain", action="store_true", help="include per-path raw hits")
    _add_config_flags(p_ret)
    p_ret.set_defaults(func=cmd_retrieve)

    p_comp = sub.add_parser("complete", help="run the full completion pipeline once")
    p_comp.add_argument("--index", required=True)
    p_comp.add_argument("--file", required=True)
    p_comp.add_argument("--line", type=int, required=True)
    p_comp.add_argument("--col", type=int, required=True)
    p_comp.add_argument("--emit-prompt", action="store_true", help="print the prompt, skip the backend")
    p_comp.add_argument("--dump-fusion", metavar="PATH", help="write attention/cross-edge debug JSON")
    p_comp.add_argument(
        "--ablate",
        choices=sorted(set(list(_ABLATION_ALIASES) + [v for v in VARIANTS if v != "grace"])),
        help="run an ablation variant instead of the full pipeline",
    )
    p_comp.add_argument("--mock-completion", help="canned completed_code for the mock backend")
    _add_config_flags(p_comp)
    p_comp.set_defaults(func=cmd_complete)

    p_eval = sub.add_parser("eval", help="run a benchmark task file and report metrics")
    p_eval.add_argument("--tasks", required=True, help="JSONL task file")
    p_eval.add_argument("--out", help="report directory (JSONL, CSV, figures)")
    p_eval.add_argument(
        "--variant",
        default="grace",
        help="pipeline variant, comma-separated list, or 'all'",
    )
    p_eval.add_argument(
        "--backend",
        choices=["echo", "remote"],
        default="echo",
        help="echo answers with the groundtruth (plumbing check) or call the remote LLM",
    )
    p_eval.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    _add_config_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_cfg = sub.add_parser("config", help="configuration utilities")
    cfg_sub = p_cfg.add_subparsers(dest="config_command", required=True)
    p_show = cfg_sub.add_parser("show", help="print the effective configuration")
    _add_config_flags(p_show)
    p_show.set_defaults(func=cmd_config_show)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CursorError as exc:
        logger.error("%s", exc)
        return EXIT_CURSOR
    except EmptyCorpusError as exc:
        logger.error("%s", exc)
        return EXIT_EMPTY
    except TransportError as exc:
        logger.error("%s", exc)
        return EXIT_BACKEND
    except (ConfigError, DecodeError, GraphCompleteError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
