"""Benchmark runner: build per-repo pipelines, complete tasks, score them.

Tasks whose repository is missing on disk are marked skipped, never failed.
Report rows keep the task-file order regardless of evaluation order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .embedder import DEFAULT_PE_DIM, EmbedderBackend
from .errors import EmptyCorpusError
from .evaluation import EvalMetrics, EvalRecord, aggregate, score_task
from .fusion import FusionConfig
from .graph_builder import build_graph
from .index import IndexBundle, build_indexes
from .llm_client import CompletionBackend, MockBackend
from .pipeline import VARIANTS, Pipeline
from .retriever import RerankConfig
from .serializer import PromptConfig

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkConfig:
    variant: str = "grace"
    pe_dim: int = DEFAULT_PE_DIM
    rerank: RerankConfig = field(default_factory=RerankConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)


def make_echo_backend(tasks: list[EvalRecord]) -> MockBackend:
    return MockBackend.echo({t.task_id: t.groundtruth for t in tasks})


def cursor_of_prefix(prefix: str) -> tuple[int, int]:
    """1-based (line, col) of the position immediately after the prefix."""
    lines = prefix.split("\n")
    return len(lines), len(lines[-1]) + 1


def build_pipeline_for_repo(
    repo_path: str | Path,
    embedder: EmbedderBackend,
    cfg: BenchmarkConfig,
    prebuilt: IndexBundle | None = None,
) -> Pipeline:
    ast_only = cfg.variant == "grace_ast_only"
    result = build_graph(repo_path, ast_only=ast_only)
    bundle = prebuilt or build_indexes(result.graph, embedder, pe_dim=cfg.pe_dim)
    return Pipeline(
        graph=result.graph,
        bundle=bundle,
        embedder=embedder,
        rerank=cfg.rerank,
        fusion=cfg.fusion,
        prompt=cfg.prompt,
        variant=cfg.variant,
        repo_root=Path(repo_path),
    )


def run_benchmark(
    tasks: list[EvalRecord],
    llm_backend: CompletionBackend,
    embedder: EmbedderBackend,
    cfg: BenchmarkConfig | None = None,
) -> EvalMetrics:
    cfg = cfg or BenchmarkConfig()
    if cfg.variant not in VARIANTS:
        raise ValueError(f"unknown variant {cfg.variant!r}; choose from {VARIANTS}")

    pipelines: dict[str, Pipeline | None] = {}
    per_task: list[dict] = []
    skipped = 0

    for task in tasks:
        repo_key = task.repo_path
        if repo_key not in pipelines:
            if cfg.variant == "no_rag":
                pipelines[repo_key] = _local_only_pipeline(task, embedder, cfg)
            else:
                pipelines[repo_key] = _build_or_skip(repo_key, embedder, cfg)
        pipeline = pipelines[repo_key]
        if pipeline is None:
            skipped += 1
            per_task.append(
                {
                    "task_id": task.task_id,
                    "status": "skipped",
                    "reason": f"repository {task.repo_path} not available",
                }
            )
            continue

        line, col = cursor_of_prefix(task.prefix)
        result, trace, _prompt = pipeline.complete_at(
            task.prefix, line, col, task.file_path, llm_backend, task_id=task.task_id
        )
        row = {
            "task_id": task.task_id,
            "status": "ok",
            "task_kind": task.task_kind,
            "prediction": result.completed_code,
            "groundtruth": task.groundtruth,
            "confidence": result.confidence_score,
            "variant": cfg.variant,
            "retrieval": trace.candidates,
            "alpha": trace.alpha,
            "fusion_cross_edges": trace.fusion_cross_edges,
            "latency_ms": round(trace.latency_ms, 3),
        }
        row.update(score_task(result.completed_code, task.groundtruth))
        if result.diagnostics:
            row["diagnostics"] = result.diagnostics
        per_task.append(row)

    return aggregate(per_task, skipped=skipped)


def _build_or_skip(
    repo_path: str, embedder: EmbedderBackend, cfg: BenchmarkConfig
) -> Pipeline | None:
    path = Path(repo_path)
    if not path.is_dir():
        return None
    try:
        return build_pipeline_for_repo(path, embedder, cfg)
    except (EmptyCorpusError, OSError) as exc:
        logger.warning("skipping repository %s: %s", repo_path, exc)
        return None


def _local_only_pipeline(
    task: EvalRecord, embedder: EmbedderBackend, cfg: BenchmarkConfig
) -> Pipeline | None:
    """no_rag ignores the repository entirely; synthesize an empty pipeline."""
    from .index import FlatIndex, HnswIndex
    from .model import CodeGraph

    bundle = IndexBundle(
        semantic=HnswIndex(dim=embedder.dim),
        structural=FlatIndex(dim=embedder.dim + cfg.pe_dim),
        units={},
        pe_dim=cfg.pe_dim,
    )
    return Pipeline(
        graph=CodeGraph(repo_name=Path(task.repo_path).name or "repo"),
        bundle=bundle,
        embedder=embedder,
        rerank=cfg.rerank,
        fusion=cfg.fusion,
        prompt=cfg.prompt,
        variant="no_rag",
        repo_name=Path(task.repo_path).name or "repo",
    )
