"""End-to-end completion pipeline over a built index, with ablation variants.

Variants mirror the evaluation harness flags:

- ``grace``: hybrid retrieval, graph fusion, full prompt.
- ``grace_no_fusion``: hybrid retrieval, no graph section in the prompt.
- ``grace_bm25_retriever``: BM25 over unit snippets replaces both retrieval
  paths; fusion still runs on the returned units.
- ``grace_ast_only``: same flow as grace over an AST-only graph and indexes.
- ``vanilla_rag``: sliding-window snippet retrieval, no graph anywhere.
- ``no_rag``: local context only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from .bm25 import Bm25Index
from .embedder import EmbedderBackend, embed_graph, embed_text
from .errors import ConfigError
from .fusion import FusionConfig, FusionOutput, QueryGraph, build_query_graph, fuse
from .index import IndexBundle
from .llm_client import CompletionBackend, CompletionResult, complete
from .model import CodeGraph
from .retriever import QueryEncoding, RerankConfig, RetrievalResult, retrieve
from .serializer import Prompt, PromptConfig, PromptTask, RetrievedSnippet, build_prompt

VARIANTS = (
    "grace",
    "grace_no_fusion",
    "grace_bm25_retriever",
    "grace_ast_only",
    "vanilla_rag",
    "no_rag",
)

_WINDOW_LINES = 20
_WINDOW_STRIDE = 10


@dataclass
class CompletionTrace:
    variant: str
    alpha: float | None = None
    candidates: list[dict] = field(default_factory=list)
    fusion_cross_edges: int = 0
    fusion_nodes: int = 0
    latency_ms: float = 0.0


@dataclass
class Pipeline:
    graph: CodeGraph
    bundle: IndexBundle
    embedder: EmbedderBackend
    rerank: RerankConfig = field(default_factory=RerankConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    variant: str = "grace"
    repo_name: str = ""
    repo_root: Path | None = None
    _bm25: Bm25Index | None = None
    _windows: tuple[list[tuple[str, str]], object] | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown pipeline variant {self.variant!r}")
        if not self.repo_name:
            self.repo_name = self.graph.repo_name

    # -- retrieval ---------------------------------------------------------

    def _encode_query(self, query: QueryGraph) -> QueryEncoding:
        text = query.code_text if query.code_text.strip() else "<empty>"
        semantic = embed_text(text, self.embedder).values
        structural = embed_graph(self.graph_for_query(query), self.embedder, self.bundle.pe_dim).pooled
        return QueryEncoding(semantic=semantic, structural=structural)

    def graph_for_query(self, query: QueryGraph) -> CodeGraph:
        return query.graph

    def _hybrid_retrieve(self, query: QueryGraph) -> RetrievalResult:
        return retrieve(self._encode_query(query), self.bundle, self.rerank)

    def _bm25_retrieve(self, query: QueryGraph) -> RetrievalResult:
        if self._bm25 is None:
            corpus = {uid: unit.code_text for uid, unit in self.bundle.units.items()}
            self._bm25 = Bm25Index(corpus)
        hits = self._bm25.search(query.code_text, self.rerank.k)
        top = max((score for _, score in hits), default=0.0)
        from .retriever import RetrievedCandidate

        selected = []
        for unit_id, score in hits:
            norm = score / top if top > 0 else 0.0
            selected.append(
                RetrievedCandidate(
                    subgraph_id=unit_id,
                    sem_sim=norm,
                    struct_sim=norm,
                    score=norm,
                    origin="Semantic",
                )
            )
        return RetrievalResult(selected=selected, merged=list(selected), alpha=1.0)

    def _window_snippets(self) -> tuple[list[tuple[str, str]], object]:
        """Sliding-window corpus over the repository files, embedded once."""
        if self._windows is not None:
            return self._windows
        if self.repo_root is None:
            raise ConfigError("vanilla_rag needs the repository root on disk")
        from .index import FlatIndex

        windows: list[tuple[str, str]] = []
        texts: list[str] = []
        for path in sorted(Path(self.repo_root).rglob("*.py")):
            rel = path.relative_to(self.repo_root).as_posix()
            try:
                lines = path.read_text(encoding="utf-8").splitlines()
            except (OSError, UnicodeDecodeError):
                continue
            for start in range(0, max(1, len(lines)), _WINDOW_STRIDE):
                chunk = "\n".join(lines[start : start + _WINDOW_LINES])
                if not chunk.strip():
                    continue
                windows.append((f"{rel}:{start + 1}", chunk))
                texts.append(chunk)
                if start + _WINDOW_LINES >= len(lines):
                    break
        flat = FlatIndex(dim=self.embedder.dim)
        if texts:
            vectors = self.embedder.embed_batch(texts)
            for (window_id, _), vec in zip(windows, vectors):
                flat.add(window_id, vec)
        self._windows = (windows, flat)
        return self._windows

    def _vanilla_retrieve(self, query: QueryGraph) -> list[RetrievedSnippet]:
        windows, flat = self._window_snippets()
        text = query.code_text if query.code_text.strip() else "<empty>"
        hits = flat.search(embed_text(text, self.embedder).values, self.rerank.k)
        by_id = dict(windows)
        return [
            RetrievedSnippet(
                subgraph_id=window_id,
                file_path=window_id.rsplit(":", 1)[0],
                code_text=by_id[window_id],
                score=score,
            )
            for window_id, score in hits
        ]

    # -- prompt ------------------------------------------------------------

    def prompt_for(
        self, source: str, line: int, col: int, file_path: str
    ) -> tuple[Prompt, CompletionTrace, FusionOutput | None]:
        started = time.perf_counter()
        query = build_query_graph(source, line, col, file_path)
        trace = CompletionTrace(variant=self.variant)
        task = PromptTask(
            repo_name=self.repo_name,
            file_path=file_path,
            code_before_cursor=query.code_text,
        )

        fused_out: FusionOutput | None = None
        snippets: list[RetrievedSnippet] = []
        prompt_cfg = PromptConfig(
            total_tokens=self.prompt.total_tokens,
            token_multiplier=self.prompt.token_multiplier,
            code_fraction=self.prompt.code_fraction,
            include_graph=self.variant in ("grace", "grace_bm25_retriever", "grace_ast_only"),
            include_retrieved=self.variant != "no_rag",
        )

        if self.variant == "no_rag":
            pass
        elif self.variant == "vanilla_rag":
            snippets = self._vanilla_retrieve(query)
            trace.candidates = [
                {"subgraph_id": s.subgraph_id, "score": s.score} for s in snippets
            ]
        else:
            if self.variant == "grace_bm25_retriever":
                result = self._bm25_retrieve(query)
            else:
                result = self._hybrid_retrieve(query)
            trace.alpha = result.alpha
            trace.candidates = [
                {
                    "subgraph_id": c.subgraph_id,
                    "sem_sim": c.sem_sim,
                    "struct_sim": c.struct_sim,
                    "score": c.score,
                    "origin": c.origin,
                }
                for c in result.selected
            ]
            pairs = [
                (self.bundle.units[c.subgraph_id], c)
                for c in result.selected
                if c.subgraph_id in self.bundle.units
            ]
            snippets = [
                RetrievedSnippet(
                    subgraph_id=unit.subgraph_id,
                    file_path=unit.file_path,
                    code_text=unit.code_text,
                    score=candidate.score,
                )
                for unit, candidate in pairs
            ]
            if prompt_cfg.include_graph and pairs:
                fused_out = fuse(
                    query,
                    self.graph,
                    [unit for unit, _ in pairs],
                    [candidate.score for _, candidate in pairs],
                    self.embedder,
                    self.bundle.pe_dim,
                    self.fusion,
                )
                trace.fusion_cross_edges = len(fused_out.fused.cross_edges)
                trace.fusion_nodes = len(fused_out.fused.graph.nodes)

        prompt = build_prompt(task, snippets, fused_out.fused if fused_out else None, prompt_cfg)
        trace.latency_ms = (time.perf_counter() - started) * 1000.0
        return prompt, trace, fused_out

    def complete_at(
        self,
        source: str,
        line: int,
        col: int,
        file_path: str,
        backend: CompletionBackend,
        task_id: str | None = None,
    ) -> tuple[CompletionResult, CompletionTrace, Prompt]:
        prompt, trace, _ = self.prompt_for(source, line, col, file_path)
        started = time.perf_counter()
        result = complete(prompt.text, backend, task_id=task_id)
        trace.latency_ms += (time.perf_counter() - started) * 1000.0
        return result, trace, prompt
