"""Line-delimited JSON persistence for graphs and diagnostics.

Graph store layout: first line is a header record carrying the format
version, repo name and counts; then one ``{"n": {...}}`` record per node
sorted by id hex and one ``{"e": {...}}`` record per edge sorted by
(src, dst, edge_type).  Output is bit-exact across runs on identical input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DecodeError
from .model import (
    CodeGraph,
    EdgeType,
    GraphEdge,
    GraphNode,
    GraphType,
    NodeType,
    StructuralFeatures,
)

GRAPH_FORMAT_VERSION = 1


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def _node_record(node: GraphNode) -> dict:
    rec = {
        "id": node.id,
        "nt": node.node_type.value,
        "gt": node.graph_type.value,
        "text": node.code_text,
        "path": node.file_path,
        "span": [node.line_span[0], node.line_span[1]],
    }
    if node.semantic_type is not None:
        rec["sem"] = node.semantic_type
    if node.features != StructuralFeatures():
        rec["feat"] = {
            "cc": node.features.cyclomatic_complexity,
            "nd": node.features.nesting_depth,
        }
    return rec


def _node_from_record(rec: dict) -> GraphNode:
    feat = rec.get("feat")
    return GraphNode(
        id=rec["id"],
        node_type=NodeType(rec["nt"]),
        graph_type=GraphType(rec["gt"]),
        code_text=rec["text"],
        file_path=rec["path"],
        line_span=(rec["span"][0], rec["span"][1]),
        semantic_type=rec.get("sem"),
        features=StructuralFeatures(feat["cc"], feat["nd"]) if feat else StructuralFeatures(),
    )


def _edge_record(edge: GraphEdge) -> dict:
    rec = {"s": edge.src, "d": edge.dst, "t": edge.edge_type.value}
    if edge.weight != 1.0:
        rec["w"] = edge.weight
    if edge.context is not None:
        rec["c"] = edge.context
    return rec


def _edge_from_record(rec: dict) -> GraphEdge:
    return GraphEdge(
        src=rec["s"],
        dst=rec["d"],
        edge_type=EdgeType(rec["t"]),
        weight=rec.get("w", 1.0),
        context=rec.get("c"),
    )


def save_graph(graph: CodeGraph, path: str | Path) -> None:
    graph.sort()
    header = {
        "format_version": GRAPH_FORMAT_VERSION,
        "repo_name": graph.repo_name,
        "counts": {"nodes": len(graph.nodes), "edges": len(graph.edges)},
    }
    lines = [_dump(header)]
    lines.extend(_dump({"n": _node_record(n)}) for n in graph.nodes.values())
    lines.extend(_dump({"e": _edge_record(e)}) for e in graph.edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> CodeGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DecodeError(f"cannot read graph file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DecodeError(f"graph file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DecodeError(f"graph file {path}: bad header: {exc}") from exc
    if header.get("format_version") != GRAPH_FORMAT_VERSION:
        raise DecodeError(
            f"graph file {path}: format_version {header.get('format_version')!r} "
            f"!= {GRAPH_FORMAT_VERSION}"
        )
    counts = header.get("counts", {})
    graph = CodeGraph(repo_name=header.get("repo_name", ""))
    try:
        for line in lines[1:]:
            if not line:
                continue
            rec = json.loads(line)
            if "n" in rec:
                graph.add_node(_node_from_record(rec["n"]))
            elif "e" in rec:
                graph.add_edge(_edge_from_record(rec["e"]))
            else:
                raise DecodeError(f"graph file {path}: unknown record {line[:60]!r}")
    except (json.JSONDecodeError, KeyError, ValueError, IndexError) as exc:
        raise DecodeError(f"graph file {path}: corrupt record: {exc}") from exc
    if len(graph.nodes) != counts.get("nodes") or len(graph.edges) != counts.get("edges"):
        raise DecodeError(
            f"graph file {path}: truncated (header promises {counts}, "
            f"got {len(graph.nodes)} nodes / {len(graph.edges)} edges)"
        )
    graph.validate()
    return graph


@dataclass(frozen=True)
class Diagnostic:
    """One non-fatal indexing event (unresolved call, skipped file, ...)."""

    file_path: str
    line: int
    kind: str
    message: str


def save_diagnostics(diags: list[Diagnostic], path: str | Path) -> None:
    lines = [
        _dump(
            {
                "file_path": d.file_path,
                "line": d.line,
                "kind": d.kind,
                "message": d.message,
            }
        )
        for d in diags
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_diagnostics(path: str | Path) -> list[Diagnostic]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        rec = json.loads(line)
        out.append(Diagnostic(rec["file_path"], rec["line"], rec["kind"], rec["message"]))
    return out
