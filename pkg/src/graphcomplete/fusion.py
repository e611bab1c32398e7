"""Graph fusion: encode query and retrieved subgraphs, cross-attend, combine.

The node encoder is untrained but fully deterministic: L rounds of mean
neighbor aggregation followed by a seeded random linear map and tanh.  The
attention matrix between query and retrieved node encodings gates the
creation of cross-graph edges, subject to a node-type compatibility table,
and semantically equivalent retrieved nodes are merged before assembly.
"""

from __future__ import annotations

import ast
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .embedder import EmbedderBackend, embed_graph, subgraph_adjacency
from .errors import ConfigError
from .graph_builder.function_level import _stmt_events  # linear def/use extraction
from .graph_builder.source import span_of
from .index import SubgraphUnit
from .model import (
    CodeGraph,
    EdgeType,
    GraphEdge,
    GraphNode,
    GraphType,
    NodeType,
    derive_node_id,
)

DEFAULT_THETA = 0.4
QUERY_WINDOW_LINES = 80


@dataclass
class FusionConfig:
    theta: float = DEFAULT_THETA
    gnn_layers: int = 2
    hidden_dim: int | None = None  # defaults to the node feature dimension
    seed: int = 7

    def __post_init__(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.gnn_layers < 0:
            raise ConfigError(f"gnn_layers must be >= 0, got {self.gnn_layers}")


# ---------------------------------------------------------------------------
# Query graph
# ---------------------------------------------------------------------------


@dataclass
class QueryGraph:
    graph: CodeGraph
    cursor_anchor: str
    code_text: str  # window of code before the cursor
    file_path: str = "<snippet>"


def _infer_closing_indent(lines: list[str]) -> str:
    for line in reversed(lines):
        stripped = line.strip()
        if not stripped:
            continue
        indent = line[: len(line) - len(line.lstrip())]
        if stripped.endswith(":"):
            return indent + "    "
        return indent
    return ""


def _parse_prefix(prefix: str) -> tuple[ast.Module, str]:
    """Parse an incomplete snippet, trimming trailing lines until it parses.

    Returns the tree together with the exact text it was parsed from, so
    source spans stay aligned.
    """
    lines = prefix.splitlines()
    for cut in range(0, min(len(lines), 50) + 1):
        kept = lines[: len(lines) - cut]
        candidate = "\n".join(kept)
        for suffix in ("", "\n" + _infer_closing_indent(kept) + "pass"):
            try:
                return ast.parse(candidate + suffix), candidate + suffix
            except SyntaxError:
                continue
    return ast.Module(body=[], type_ignores=[]), ""


def build_query_graph(
    source: str, line: int, col: int, file_path: str = "<snippet>"
) -> QueryGraph:
    """Local AST plus linear def/use chains for the code before the cursor.

    ``line`` and ``col`` are 1-based editor coordinates.  The window keeps
    the last QUERY_WINDOW_LINES lines before the cursor.
    """
    lines = source.splitlines()
    if line < 1 or line > max(1, len(lines) + 1):
        raise ConfigError(f"cursor line {line} outside file of {len(lines)} lines")
    before = lines[: line - 1]
    partial = lines[line - 1][: max(0, col - 1)] if line - 1 < len(lines) else ""
    window_start = max(0, len(before) - QUERY_WINDOW_LINES)
    window_lines = before[window_start:] + ([partial] if partial.strip() else [])
    window = "\n".join(window_lines)
    pseudo_path = f"query:{file_path}"

    graph = CodeGraph(repo_name="query")
    tree, parsed_text = _parse_prefix(window)

    node_ids: dict[int, str] = {}

    def add_ast(node: ast.AST) -> str:
        span = span_of(node)
        node_id = derive_node_id(pseudo_path, f"ast:{type(node).__name__}", span)
        segment = ast.get_source_segment(parsed_text, node) or type(node).__name__
        graph.add_node(
            GraphNode(
                id=node_id,
                node_type=NodeType.Statement if isinstance(node, ast.stmt) else NodeType.Expression,
                graph_type=GraphType.Ast,
                code_text=segment[:200],
                file_path=file_path,
                line_span=(span[0], span[2]),
                semantic_type="call" if isinstance(node, ast.Call) else None,
            )
        )
        node_ids[id(node)] = node_id
        return node_id

    def walk(node: ast.AST, parent_id: str | None) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.stmt, ast.expr)):
                child_id = add_ast(child)
                if parent_id is not None:
                    graph.add_edge(GraphEdge(parent_id, child_id, EdgeType.AstChild))
                walk(child, child_id)
            else:
                walk(child, parent_id)

    walk(tree, None)

    if not graph.nodes:
        # Unparseable or empty prefix: a single synthetic statement node.
        text = window_lines[-1].strip() if window_lines else "<empty>"
        node_id = derive_node_id(pseudo_path, "ast:raw", (1, 0, 1, 0))
        graph.add_node(
            GraphNode(
                id=node_id,
                node_type=NodeType.Statement,
                graph_type=GraphType.Ast,
                code_text=text or "<empty>",
                file_path=file_path,
                line_span=(1, 1),
            )
        )

    # Linear def/use chains over the window, innermost-function locals included.
    var_ids: dict[str, str] = {}
    last_line = 0
    for stmt in ast.walk(tree):
        if not isinstance(stmt, ast.stmt):
            continue
        for event in _stmt_events(stmt):
            if event.kind == "def":
                value_id = derive_node_id(
                    pseudo_path, f"dfgv:{event.var}:def", event.span
                )
                if event.var not in var_ids:
                    var_ids[event.var] = derive_node_id(pseudo_path, f"dfgvar:{event.var}", (0, 0, 0, 0))
                    graph.add_node(
                        GraphNode(
                            id=var_ids[event.var],
                            node_type=NodeType.Variable,
                            graph_type=GraphType.Dfg,
                            code_text=event.var,
                            file_path=file_path,
                            line_span=(event.span[0], event.span[2]),
                            semantic_type=".".join(event.annotation[0]) if event.annotation else None,
                        )
                    )
                graph.add_node(
                    GraphNode(
                        id=value_id,
                        node_type=NodeType.DfgValue,
                        graph_type=GraphType.Dfg,
                        code_text=event.var,
                        file_path=file_path,
                        line_span=(event.span[0], event.span[2]),
                    )
                )
                graph.add_edge(GraphEdge(value_id, var_ids[event.var], EdgeType.Defines))
            elif event.var in var_ids:
                value_id = derive_node_id(pseudo_path, f"dfgv:{event.var}:use", event.span)
                if value_id not in graph.nodes:
                    graph.add_node(
                        GraphNode(
                            id=value_id,
                            node_type=NodeType.DfgValue,
                            graph_type=GraphType.Dfg,
                            code_text=event.var,
                            file_path=file_path,
                            line_span=(event.span[0], event.span[2]),
                        )
                    )
                    graph.add_edge(GraphEdge(var_ids[event.var], value_id, EdgeType.Uses))
        last_line = max(last_line, getattr(stmt, "end_lineno", 0) or 0)

    # Cursor anchor: innermost AST node containing the cursor position,
    # falling back to the latest node that starts before it.
    cursor_line = len(window_lines)
    cursor_col = max(0, len(window_lines[-1]) if window_lines else 0)
    anchor = _locate_anchor(tree, node_ids, cursor_line, cursor_col)
    if anchor is None:
        anchor = sorted(graph.nodes)[0]
    graph.sort()
    return QueryGraph(graph=graph, cursor_anchor=anchor, code_text=window, file_path=file_path)


def _locate_anchor(
    tree: ast.Module, node_ids: dict[int, str], line: int, col: int
) -> str | None:
    best: tuple[int, int, str] | None = None
    latest: tuple[int, int, str] | None = None
    for node in ast.walk(tree):
        if id(node) not in node_ids:
            continue
        span = span_of(node)
        starts = (span[0], span[1])
        ends = (span[2], span[3])
        if starts <= (line, col) <= ends:
            size = (span[2] - span[0], span[3] - span[1])
            if best is None or size <= (best[0], best[1]):
                best = (size[0], size[1], node_ids[id(node)])
        if starts <= (line, col) and (latest is None or starts >= (latest[0], latest[1])):
            latest = (starts[0], starts[1], node_ids[id(node)])
    if best is not None:
        return best[2]
    if latest is not None:
        return latest[2]
    return None


# ---------------------------------------------------------------------------
# Node encoder
# ---------------------------------------------------------------------------


_WEIGHT_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def _seeded_weight(seed: int, d_in: int, d_out: int) -> np.ndarray:
    """Deterministic random linear map, cached (it is a pure function of the key)."""
    key = (seed, d_in, d_out)
    weight = _WEIGHT_CACHE.get(key)
    if weight is None:
        rng = np.random.Generator(np.random.PCG64(seed))
        weight = rng.standard_normal((d_in, d_out)) / np.sqrt(d_in)
        if len(_WEIGHT_CACHE) > 16:
            _WEIGHT_CACHE.clear()
        _WEIGHT_CACHE[key] = weight
    return weight


def encode_nodes(
    graph: CodeGraph,
    backend: EmbedderBackend,
    pe_dim: int,
    cfg: FusionConfig,
    node_ids: list[str] | None = None,
) -> tuple[list[str], np.ndarray]:
    """L rounds of mean neighbor aggregation with seeded linear maps and tanh.

    With zero layers the output equals the raw node features.  Nodes without
    neighbors keep their own features during aggregation.
    """
    if node_ids is None:
        node_ids = sorted(graph.nodes)
    structural = embed_graph(graph, backend, pe_dim, node_ids)
    features = structural.vectors.astype(np.float64)
    if cfg.gnn_layers == 0:
        return node_ids, features

    adjacency = subgraph_adjacency(graph, node_ids)
    degrees = adjacency.sum(axis=1)
    mean_agg = np.where(
        degrees[:, None] > 0,
        adjacency / np.where(degrees[:, None] > 0, degrees[:, None], 1.0),
        np.eye(len(node_ids)),
    )

    hidden = cfg.hidden_dim or features.shape[1]
    h = features
    for layer in range(cfg.gnn_layers):
        weight = _seeded_weight(cfg.seed + layer, h.shape[1], hidden)
        h = np.tanh(mean_agg @ h @ weight)
    return node_ids, h


@dataclass
class RetrievedEncoding:
    rows: list[tuple[str, str]]  # (subgraph_id, node_id) per row of matrix
    matrix: np.ndarray
    weights: dict[str, float]  # subgraph_id -> softmax weight


def aggregate_retrieved(
    encodings: list[tuple[str, list[str], np.ndarray]], scores: list[float]
) -> RetrievedEncoding:
    """Score-weighted aggregation that preserves node identity.

    Weights are the softmax of the rerank scores; each retrieved graph's
    rows are scaled by its weight and stacked, so attention columns keep
    addressing real nodes.
    """
    if not encodings:
        raise ConfigError("aggregate_retrieved requires at least one encoding")
    if len(encodings) != len(scores):
        raise ConfigError("one score per retrieved graph required")
    raw = np.asarray(scores, dtype=np.float64)
    shifted = np.exp(raw - raw.max())
    weights = shifted / shifted.sum()

    rows: list[tuple[str, str]] = []
    blocks = []
    weight_map: dict[str, float] = {}
    for (subgraph_id, node_ids, matrix), weight in zip(encodings, weights):
        weight_map[subgraph_id] = float(weight)
        rows.extend((subgraph_id, node_id) for node_id in node_ids)
        blocks.append(matrix * weight)
    return RetrievedEncoding(rows=rows, matrix=np.vstack(blocks), weights=weight_map)


def cross_attention(h_query: np.ndarray, h_retrieved: np.ndarray, dim: int | None = None) -> np.ndarray:
    """Row-wise softmax of the scaled dot products; each row sums to one."""
    if h_query.shape[1] != h_retrieved.shape[1]:
        raise ConfigError(
            f"encoder dimensions differ: query {h_query.shape[1]}, "
            f"retrieved {h_retrieved.shape[1]}"
        )
    scale = np.sqrt(dim or h_query.shape[1])
    logits = (h_query @ h_retrieved.T) / scale
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Fused graph assembly
# ---------------------------------------------------------------------------


@dataclass
class FusedGraph:
    graph: CodeGraph
    provenance: dict[str, str]  # node id -> "Query" | "Retrieved:<subgraph_id>"
    cross_edges: list[GraphEdge] = field(default_factory=list)
    merged_nodes: dict[str, str] = field(default_factory=dict)  # dropped id -> representative


def type_compatible(query_node: GraphNode, retrieved_node: GraphNode) -> bool:
    """Cross-graph edges connect only these node-type pairs."""
    q, r = query_node.node_type, retrieved_node.node_type
    if q is NodeType.Function and r is NodeType.Function:
        return True
    if q is NodeType.Expression and query_node.semantic_type == "call" and r is NodeType.Function:
        return True
    if r is NodeType.Expression and retrieved_node.semantic_type == "call" and q is NodeType.Function:
        return True
    if q is NodeType.Variable and r is NodeType.Variable:
        return query_node.semantic_type == retrieved_node.semantic_type
    if q is NodeType.Class and r is NodeType.Class:
        return True
    if q is NodeType.TypeDef and r is NodeType.TypeDef:
        return True
    return False


def _merge_key(node: GraphNode) -> tuple[str, str, str]:
    digest = hashlib.sha256(" ".join(node.code_text.split()).encode("utf-8")).hexdigest()
    return (node.node_type.value, node.semantic_type or "", digest)


def _merge_equivalent(node_ids: list[str], lookup: dict[str, GraphNode]) -> dict[str, str]:
    """Map each node to the representative of its semantic-equivalence class."""
    groups: dict[tuple[str, str, str], list[str]] = {}
    for node_id in node_ids:
        groups.setdefault(_merge_key(lookup[node_id]), []).append(node_id)
    mapping: dict[str, str] = {}
    for members in groups.values():
        representative = min(members)
        for member in members:
            mapping[member] = representative
    return mapping


def build_fused_graph(
    query: QueryGraph,
    repo_graph: CodeGraph,
    units: list[SubgraphUnit],
    attention: np.ndarray,
    query_rows: list[str],
    retrieved_rows: list[tuple[str, str]],
    cfg: FusionConfig,
) -> FusedGraph:
    """Union of query and retrieved graphs plus thresholded cross edges.

    Original edges are always preserved (re-homed when equivalent retrieved
    nodes merge); a cross edge (v_q, v_r) appears iff its attention weight
    exceeds theta and the endpoint types are compatible.
    """
    fused = CodeGraph(repo_name="fused")
    provenance: dict[str, str] = {}

    retrieved_node_ids: list[str] = []
    node_unit: dict[str, str] = {}
    for unit in units:
        for node_id in unit.node_ids:
            if node_id not in node_unit:
                node_unit[node_id] = unit.subgraph_id
                retrieved_node_ids.append(node_id)

    lookup = {node_id: repo_graph.nodes[node_id] for node_id in retrieved_node_ids}
    merge_map = _merge_equivalent(retrieved_node_ids, lookup)

    for node_id in query.graph.nodes:
        fused.add_node(query.graph.nodes[node_id])
        provenance[node_id] = "Query"
    for node_id in retrieved_node_ids:
        representative = merge_map[node_id]
        if representative == node_id:
            fused.add_node(lookup[node_id])
            provenance[node_id] = f"Retrieved:{node_unit[node_id]}"

    seen_edges: set[tuple[str, str, str]] = set()

    def add_edge_once(edge: GraphEdge) -> None:
        key = (edge.src, edge.dst, edge.edge_type.value)
        if key not in seen_edges:
            seen_edges.add(key)
            fused.add_edge(edge)

    for edge in query.graph.edges:
        add_edge_once(edge)
    member_set = set(retrieved_node_ids)
    for edge in repo_graph.edges:
        if edge.src in member_set and edge.dst in member_set:
            src = merge_map[edge.src]
            dst = merge_map[edge.dst]
            add_edge_once(GraphEdge(src, dst, edge.edge_type, edge.weight, edge.context))

    cross: dict[tuple[str, str], float] = {}
    if attention.size:
        for qi, q_node_id in enumerate(query_rows):
            q_node = query.graph.nodes[q_node_id]
            for rj, (_, r_node_id) in enumerate(retrieved_rows):
                value = float(attention[qi, rj])
                if value <= cfg.theta:
                    continue
                representative = merge_map.get(r_node_id, r_node_id)
                r_node = lookup.get(r_node_id)
                if r_node is None or not type_compatible(q_node, r_node):
                    continue
                key = (q_node_id, representative)
                cross[key] = max(cross.get(key, 0.0), value)

    cross_edges = []
    for (src, dst), weight in sorted(cross.items()):
        edge = GraphEdge(src, dst, EdgeType.CrossGraphFusion, weight=weight)
        cross_edges.append(edge)
        add_edge_once(edge)

    fused.sort()
    dropped = {node_id: rep for node_id, rep in merge_map.items() if node_id != rep}
    return FusedGraph(
        graph=fused, provenance=provenance, cross_edges=cross_edges, merged_nodes=dropped
    )


@dataclass
class FusionOutput:
    fused: FusedGraph
    attention: np.ndarray
    query_rows: list[str]
    retrieved_rows: list[tuple[str, str]]
    weights: dict[str, float]


def fuse(
    query: QueryGraph,
    repo_graph: CodeGraph,
    units: list[SubgraphUnit],
    scores: list[float],
    backend: EmbedderBackend,
    pe_dim: int,
    cfg: FusionConfig,
) -> FusionOutput:
    """Full fusion pipeline: encode, aggregate, attend, assemble."""
    query_rows, h_query = encode_nodes(query.graph, backend, pe_dim, cfg)
    if not units:
        empty = build_fused_graph(query, repo_graph, [], np.zeros((0, 0)), query_rows, [], cfg)
        return FusionOutput(empty, np.zeros((len(query_rows), 0)), query_rows, [], {})

    encodings = []
    for unit in units:
        node_ids, matrix = encode_nodes(repo_graph, backend, pe_dim, cfg, unit.node_ids)
        encodings.append((unit.subgraph_id, node_ids, matrix))
    aggregated = aggregate_retrieved(encodings, scores)
    attention = cross_attention(h_query, aggregated.matrix)
    fused = build_fused_graph(
        query, repo_graph, units, attention, query_rows, aggregated.rows, cfg
    )
    return FusionOutput(fused, attention, query_rows, aggregated.rows, aggregated.weights)
