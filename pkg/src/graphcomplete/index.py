"""Vector indexes over per-function subgraph units.

Semantic vectors live in a hierarchical navigable small-world (HNSW) graph
for approximate search; pooled structural vectors live in a flat exact
index.  Both are immutable after build and persist as line-delimited JSON
with a versioned header.  Construction is fully deterministic: insertion
order is sorted unit ids and layer assignment derives from the entry id
hash, so rebuilds are byte-identical.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedder import DEFAULT_PE_DIM, EmbedderBackend, embed_graph, embed_text
from .errors import DecodeError
from .model import CodeGraph, EdgeType, NodeType
from .store import Diagnostic

INDEX_FORMAT_VERSION = 1

DEFAULT_HNSW_M = 32
DEFAULT_EF_CONSTRUCTION = 200
DEFAULT_EF_SEARCH = 256

SUBGRAPH_HOPS = 2
SUBGRAPH_NODE_CAP = 200
_UNIT_TEXT_CAP = 8000

#: Edge types traversed when cutting a function's neighborhood subgraph.
#: The anchoring edges are included so the function's own AST/CFG/DFG levels
#: are reachable from its Function node.
UNIT_EDGE_TYPES = frozenset(
    {
        EdgeType.Calls,
        EdgeType.AstChild,
        EdgeType.ControlFlow,
        EdgeType.DataFlow,
        EdgeType.Inherits,
        EdgeType.TypeUses,
        EdgeType.AnchorsAst,
        EdgeType.AstToCfg,
        EdgeType.CfgToDfg,
    }
)


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return (matrix / safe).astype(np.float32)


def _normalize(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return np.zeros_like(vector, dtype=np.float32)
    return (vector / norm).astype(np.float32)


# ---------------------------------------------------------------------------
# HNSW semantic index
# ---------------------------------------------------------------------------


class HnswIndex:
    """Approximate nearest-neighbor index over cosine similarity."""

    def __init__(
        self,
        dim: int,
        m: int = DEFAULT_HNSW_M,
        ef_construction: int = DEFAULT_EF_CONSTRUCTION,
        ef_search: int = DEFAULT_EF_SEARCH,
    ):
        self.dim = dim
        self.m = m
        self.m0 = 2 * m
        self.ef_construction = ef_construction
        self.ef_search = ef_search
        self.ml = 1.0 / math.log(m)
        self.ids: list[str] = []
        self._id_index: dict[str, int] = {}
        self._matrix = np.zeros((64, dim), dtype=np.float32)
        self.levels: list[int] = []
        self.neighbors: list[list[list[int]]] = []  # node -> layer -> neighbor indices
        self.entry_point: int | None = None
        self.max_level: int = -1

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def vectors(self) -> np.ndarray:
        return self._matrix[: len(self.ids)]

    def _store_vector(self, normalized: np.ndarray) -> None:
        count = len(self.ids) - 1
        if count >= self._matrix.shape[0]:
            grown = np.zeros((max(count + 1, self._matrix.shape[0] * 2), self.dim), dtype=np.float32)
            grown[:count] = self._matrix[:count]
            self._matrix = grown
        self._matrix[count] = normalized

    def _deterministic_level(self, entry_id: str) -> int:
        digest = hashlib.blake2b(entry_id.encode("utf-8"), digest_size=8).digest()
        uniform = (int.from_bytes(digest, "big") + 1) / float(2**64 + 2)
        return int(-math.log(uniform) * self.ml)

    def _distances(self, query: np.ndarray, indices: list[int]) -> np.ndarray:
        return 1.0 - self.vectors[indices] @ query

    def _search_layer(
        self, query: np.ndarray, entry_points: list[int], layer: int, ef: int
    ) -> list[tuple[float, int]]:
        visited = set(entry_points)
        dists = self._distances(query, entry_points)
        candidates = [(float(d), idx) for d, idx in zip(dists, entry_points)]
        heapq.heapify(candidates)
        best = [(-d, idx) for d, idx in candidates]
        heapq.heapify(best)

        while candidates:
            dist, idx = heapq.heappop(candidates)
            if best and dist > -best[0][0] and len(best) >= ef:
                break
            fresh = [n for n in self.neighbors[idx][layer] if n not in visited]
            if not fresh:
                continue
            visited.update(fresh)
            for n_idx, n_dist in zip(fresh, self._distances(query, fresh)):
                n_dist = float(n_dist)
                if len(best) < ef:
                    heapq.heappush(candidates, (n_dist, n_idx))
                    heapq.heappush(best, (-n_dist, n_idx))
                elif n_dist < -best[0][0]:
                    heapq.heappush(candidates, (n_dist, n_idx))
                    heapq.heappush(best, (-n_dist, n_idx))
                    heapq.heappop(best)
        result = sorted(((-d, idx) for d, idx in best), key=lambda t: (t[0], self.ids[t[1]]))
        return result

    def _select_neighbors(self, candidates: list[tuple[float, int]], m: int) -> list[int]:
        """Diversity-aware selection: keep candidates closer to the query than
        to any already-selected neighbor; refill from the pruned set."""
        ordered = sorted(candidates, key=lambda t: (t[0], self.ids[t[1]]))
        if len(ordered) <= m:
            return [idx for _, idx in ordered]
        indices = [idx for _, idx in ordered]
        vecs = self.vectors[indices]
        pairwise = 1.0 - vecs @ vecs.T
        min_to_selected = np.full(len(ordered), np.inf)
        selected: list[int] = []
        pruned: list[int] = []
        for pos, (dist, _) in enumerate(ordered):
            if len(selected) == m:
                break
            if not selected or dist < min_to_selected[pos]:
                selected.append(pos)
                np.minimum(min_to_selected, pairwise[:, pos], out=min_to_selected)
            else:
                pruned.append(pos)
        out = [indices[pos] for pos in selected]
        for pos in pruned:
            if len(out) == m:
                break
            out.append(indices[pos])
        return out

    def _prune_neighbors(self, node: int, layer: int, cap: int) -> None:
        """Keep the ``cap`` nearest neighbors, ties broken by entry id."""
        others = self.neighbors[node][layer]
        dists = self._distances(self.vectors[node], others)
        order = sorted(range(len(others)), key=lambda i: (float(dists[i]), self.ids[others[i]]))
        self.neighbors[node][layer] = [others[i] for i in order[:cap]]

    def add(self, entry_id: str, vector: np.ndarray) -> None:
        if vector.shape != (self.dim,):
            raise ValueError(f"vector shape {vector.shape} != ({self.dim},)")
        if entry_id in self._id_index:
            raise ValueError(f"duplicate index entry {entry_id}")
        idx = len(self.ids)
        normalized = _normalize(np.asarray(vector, dtype=np.float32))
        self.ids.append(entry_id)
        self._id_index[entry_id] = idx
        self._store_vector(normalized)
        level = self._deterministic_level(entry_id)
        self.levels.append(level)
        self.neighbors.append([[] for _ in range(level + 1)])

        if self.entry_point is None:
            self.entry_point = idx
            self.max_level = level
            return

        query = normalized
        current = [self.entry_point]
        for layer in range(self.max_level, level, -1):
            found = self._search_layer(query, current, layer, 1)
            current = [found[0][1]]

        for layer in range(min(level, self.max_level), -1, -1):
            found = self._search_layer(query, current, layer, self.ef_construction)
            m = self.m0 if layer == 0 else self.m
            chosen = self._select_neighbors(found, m)
            for neighbor in chosen:
                self.neighbors[idx][layer].append(neighbor)
                self.neighbors[neighbor][layer].append(idx)
                cap = self.m0 if layer == 0 else self.m
                if len(self.neighbors[neighbor][layer]) > cap:
                    self._prune_neighbors(neighbor, layer, cap)
            current = chosen
        if level > self.max_level:
            self.entry_point = idx
            self.max_level = level

    def search(self, query: np.ndarray, k: int, ef_search: int | None = None) -> list[tuple[str, float]]:
        """Top-k (id, cosine score) pairs, scores descending."""
        if len(self.ids) == 0 or k < 1:
            return []
        ef = max(ef_search or self.ef_search, k)
        q = _normalize(np.asarray(query, dtype=np.float32))
        current = [self.entry_point]
        for layer in range(self.max_level, 0, -1):
            found = self._search_layer(q, current, layer, 1)
            current = [found[0][1]]
        found = self._search_layer(q, current, 0, ef)
        out = []
        for dist, idx in found[:k]:
            out.append((self.ids[idx], 1.0 - dist))
        return out

    def vector_for(self, entry_id: str) -> np.ndarray | None:
        idx = self._id_index.get(entry_id)
        return None if idx is None else self.vectors[idx]

    def save(self, path: str | Path) -> None:
        header = {
            "format_version": INDEX_FORMAT_VERSION,
            "kind": "hnsw",
            "dim": self.dim,
            "m": self.m,
            "ef_construction": self.ef_construction,
            "ef_search": self.ef_search,
            "entry_point": self.entry_point,
            "max_level": self.max_level,
            "count": len(self.ids),
        }
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for idx, entry_id in enumerate(self.ids):
            record = {
                "id": entry_id,
                "level": self.levels[idx],
                "vector": [float(x) for x in self.vectors[idx]],
                "neighbors": self.neighbors[idx],
            }
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "HnswIndex":
        lines = _read_index_lines(path, "hnsw")
        header = json.loads(lines[0])
        index = cls(
            dim=header["dim"],
            m=header["m"],
            ef_construction=header["ef_construction"],
            ef_search=header["ef_search"],
        )
        vectors = []
        try:
            for line in lines[1:]:
                record = json.loads(line)
                index._id_index[record["id"]] = len(index.ids)
                index.ids.append(record["id"])
                index.levels.append(record["level"])
                index.neighbors.append(record["neighbors"])
                vectors.append(np.asarray(record["vector"], dtype=np.float32))
        except (json.JSONDecodeError, KeyError) as exc:
            raise DecodeError(f"semantic index {path}: corrupt record: {exc}") from exc
        if len(index.ids) != header["count"]:
            raise DecodeError(f"semantic index {path}: truncated")
        if vectors:
            index._matrix = np.vstack(vectors)
        index.entry_point = header["entry_point"]
        index.max_level = header["max_level"]
        return index


# ---------------------------------------------------------------------------
# Flat exact structural index
# ---------------------------------------------------------------------------


class FlatIndex:
    """Exact cosine search: always identical to brute force."""

    def __init__(self, dim: int):
        self.dim = dim
        self.ids: list[str] = []
        self._id_index: dict[str, int] = {}
        self._matrix = np.zeros((64, dim), dtype=np.float32)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def vectors(self) -> np.ndarray:
        return self._matrix[: len(self.ids)]

    def add(self, entry_id: str, vector: np.ndarray) -> None:
        if vector.shape != (self.dim,):
            raise ValueError(f"vector shape {vector.shape} != ({self.dim},)")
        if entry_id in self._id_index:
            raise ValueError(f"duplicate index entry {entry_id}")
        idx = len(self.ids)
        self.ids.append(entry_id)
        self._id_index[entry_id] = idx
        if idx >= self._matrix.shape[0]:
            grown = np.zeros((self._matrix.shape[0] * 2, self.dim), dtype=np.float32)
            grown[:idx] = self._matrix[:idx]
            self._matrix = grown
        self._matrix[idx] = _normalize(np.asarray(vector, dtype=np.float32))

    def search(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        if len(self.ids) == 0 or k < 1:
            return []
        q = _normalize(np.asarray(query, dtype=np.float32))
        scores = self.vectors @ q
        order = sorted(range(len(self.ids)), key=lambda i: (-float(scores[i]), self.ids[i]))
        return [(self.ids[i], float(scores[i])) for i in order[:k]]

    def vector_for(self, entry_id: str) -> np.ndarray | None:
        idx = self._id_index.get(entry_id)
        return None if idx is None else self.vectors[idx]

    def save(self, path: str | Path) -> None:
        header = {
            "format_version": INDEX_FORMAT_VERSION,
            "kind": "flat",
            "dim": self.dim,
            "count": len(self.ids),
        }
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        for idx, entry_id in enumerate(self.ids):
            record = {"id": entry_id, "vector": [float(x) for x in self.vectors[idx]]}
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FlatIndex":
        lines = _read_index_lines(path, "flat")
        header = json.loads(lines[0])
        index = cls(dim=header["dim"])
        vectors = []
        try:
            for line in lines[1:]:
                record = json.loads(line)
                index._id_index[record["id"]] = len(index.ids)
                index.ids.append(record["id"])
                vectors.append(np.asarray(record["vector"], dtype=np.float32))
        except (json.JSONDecodeError, KeyError) as exc:
            raise DecodeError(f"structural index {path}: corrupt record: {exc}") from exc
        if len(index.ids) != header["count"]:
            raise DecodeError(f"structural index {path}: truncated")
        if vectors:
            index._matrix = np.vstack(vectors)
        return index


def _read_index_lines(path: str | Path, kind: str) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DecodeError(f"cannot read index file {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines:
        raise DecodeError(f"index file {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DecodeError(f"index file {path}: bad header: {exc}") from exc
    if header.get("format_version") != INDEX_FORMAT_VERSION or header.get("kind") != kind:
        raise DecodeError(
            f"index file {path}: expected {kind} v{INDEX_FORMAT_VERSION}, "
            f"got {header.get('kind')} v{header.get('format_version')}"
        )
    return lines


# ---------------------------------------------------------------------------
# Subgraph units
# ---------------------------------------------------------------------------


@dataclass
class SubgraphUnit:
    subgraph_id: str
    anchor: str  # Function node id
    node_ids: list[str]
    code_text: str
    source_digest: str
    file_path: str = ""
    line_span: tuple[int, int] = (1, 1)


def cut_unit(graph: CodeGraph, anchor_id: str, adjacency: dict[str, list[str]]) -> SubgraphUnit:
    """Breadth-first neighborhood of a Function anchor, truncated by hop then id."""
    members = [anchor_id]
    seen = {anchor_id}
    frontier = [anchor_id]
    for _ in range(SUBGRAPH_HOPS):
        next_frontier = []
        for node_id in frontier:
            for neighbor in adjacency.get(node_id, ()):
                if neighbor not in seen:
                    seen.add(neighbor)
                    next_frontier.append(neighbor)
        next_frontier.sort()
        for node_id in next_frontier:
            if len(members) >= SUBGRAPH_NODE_CAP:
                break
            members.append(node_id)
        frontier = next_frontier
        if len(members) >= SUBGRAPH_NODE_CAP:
            break

    anchor_node = graph.nodes[anchor_id]
    texts = [anchor_node.code_text]
    for node_id in members:
        if node_id == anchor_id:
            continue
        node = graph.nodes[node_id]
        if node.node_type in (NodeType.Function, NodeType.Class):
            texts.append(node.code_text)
    code_text = "\n\n".join(texts)[:_UNIT_TEXT_CAP]
    return SubgraphUnit(
        subgraph_id=anchor_id,
        anchor=anchor_id,
        node_ids=members,
        code_text=code_text,
        source_digest=hashlib.sha256(code_text.encode("utf-8")).hexdigest(),
        file_path=anchor_node.file_path,
        line_span=anchor_node.line_span,
    )


def _unit_adjacency(graph: CodeGraph) -> dict[str, list[str]]:
    adjacency: dict[str, set[str]] = {}
    for edge in graph.edges:
        if edge.edge_type not in UNIT_EDGE_TYPES:
            continue
        adjacency.setdefault(edge.src, set()).add(edge.dst)
        adjacency.setdefault(edge.dst, set()).add(edge.src)
    return {node: sorted(neighbors) for node, neighbors in adjacency.items()}


@dataclass
class IndexBundle:
    semantic: HnswIndex
    structural: FlatIndex
    units: dict[str, SubgraphUnit]
    pe_dim: int = DEFAULT_PE_DIM
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def unit_order(self) -> list[str]:
        return sorted(self.units)


def build_indexes(
    graph: CodeGraph,
    backend: EmbedderBackend,
    pe_dim: int = DEFAULT_PE_DIM,
    m: int = DEFAULT_HNSW_M,
    ef_construction: int = DEFAULT_EF_CONSTRUCTION,
    ef_search: int = DEFAULT_EF_SEARCH,
) -> IndexBundle:
    """One unit per Function node; one semantic and one structural entry per unit."""
    semantic = HnswIndex(dim=backend.dim, m=m, ef_construction=ef_construction, ef_search=ef_search)
    structural = FlatIndex(dim=backend.dim + pe_dim)
    bundle = IndexBundle(semantic=semantic, structural=structural, units={}, pe_dim=pe_dim)

    adjacency = _unit_adjacency(graph)
    functions = graph.nodes_of_type(NodeType.Function)
    if not functions:
        bundle.diagnostics.append(
            Diagnostic("", 0, "no_units", "repository has no functions to index")
        )
    for fn_node in functions:
        unit = cut_unit(graph, fn_node.id, adjacency)
        try:
            sem_vec = embed_text(unit.code_text or fn_node.display_name, backend)
            struct_vec = embed_graph(graph, backend, pe_dim, unit.node_ids)
        except Exception as exc:  # skip unit, keep indexing
            bundle.diagnostics.append(
                Diagnostic(fn_node.file_path, fn_node.line_span[0], "embedding_error", str(exc))
            )
            continue
        bundle.units[unit.subgraph_id] = unit
        semantic.add(unit.subgraph_id, sem_vec.values)
        structural.add(unit.subgraph_id, struct_vec.pooled)
    return bundle


def save_units(units: dict[str, SubgraphUnit], path: str | Path) -> None:
    header = {
        "format_version": INDEX_FORMAT_VERSION,
        "kind": "units",
        "count": len(units),
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for unit_id in sorted(units):
        unit = units[unit_id]
        record = {
            "subgraph_id": unit.subgraph_id,
            "anchor": unit.anchor,
            "node_ids": unit.node_ids,
            "source_digest": unit.source_digest,
            "code_text": unit.code_text,
            "file_path": unit.file_path,
            "line_span": [unit.line_span[0], unit.line_span[1]],
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_units(path: str | Path) -> dict[str, SubgraphUnit]:
    lines = _read_index_lines(path, "units")
    header = json.loads(lines[0])
    units: dict[str, SubgraphUnit] = {}
    try:
        for line in lines[1:]:
            record = json.loads(line)
            unit = SubgraphUnit(
                subgraph_id=record["subgraph_id"],
                anchor=record["anchor"],
                node_ids=record["node_ids"],
                code_text=record["code_text"],
                source_digest=record["source_digest"],
                file_path=record.get("file_path", ""),
                line_span=tuple(record.get("line_span", (1, 1))),
            )
            units[unit.subgraph_id] = unit
    except (json.JSONDecodeError, KeyError) as exc:
        raise DecodeError(f"unit catalog {path}: corrupt record: {exc}") from exc
    if len(units) != header["count"]:
        raise DecodeError(f"unit catalog {path}: truncated")
    return units
