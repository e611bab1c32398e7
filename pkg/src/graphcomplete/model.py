"""Core graph data model: typed nodes, typed edges, and the unified CodeGraph.

A repository is represented as one heterogeneous graph whose nodes carry a
``graph_type`` naming the level-specific subgraph they belong to (folder
structure, call graph, AST, CFG, ...) and whose edges are either intra-level
or members of the dedicated cross-level edge set that weaves the levels
together.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import GraphInvariantError


class NodeType(str, Enum):
    File = "File"
    Folder = "Folder"
    Class = "Class"
    Function = "Function"
    TypeDef = "TypeDef"
    Variable = "Variable"
    Statement = "Statement"
    Expression = "Expression"
    CfgBlock = "CfgBlock"
    DfgValue = "DfgValue"


class GraphType(str, Enum):
    FolderStructure = "FolderStructure"
    CrossFileDep = "CrossFileDep"
    CallGraph = "CallGraph"
    TypeDep = "TypeDep"
    ClassInheritance = "ClassInheritance"
    Ast = "Ast"
    Cfg = "Cfg"
    Dfg = "Dfg"


class EdgeType(str, Enum):
    Contains = "Contains"
    Imports = "Imports"
    Calls = "Calls"
    TypeUses = "TypeUses"
    Inherits = "Inherits"
    Implements = "Implements"
    AstChild = "AstChild"
    ControlFlow = "ControlFlow"
    DataFlow = "DataFlow"
    Defines = "Defines"
    Uses = "Uses"
    DeclaresFunction = "DeclaresFunction"
    TypeReference = "TypeReference"
    InterfaceInheritance = "InterfaceInheritance"
    AnchorsAst = "AnchorsAst"
    TypeAlignsDataflow = "TypeAlignsDataflow"
    AstToCfg = "AstToCfg"
    CfgToDfg = "CfgToDfg"
    CrossGraphFusion = "CrossGraphFusion"


#: Edge types whose endpoints must span two distinct graph_types.
CROSS_LEVEL_EDGE_TYPES = frozenset(
    {
        EdgeType.DeclaresFunction,
        EdgeType.TypeReference,
        EdgeType.InterfaceInheritance,
        EdgeType.AnchorsAst,
        EdgeType.TypeAlignsDataflow,
        EdgeType.AstToCfg,
        EdgeType.CfgToDfg,
    }
)

#: Node types permitted inside each level-specific subgraph.
_ALLOWED_NODE_TYPES: dict[GraphType, frozenset[NodeType]] = {
    GraphType.FolderStructure: frozenset({NodeType.Folder, NodeType.File}),
    GraphType.CrossFileDep: frozenset({NodeType.File}),
    GraphType.CallGraph: frozenset({NodeType.Function}),
    GraphType.TypeDep: frozenset({NodeType.TypeDef}),
    GraphType.ClassInheritance: frozenset({NodeType.Class}),
    GraphType.Ast: frozenset({NodeType.Statement, NodeType.Expression}),
    GraphType.Cfg: frozenset({NodeType.CfgBlock}),
    GraphType.Dfg: frozenset({NodeType.DfgValue, NodeType.Variable}),
}


def derive_node_id(file_path: str, kind: str, span: tuple[int, int, int, int]) -> str:
    """Derive a 128-bit node id from (repo-relative path, node kind, source span).

    The id is a deterministic function of its inputs so that two indexing
    runs over byte-identical input produce identical graphs.  Rendered as
    32 lowercase hex characters.
    """
    payload = f"{file_path}\x00{kind}\x00{span[0]}:{span[1]}:{span[2]}:{span[3]}"
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


@dataclass(frozen=True)
class StructuralFeatures:
    cyclomatic_complexity: int = 0
    nesting_depth: int = 0


@dataclass(frozen=True)
class GraphNode:
    id: str
    node_type: NodeType
    graph_type: GraphType
    code_text: str
    file_path: str
    line_span: tuple[int, int]
    semantic_type: str | None = None
    features: StructuralFeatures = field(default_factory=StructuralFeatures)

    def __post_init__(self) -> None:
        if self.line_span[0] > self.line_span[1]:
            raise GraphInvariantError(
                f"node {self.id}: line_span start {self.line_span[0]} "
                f"> end {self.line_span[1]}"
            )
        if not self.file_path and self.node_type is not NodeType.Folder:
            raise GraphInvariantError(f"node {self.id}: empty file_path on {self.node_type}")
        allowed = _ALLOWED_NODE_TYPES[self.graph_type]
        if self.node_type not in allowed:
            raise GraphInvariantError(
                f"node {self.id}: {self.node_type.value} not allowed in "
                f"{self.graph_type.value}"
            )

    @property
    def display_name(self) -> str:
        """Short human-readable label: semantic_type if set, else a code prefix."""
        if self.semantic_type:
            return self.semantic_type
        text = " ".join(self.code_text.split())
        return text[:40] if text else f"<{self.node_type.value.lower()}>"


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    edge_type: EdgeType
    weight: float = 1.0
    context: str | None = None

    def __post_init__(self) -> None:
        if not self.weight > 0.0:
            raise GraphInvariantError(
                f"edge {self.src}->{self.dst} ({self.edge_type.value}): "
                f"weight {self.weight} not positive"
            )

    def sort_key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.edge_type.value)


@dataclass
class CodeGraph:
    """Unified multi-relational hierarchical graph of one repository."""

    repo_name: str
    nodes: dict[str, GraphNode] = field(default_factory=dict)
    edges: list[GraphEdge] = field(default_factory=list)
    _undirected: dict[str, tuple[str, ...]] | None = field(
        default=None, repr=False, compare=False
    )

    @property
    def node_type_set(self) -> set[NodeType]:
        return {n.node_type for n in self.nodes.values()}

    @property
    def edge_type_set(self) -> set[EdgeType]:
        return {e.edge_type for e in self.edges}

    def add_node(self, node: GraphNode) -> GraphNode:
        existing = self.nodes.get(node.id)
        if existing is not None:
            if existing != node:
                raise GraphInvariantError(f"node id collision on {node.id}")
            return existing
        self.nodes[node.id] = node
        return node

    def add_edge(self, edge: GraphEdge) -> None:
        self.edges.append(edge)
        self._undirected = None

    def merge_fragment(self, other: "CodeGraph") -> None:
        for node in other.nodes.values():
            self.add_node(node)
        self.edges.extend(other.edges)
        self._undirected = None

    def undirected_neighbors(self) -> dict[str, tuple[str, ...]]:
        """Deduplicated neighbor lists over all edge types, cached."""
        if self._undirected is None:
            adjacency: dict[str, set[str]] = {}
            for edge in self.edges:
                if edge.src == edge.dst:
                    continue
                adjacency.setdefault(edge.src, set()).add(edge.dst)
                adjacency.setdefault(edge.dst, set()).add(edge.src)
            self._undirected = {
                node: tuple(sorted(neighbors)) for node, neighbors in adjacency.items()
            }
        return self._undirected

    def edges_by_type(self, edge_type: EdgeType) -> list[GraphEdge]:
        return [e for e in self.edges if e.edge_type is edge_type]

    def out_edges(self, node_id: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.src == node_id]

    def in_edges(self, node_id: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.dst == node_id]

    def nodes_of_type(self, node_type: NodeType) -> list[GraphNode]:
        return sorted(
            (n for n in self.nodes.values() if n.node_type is node_type),
            key=lambda n: n.id,
        )

    def sort(self) -> None:
        """Canonical order: nodes by id hex, edges by (src, dst, edge_type)."""
        self.nodes = dict(sorted(self.nodes.items()))
        self.edges.sort(key=GraphEdge.sort_key)

    def validate(self) -> None:
        """Check dangling edges and the cross-level edge discipline."""
        for edge in self.edges:
            src = self.nodes.get(edge.src)
            dst = self.nodes.get(edge.dst)
            if src is None or dst is None:
                raise GraphInvariantError(
                    f"dangling edge {edge.src}->{edge.dst} ({edge.edge_type.value})"
                )
            spans_levels = src.graph_type is not dst.graph_type
            if edge.edge_type in CROSS_LEVEL_EDGE_TYPES and not spans_levels:
                raise GraphInvariantError(
                    f"cross-level edge {edge.edge_type.value} within "
                    f"{src.graph_type.value}: {edge.src}->{edge.dst}"
                )
            if (
                edge.edge_type not in CROSS_LEVEL_EDGE_TYPES
                and edge.edge_type is not EdgeType.CrossGraphFusion
                and spans_levels
            ):
                raise GraphInvariantError(
                    f"intra-level edge {edge.edge_type.value} spans "
                    f"{src.graph_type.value}->{dst.graph_type.value}"
                )


def with_weight(edge: GraphEdge, weight: float) -> GraphEdge:
    return replace(edge, weight=weight)
