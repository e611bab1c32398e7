"""Orchestration: level builders, the cross-level weave, and the public API."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from ..model import CodeGraph, EdgeType, GraphEdge, NodeType, StructuralFeatures
from ..store import Diagnostic
from .function_level import FunctionFragment, build_function_fragment
from .module_level import ModuleLevel, build_module_level
from .repo_level import RepoLevel, build_repo_level
from .source import FunctionInfo, LanguageFrontend, ParsedModule, PythonFrontend

#: Node/edge types retained by the AST-only ablation.
_AST_ONLY_NODES = {
    NodeType.Folder,
    NodeType.File,
    NodeType.Function,
    NodeType.Statement,
    NodeType.Expression,
}
_AST_ONLY_EDGES = {
    EdgeType.Contains,
    EdgeType.AstChild,
    EdgeType.DeclaresFunction,
    EdgeType.AnchorsAst,
}


@dataclass
class BuildResult:
    graph: CodeGraph
    diagnostics: list[Diagnostic] = field(default_factory=list)
    call_sites_total: int = 0
    call_sites_resolved: int = 0


def build_function_level(
    parsed: ParsedModule, fn: FunctionInfo
) -> FunctionFragment:
    return build_function_fragment(parsed.rel_path, parsed.text, fn)


def weave_cross_level(
    repo: RepoLevel, modules: ModuleLevel, fragments: list[FunctionFragment]
) -> CodeGraph:
    """Merge the three levels and add every cross-level edge type."""
    graph = CodeGraph(repo_name=repo.repo_name)
    graph.merge_fragment(repo.fragment)
    graph.merge_fragment(modules.fragment)
    for fragment in fragments:
        graph.merge_fragment(fragment.graph)

    resolver = modules.resolver

    for rel, fn_id in modules.declares:
        graph.add_edge(GraphEdge(repo.file_nodes[rel], fn_id, EdgeType.DeclaresFunction))

    for fragment in fragments:
        graph.add_edge(
            GraphEdge(fragment.function_node_id, fragment.ast_root_id, EdgeType.AnchorsAst)
        )
        for stmt_id, block_id in fragment.stmt_blocks:
            graph.add_edge(GraphEdge(stmt_id, block_id, EdgeType.AstToCfg))
        for block_id, value_id in fragment.block_values:
            graph.add_edge(GraphEdge(block_id, value_id, EdgeType.CfgToDfg))
        # Annotated definitions align repository types with data-flow values.
        parsed = repo.parsed[fragment.rel_path]
        env = parsed.import_env()
        for value_id, chains in fragment.annotated_defs:
            for chain in chains:
                ref = resolver.resolve_parts(parsed, chain, env)
                if ref is not None and ref.kind in ("class", "alias"):
                    graph.add_edge(
                        GraphEdge(ref.node_id, value_id, EdgeType.TypeAlignsDataflow)
                    )
                    break
        # Structural features land on the owning Function node.
        fn_node = graph.nodes[fragment.function_node_id]
        graph.nodes[fragment.function_node_id] = replace(
            fn_node,
            features=StructuralFeatures(
                cyclomatic_complexity=fragment.cyclomatic,
                nesting_depth=fragment.nesting_depth,
            ),
        )

    # Cross-file type usages become explicit file-to-type reference edges.
    seen_refs: set[tuple[str, str]] = set()
    for rel, parsed in repo.parsed.items():
        env = parsed.import_env()
        file_id = repo.file_nodes[rel]
        for use in parsed.annotation_uses:
            ref = resolver.resolve_parts(parsed, use.parts, env)
            if ref is None or ref.kind not in ("class", "alias"):
                continue
            if ref.rel_path == rel:
                continue
            key = (file_id, ref.node_id)
            if key not in seen_refs:
                seen_refs.add(key)
                graph.add_edge(GraphEdge(file_id, ref.node_id, EdgeType.TypeReference))

    # Cross-file inheritance becomes an explicit file-to-base-class edge.
    seen_bases: set[tuple[str, str]] = set()
    for rel, base_node_id in modules.cross_file_bases:
        key = (repo.file_nodes[rel], base_node_id)
        if key not in seen_bases:
            seen_bases.add(key)
            graph.add_edge(
                GraphEdge(repo.file_nodes[rel], base_node_id, EdgeType.InterfaceInheritance)
            )

    graph.validate()
    graph.sort()
    return graph


def build_graph(
    repo_root: str | Path,
    frontend: LanguageFrontend | None = None,
    ast_only: bool = False,
) -> BuildResult:
    """Index one repository into its unified graph.

    Unparseable files are skipped with a diagnostic; unresolved call sites
    are counted but never fatal.
    """
    frontend = frontend or PythonFrontend()
    repo = build_repo_level(repo_root, frontend)
    modules = build_module_level(repo)
    fragments = []
    for rel in sorted(repo.parsed):
        parsed = repo.parsed[rel]
        for fn in parsed.functions:
            fragments.append(build_function_level(parsed, fn))
    graph = weave_cross_level(repo, modules, fragments)
    if ast_only:
        graph = restrict_to_ast(graph)
    return BuildResult(
        graph=graph,
        diagnostics=repo.diagnostics + modules.diagnostics,
        call_sites_total=modules.call_sites_total,
        call_sites_resolved=modules.call_sites_resolved,
    )


def restrict_to_ast(graph: CodeGraph) -> CodeGraph:
    """Ablation variant: keep only the AST view (plus the file/function skeleton)."""
    out = CodeGraph(repo_name=graph.repo_name)
    for node in graph.nodes.values():
        if node.node_type in _AST_ONLY_NODES:
            out.add_node(node)
    for edge in graph.edges:
        if (
            edge.edge_type in _AST_ONLY_EDGES
            and edge.src in out.nodes
            and edge.dst in out.nodes
        ):
            out.add_edge(edge)
    out.validate()
    out.sort()
    return out
