"""Repository-level graph: folder/file skeleton plus in-repo import edges."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from ..errors import EmptyCorpusError
from ..model import CodeGraph, EdgeType, GraphEdge, GraphNode, GraphType, NodeType
from ..store import Diagnostic
from . import nid
from .source import LanguageFrontend, ParsedModule

_SKIP_DIRS = {"__pycache__", ".git", ".hg", ".svn", ".tox", ".venv", "venv", "node_modules"}


@dataclass
class RepoLevel:
    repo_name: str
    fragment: CodeGraph
    parsed: dict[str, ParsedModule]  # rel_path -> module summary
    file_nodes: dict[str, str] = field(default_factory=dict)  # rel_path -> File node id
    module_files: dict[str, str] = field(default_factory=dict)  # dotted module -> rel_path
    diagnostics: list[Diagnostic] = field(default_factory=list)


def discover_source_files(repo_root: Path, frontend: LanguageFrontend) -> list[str]:
    """Repo-relative posix paths of candidate source files, sorted."""
    if not repo_root.is_dir():
        raise OSError(f"repository root {repo_root} is not a readable directory")
    found = []
    for path in repo_root.rglob("*"):
        if not path.is_file() or path.suffix not in frontend.extensions:
            continue
        rel = path.relative_to(repo_root)
        if any(part.startswith(".") or part in _SKIP_DIRS for part in rel.parts):
            continue
        found.append(rel.as_posix())
    return sorted(found)


def build_repo_level(repo_root: str | Path, frontend: LanguageFrontend) -> RepoLevel:
    root = Path(repo_root)
    rel_paths = discover_source_files(root, frontend)
    if not rel_paths:
        raise EmptyCorpusError(f"no {frontend.name} source files under {root}")

    repo_name = root.resolve().name
    result = RepoLevel(repo_name=repo_name, fragment=CodeGraph(repo_name=repo_name), parsed={})
    graph = result.fragment

    for rel in rel_paths:
        try:
            text = (root / rel).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            result.diagnostics.append(Diagnostic(rel, 0, "read_error", str(exc)))
            continue
        try:
            parsed = frontend.parse_module(rel, text)
        except SyntaxError as exc:
            result.diagnostics.append(
                Diagnostic(rel, exc.lineno or 0, "parse_error", exc.msg or "syntax error")
            )
            continue
        result.parsed[rel] = parsed
        result.module_files[parsed.module_name] = rel

    if not result.parsed:
        raise EmptyCorpusError(f"no parseable {frontend.name} source files under {root}")

    # Folder skeleton over the indexed files; the root folder has path "".
    folders: set[str] = {""}
    for rel in result.parsed:
        parent = PurePosixPath(rel).parent
        while str(parent) != ".":
            folders.add(parent.as_posix())
            parent = parent.parent

    folder_ids: dict[str, str] = {}
    for folder in sorted(folders):
        fid = nid.folder_id(folder)
        folder_ids[folder] = fid
        graph.add_node(
            GraphNode(
                id=fid,
                node_type=NodeType.Folder,
                graph_type=GraphType.FolderStructure,
                code_text=folder or repo_name,
                file_path=folder,
                line_span=(1, 1),
            )
        )
    for folder in sorted(folders - {""}):
        parent = PurePosixPath(folder).parent.as_posix()
        parent = "" if parent == "." else parent
        graph.add_edge(GraphEdge(folder_ids[parent], folder_ids[folder], EdgeType.Contains))

    for rel, parsed in result.parsed.items():
        fid = nid.file_id(rel)
        result.file_nodes[rel] = fid
        line_count = parsed.text.count("\n") + 1
        graph.add_node(
            GraphNode(
                id=fid,
                node_type=NodeType.File,
                graph_type=GraphType.FolderStructure,
                code_text=rel,
                file_path=rel,
                line_span=(1, max(1, line_count)),
                semantic_type=parsed.module_name,
            )
        )
        parent = PurePosixPath(rel).parent.as_posix()
        parent = "" if parent == "." else parent
        graph.add_edge(GraphEdge(folder_ids[parent], fid, EdgeType.Contains))

    # Imports: one resolved statement per target file increments the weight.
    import_counts: dict[tuple[str, str], int] = {}
    for rel, parsed in result.parsed.items():
        for stmt in parsed.imports:
            targets: set[str] = set()
            if stmt.kind == "import":
                for module in stmt.names:
                    hit = _resolve_module(result.module_files, module)
                    if hit is not None:
                        targets.add(hit)
            else:
                for name in stmt.names:
                    hit = _resolve_module(result.module_files, f"{stmt.base}.{name}")
                    if hit is None:
                        hit = _resolve_module(result.module_files, stmt.base or "")
                    if hit is not None:
                        targets.add(hit)
                if stmt.is_star:
                    hit = _resolve_module(result.module_files, stmt.base or "")
                    if hit is not None:
                        targets.add(hit)
            for target in targets:
                if target != rel:
                    key = (rel, target)
                    import_counts[key] = import_counts.get(key, 0) + 1

    for (src_rel, dst_rel), count in sorted(import_counts.items()):
        graph.add_edge(
            GraphEdge(
                result.file_nodes[src_rel],
                result.file_nodes[dst_rel],
                EdgeType.Imports,
                weight=float(count),
            )
        )
    return result


def _resolve_module(module_files: dict[str, str], module: str) -> str | None:
    return module_files.get(module)
