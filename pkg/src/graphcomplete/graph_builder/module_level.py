"""Module-level graph: functions, classes, type aliases and their relations.

Call resolution is purely static and name/import based.  Every call site
either produces at least one Calls edge or exactly one diagnostic, so the
two counts are conserved against the number of call sites.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from ..model import CodeGraph, EdgeType, GraphEdge, GraphNode, GraphType, NodeType
from ..store import Diagnostic
from . import nid
from .repo_level import RepoLevel
from .source import ClassInfo, FunctionInfo, ParsedModule, attribute_parts, dotted

_OVERRIDE_FANOUT_CAP = 4


@dataclass(frozen=True)
class SymbolRef:
    kind: str  # "function" | "class" | "alias"
    rel_path: str
    node_id: str
    qualname: str
    info: object


@dataclass
class ModuleLevel:
    fragment: CodeGraph
    resolver: "SymbolResolver"
    function_nodes: dict[tuple[str, str], str] = field(default_factory=dict)
    declares: list[tuple[str, str]] = field(default_factory=list)  # (rel_path, fn node)
    cross_file_bases: list[tuple[str, str]] = field(default_factory=list)  # (rel, class node)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    call_sites_total: int = 0
    call_sites_resolved: int = 0


class SymbolResolver:
    """Static name resolution over the parsed modules of one repository."""

    def __init__(self, repo: RepoLevel):
        self.repo = repo
        self.functions: dict[tuple[str, str], SymbolRef] = {}
        self.classes: dict[tuple[str, str], SymbolRef] = {}
        self.aliases: dict[tuple[str, str], SymbolRef] = {}
        self.subclasses: dict[str, list[SymbolRef]] = {}
        for rel, parsed in repo.parsed.items():
            for fn in parsed.functions:
                ref = SymbolRef(
                    "function", rel, nid.function_id(rel, fn.qualname, fn.span), fn.qualname, fn
                )
                self.functions[(rel, fn.qualname)] = ref
            for cls in parsed.classes:
                ref = SymbolRef(
                    "class", rel, nid.class_id(rel, cls.qualname, cls.span), cls.qualname, cls
                )
                self.classes[(rel, cls.qualname)] = ref
            for alias in parsed.aliases:
                ref = SymbolRef(
                    "alias", rel, nid.alias_id(rel, alias.name, alias.span), alias.name, alias
                )
                self.aliases[(rel, alias.name)] = ref

    def module(self, dotted_name: str) -> ParsedModule | None:
        rel = self.repo.module_files.get(dotted_name)
        return self.repo.parsed.get(rel) if rel else None

    def top_level(self, parsed: ParsedModule, name: str) -> SymbolRef | None:
        """Resolve a top-level symbol of one module by unqualified name."""
        rel = parsed.rel_path
        for table in (self.functions, self.classes, self.aliases):
            ref = table.get((rel, name))
            if ref is not None:
                return ref
        return None

    def lookup_name(self, parsed: ParsedModule, name: str, env: dict[str, str]) -> SymbolRef | None:
        """Resolve a bare name in module scope: local defs, imports, star imports."""
        local = self.top_level(parsed, name)
        if local is not None:
            return local
        target = env.get(name)
        if target is not None:
            ref = self.resolve_dotted(tuple(target.split(".")))
            if ref is not None:
                return ref
        for star_module in parsed.star_imports:
            star = self.module(star_module)
            if star is not None:
                ref = self.top_level(star, name)
                if ref is not None:
                    return ref
        return None

    def resolve_dotted(self, parts: tuple[str, ...]) -> SymbolRef | None:
        """Resolve an absolute dotted path to a function/class/alias symbol."""
        for split in range(len(parts) - 1, 0, -1):
            module = self.module(".".join(parts[:split]))
            if module is None:
                continue
            remainder = parts[split:]
            ref = self.top_level(module, remainder[0])
            if ref is None:
                continue
            if len(remainder) == 1:
                return ref
            if len(remainder) == 2 and ref.kind == "class":
                method = self.method_in_mro(ref, remainder[1])
                if method is not None:
                    return method
            return None
        # The whole path may be one module; callable modules do not resolve.
        return None

    def class_bases(self, cls_ref: SymbolRef) -> list[SymbolRef]:
        info: ClassInfo = cls_ref.info  # type: ignore[assignment]
        parsed = self.repo.parsed[cls_ref.rel_path]
        env = parsed.import_env()
        out = []
        for base_parts in info.bases:
            ref = self.resolve_parts(parsed, base_parts, env)
            if ref is not None and ref.kind == "class":
                out.append(ref)
        return out

    def method_in_mro(self, cls_ref: SymbolRef, method: str) -> SymbolRef | None:
        """Breadth-first lookup through the statically known base classes."""
        queue = [cls_ref]
        seen = set()
        while queue:
            current = queue.pop(0)
            if current.node_id in seen:
                continue
            seen.add(current.node_id)
            ref = self.functions.get((current.rel_path, f"{current.qualname}.{method}"))
            if ref is not None:
                return ref
            queue.extend(self.class_bases(current))
        return None

    def overrides(self, cls_ref: SymbolRef, method: str) -> list[SymbolRef]:
        """Methods overriding ``method`` in statically known subclasses."""
        found = []
        for sub in self.subclasses.get(cls_ref.node_id, []):
            ref = self.functions.get((sub.rel_path, f"{sub.qualname}.{method}"))
            if ref is not None:
                found.append(ref)
            found.extend(self.overrides(sub, method))
        found.sort(key=lambda r: (r.rel_path, r.qualname))
        return found

    def resolve_parts(
        self, parsed: ParsedModule, parts: tuple[str, ...], env: dict[str, str]
    ) -> SymbolRef | None:
        """Resolve a (possibly dotted) name used inside one module."""
        if len(parts) == 1:
            return self.lookup_name(parsed, parts[0], env)
        head = parts[0]
        target = env.get(head)
        if target is not None:
            return self.resolve_dotted(tuple(target.split(".")) + parts[1:])
        ref = self.top_level(parsed, head)
        if ref is not None and ref.kind == "class" and len(parts) == 2:
            return self.method_in_mro(ref, parts[1])
        return self.resolve_dotted(parts)


def _local_annotations(fn: FunctionInfo) -> dict[str, tuple[str, ...]]:
    """var name -> dotted annotation parts, from params and annotated assigns."""
    out: dict[str, tuple[str, ...]] = {}
    node = fn.node
    args = node.args
    for arg in [*args.posonlyargs, *args.args, *args.kwonlyargs, *filter(None, [args.vararg, args.kwarg])]:
        if arg.annotation is not None:
            parts = attribute_parts(arg.annotation)
            if parts is not None:
                out[arg.arg] = parts
    for sub in ast.walk(node):
        if isinstance(sub, ast.AnnAssign) and isinstance(sub.target, ast.Name):
            parts = attribute_parts(sub.annotation)
            if parts is not None:
                out.setdefault(sub.target.id, parts)
    return out


def build_module_level(repo: RepoLevel) -> ModuleLevel:
    resolver = SymbolResolver(repo)
    result = ModuleLevel(fragment=CodeGraph(repo_name=repo.repo_name), resolver=resolver)
    graph = result.fragment

    for rel, parsed in repo.parsed.items():
        for fn in parsed.functions:
            fn_id = nid.function_id(rel, fn.qualname, fn.span)
            result.function_nodes[(rel, fn.qualname)] = fn_id
            graph.add_node(
                GraphNode(
                    id=fn_id,
                    node_type=NodeType.Function,
                    graph_type=GraphType.CallGraph,
                    code_text=fn.source,
                    file_path=rel,
                    line_span=(fn.span[0], fn.span[2]),
                    semantic_type=fn.signature,
                )
            )
            result.declares.append((rel, fn_id))
        for cls in parsed.classes:
            graph.add_node(
                GraphNode(
                    id=nid.class_id(rel, cls.qualname, cls.span),
                    node_type=NodeType.Class,
                    graph_type=GraphType.ClassInheritance,
                    code_text=cls.source,
                    file_path=rel,
                    line_span=(cls.span[0], cls.span[2]),
                    semantic_type=cls.signature,
                )
            )
        for alias in parsed.aliases:
            graph.add_node(
                GraphNode(
                    id=nid.alias_id(rel, alias.name, alias.span),
                    node_type=NodeType.TypeDef,
                    graph_type=GraphType.TypeDep,
                    code_text=alias.source,
                    file_path=rel,
                    line_span=(alias.span[0], alias.span[2]),
                    semantic_type=alias.name,
                )
            )

    # Inheritance: resolved statically; interface-like bases yield Implements.
    for rel, parsed in repo.parsed.items():
        for cls in parsed.classes:
            cls_ref = resolver.classes[(rel, cls.qualname)]
            for base in resolver.class_bases(cls_ref):
                base_info: ClassInfo = base.info  # type: ignore[assignment]
                edge_type = EdgeType.Implements if base_info.is_interface_like else EdgeType.Inherits
                graph.add_edge(GraphEdge(cls_ref.node_id, base.node_id, edge_type))
                resolver.subclasses.setdefault(base.node_id, []).append(cls_ref)
                if base.rel_path != rel:
                    result.cross_file_bases.append((rel, base.node_id))

    # Type alias dependencies.
    for rel, parsed in repo.parsed.items():
        env = parsed.import_env()
        for alias in parsed.aliases:
            src_ref = resolver.aliases[(rel, alias.name)]
            seen: set[str] = set()
            for chain in alias.referenced:
                ref = resolver.resolve_parts(parsed, chain, env)
                if (
                    ref is not None
                    and ref.kind == "alias"
                    and ref.node_id != src_ref.node_id
                    and ref.node_id not in seen
                ):
                    seen.add(ref.node_id)
                    graph.add_edge(GraphEdge(src_ref.node_id, ref.node_id, EdgeType.TypeUses))

    _build_calls(repo, result)
    return result


def _build_calls(repo: RepoLevel, result: ModuleLevel) -> None:
    resolver = result.resolver
    graph = result.fragment
    counts: dict[tuple[str, str], int] = {}
    contexts: dict[tuple[str, str], str] = {}

    for rel, parsed in repo.parsed.items():
        env = parsed.import_env()
        fn_by_qualname = {fn.qualname: fn for fn in parsed.functions}
        annotations_cache: dict[str, dict[str, tuple[str, ...]]] = {}

        for site in parsed.calls:
            caller = fn_by_qualname.get(site.caller)
            if caller is None:
                continue
            result.call_sites_total += 1
            caller_id = result.function_nodes[(rel, site.caller)]
            targets = _resolve_call(
                resolver, parsed, caller, site.parts, env, annotations_cache
            )
            if targets:
                result.call_sites_resolved += 1
                for target in targets:
                    key = (caller_id, target.node_id)
                    counts[key] = counts.get(key, 0) + 1
                    contexts.setdefault(key, site.arg_preview)
            else:
                callee = dotted(site.parts) if site.parts else "<dynamic>"
                result.diagnostics.append(
                    Diagnostic(rel, site.line, "unresolved_call", f"cannot resolve callee {callee}")
                )

    for (src, dst), count in sorted(counts.items()):
        graph.add_edge(
            GraphEdge(src, dst, EdgeType.Calls, weight=float(count), context=contexts[(src, dst)])
        )


def _resolve_call(
    resolver: SymbolResolver,
    parsed: ParsedModule,
    caller: FunctionInfo,
    parts: tuple[str, ...] | None,
    env: dict[str, str],
    annotations_cache: dict[str, dict[str, tuple[str, ...]]],
) -> list[SymbolRef]:
    if parts is None:
        return []
    rel = parsed.rel_path

    def as_callable(ref: SymbolRef | None) -> list[SymbolRef]:
        if ref is None:
            return []
        if ref.kind == "function":
            return [ref]
        if ref.kind == "class":
            init = resolver.method_in_mro(ref, "__init__")
            return [init] if init is not None else []
        return []

    if len(parts) == 1:
        name = parts[0]
        nested = resolver.functions.get((rel, f"{caller.qualname}.{name}"))
        if nested is not None:
            return [nested]
        return as_callable(resolver.lookup_name(parsed, name, env))

    head = parts[0]
    if head in ("self", "cls") and caller.class_qualname is not None and len(parts) == 2:
        cls_ref = resolver.classes.get((rel, caller.class_qualname))
        if cls_ref is None:
            return []
        method = resolver.method_in_mro(cls_ref, parts[1])
        if method is None:
            return []
        targets = [method]
        for override in resolver.overrides(cls_ref, parts[1]):
            if override.node_id != method.node_id and len(targets) < _OVERRIDE_FANOUT_CAP:
                targets.append(override)
        return targets

    # Receiver with a statically known annotated type: var.method(...).
    if len(parts) == 2:
        if caller.qualname not in annotations_cache:
            annotations_cache[caller.qualname] = _local_annotations(caller)
        ann = annotations_cache[caller.qualname].get(head)
        if ann is not None:
            receiver = resolver.resolve_parts(parsed, ann, env)
            if receiver is not None and receiver.kind == "class":
                method = resolver.method_in_mro(receiver, parts[1])
                if method is not None:
                    return [method]

    return as_callable(resolver.resolve_parts(parsed, parts, env))
