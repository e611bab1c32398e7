"""Function-level graph pieces: AST tree, control-flow blocks, def-use chains.

The fragment returned here contains only intra-level nodes and edges; the
cross-level links (function anchor, statement-to-block, block-to-value,
type-to-value) are recorded as id pairs and materialized by the weave step.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from ..model import CodeGraph, EdgeType, GraphEdge, GraphNode, GraphType, NodeType
from . import nid
from .source import FunctionInfo, attribute_parts, dotted, span_of

_AST_TEXT_CAP = 200

_COMPOUND = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.With, ast.AsyncWith, ast.Try)
if hasattr(ast, "Match"):
    _COMPOUND = _COMPOUND + (ast.Match,)


@dataclass
class FunctionFragment:
    graph: CodeGraph
    function_node_id: str
    ast_root_id: str
    rel_path: str = ""
    qualname: str = ""
    stmt_blocks: list[tuple[str, str]] = field(default_factory=list)
    block_values: list[tuple[str, str]] = field(default_factory=list)
    annotated_defs: list[tuple[str, tuple[tuple[str, ...], ...]]] = field(default_factory=list)
    cyclomatic: int = 1
    nesting_depth: int = 0


# ---------------------------------------------------------------------------
# AST subgraph
# ---------------------------------------------------------------------------


def _ast_code_text(text: str, node: ast.AST) -> str:
    segment = ast.get_source_segment(text, node)
    if segment is None:
        segment = type(node).__name__
    return segment[:_AST_TEXT_CAP]


def _build_ast(graph: CodeGraph, rel_path: str, text: str, root: ast.AST) -> str:
    """Materialize every statement/expression under ``root`` with AstChild edges."""

    def add(node: ast.AST) -> str:
        span = span_of(node)
        node_id = nid.ast_id(rel_path, type(node).__name__, span)
        semantic = "call" if isinstance(node, ast.Call) else None
        graph.add_node(
            GraphNode(
                id=node_id,
                node_type=NodeType.Statement if isinstance(node, ast.stmt) else NodeType.Expression,
                graph_type=GraphType.Ast,
                code_text=_ast_code_text(text, node),
                file_path=rel_path,
                line_span=(span[0], span[2]),
                semantic_type=semantic,
            )
        )
        return node_id

    root_id = add(root)

    def walk(node: ast.AST, parent_id: str) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.stmt, ast.expr)):
                child_id = add(child)
                graph.add_edge(GraphEdge(parent_id, child_id, EdgeType.AstChild))
                walk(child, child_id)
            else:
                # Non-materialized syntax (arguments, keywords, handlers...):
                # attach their nested statements/expressions to the nearest
                # materialized ancestor.
                walk(child, parent_id)

    walk(root, root_id)
    return root_id


# ---------------------------------------------------------------------------
# Control-flow graph
# ---------------------------------------------------------------------------


def _display(stmt: ast.stmt) -> tuple[str, tuple[int, int, int, int]]:
    """Header text and span used for block membership of a statement."""
    if isinstance(stmt, ast.If):
        return f"if {ast.unparse(stmt.test)}", span_of(stmt.test)
    if isinstance(stmt, ast.While):
        return f"while {ast.unparse(stmt.test)}", span_of(stmt.test)
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return f"for {ast.unparse(stmt.target)} in {ast.unparse(stmt.iter)}", span_of(stmt.iter)
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        return f"with {', '.join(ast.unparse(i.context_expr) for i in stmt.items)}", span_of(stmt)
    if isinstance(stmt, ast.Try):
        return "try:", (stmt.lineno, stmt.col_offset, stmt.lineno, stmt.col_offset)
    if hasattr(ast, "Match") and isinstance(stmt, ast.Match):
        return f"match {ast.unparse(stmt.subject)}", span_of(stmt.subject)
    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
        return f"def {stmt.name}(...)", (stmt.lineno, stmt.col_offset, stmt.lineno, stmt.col_offset)
    if isinstance(stmt, ast.ClassDef):
        return f"class {stmt.name}", (stmt.lineno, stmt.col_offset, stmt.lineno, stmt.col_offset)
    text = ast.unparse(stmt).splitlines()[0] if stmt else ""
    return text[:_AST_TEXT_CAP], span_of(stmt)


@dataclass
class _Block:
    label: str
    members: list[ast.stmt] = field(default_factory=list)
    texts: list[str] = field(default_factory=list)
    spans: list[tuple[int, int, int, int]] = field(default_factory=list)


@dataclass
class _Loop:
    header: int
    breaks: list[tuple[int, str | None]] = field(default_factory=list)


class _CfgBuilder:
    """Builds basic blocks with single entry and single exit.

    Blocks are created lazily so no empty join blocks exist; statements after
    a terminator (return/raise/break/continue) are unreachable and receive no
    block membership.
    """

    def __init__(self) -> None:
        self.blocks: list[_Block] = [_Block("entry"), _Block("exit")]
        self.edges: list[tuple[int, int, str | None]] = []
        self._next = 0

    ENTRY = 0
    EXIT = 1

    def _new_block(self) -> int:
        self.blocks.append(_Block(f"b{self._next}"))
        self._next += 1
        return len(self.blocks) - 1

    def _edge(self, src: int, dst: int, ctx: str | None = None) -> None:
        self.edges.append((src, dst, ctx))

    def build(self, body: list[ast.stmt]) -> None:
        pending = self._chain(body, [(self.ENTRY, None)], None)
        for block, ctx in pending:
            self._edge(block, self.EXIT, ctx)

    def _chain(
        self,
        stmts: list[ast.stmt],
        incoming: list[tuple[int, str | None]],
        loop: _Loop | None,
    ) -> list[tuple[int, str | None]]:
        current: int | None = None

        def ensure_current() -> int | None:
            nonlocal current, incoming
            if current is None:
                if not incoming:
                    return None  # unreachable code
                current = self._new_block()
                for block, ctx in incoming:
                    self._edge(block, current, ctx)
                incoming = []
            return current

        def add_member(block: int, stmt: ast.stmt) -> None:
            text, span = _display(stmt)
            self.blocks[block].members.append(stmt)
            self.blocks[block].texts.append(text)
            self.blocks[block].spans.append(span)

        i = 0
        while i < len(stmts):
            stmt = stmts[i]
            i += 1
            if isinstance(stmt, ast.Pass):
                continue
            if isinstance(stmt, (ast.Return, ast.Raise)):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                self._edge(block, self.EXIT, "return" if isinstance(stmt, ast.Return) else "raise")
                return []
            if isinstance(stmt, ast.Break):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                if loop is not None:
                    loop.breaks.append((block, "break"))
                else:
                    self._edge(block, self.EXIT, "break")
                return []
            if isinstance(stmt, ast.Continue):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                if loop is not None:
                    self._edge(block, loop.header, "continue")
                else:
                    self._edge(block, self.EXIT, "continue")
                return []
            if isinstance(stmt, ast.If):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                then_out = self._chain(stmt.body, [(block, "true")], loop)
                if stmt.orelse:
                    else_out = self._chain(stmt.orelse, [(block, "false")], loop)
                else:
                    else_out = [(block, "false")]
                incoming = then_out + else_out
                current = None
                continue
            if isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
                sources = [(current, None)] if current is not None else incoming
                if not sources:
                    return []
                header = self._new_block()
                for block, ctx in sources:
                    self._edge(block, header, ctx)
                incoming = []
                current = None
                add_member(header, stmt)
                inner = _Loop(header)
                body_out = self._chain(stmt.body, [(header, "true")], inner)
                for block, ctx in body_out:
                    self._edge(block, header, "back")
                after: list[tuple[int, str | None]] = list(inner.breaks)
                if stmt.orelse:
                    after.extend(self._chain(stmt.orelse, [(header, "false")], loop))
                else:
                    after.append((header, "false"))
                incoming = after
                continue
            if isinstance(stmt, (ast.With, ast.AsyncWith)):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                incoming = self._chain(stmt.body, [(block, None)], loop)
                current = None
                continue
            if isinstance(stmt, ast.Try):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                body_out = self._chain(stmt.body, [(block, None)], loop)
                if stmt.orelse:
                    body_out = self._chain(stmt.orelse, body_out, loop)
                outs = list(body_out)
                for handler in stmt.handlers:
                    outs.extend(self._chain(handler.body, [(block, "except")], loop))
                if stmt.finalbody:
                    outs = self._chain(stmt.finalbody, outs, loop)
                incoming = outs
                current = None
                continue
            if hasattr(ast, "Match") and isinstance(stmt, ast.Match):
                block = ensure_current()
                if block is None:
                    return []
                add_member(block, stmt)
                outs = [(block, "nomatch")]
                for case in stmt.cases:
                    outs.extend(self._chain(case.body, [(block, "case")], loop))
                incoming = outs
                current = None
                continue
            # Simple statement (assignments, expressions, nested defs, ...).
            block = ensure_current()
            if block is None:
                return []
            add_member(block, stmt)

        if current is not None:
            return [(current, None)]
        return incoming


# ---------------------------------------------------------------------------
# Data-flow events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Event:
    kind: str  # "def" | "use"
    var: str
    span: tuple[int, int, int, int]
    annotation: tuple[tuple[str, ...], ...] = ()


def _name_events(expr: ast.expr | None) -> list[_Event]:
    """Name loads/stores inside an expression, in source order."""
    if expr is None:
        return []
    events = []
    for node in ast.walk(expr):
        if isinstance(node, ast.Name):
            kind = "use" if isinstance(node.ctx, ast.Load) else "def"
            if isinstance(node.ctx, ast.Del):
                continue
            events.append(_Event(kind, node.id, span_of(node)))
    events.sort(key=lambda e: (e.span[0], e.span[1], e.kind))
    return events


def _target_events(target: ast.expr, annotation: ast.expr | None = None) -> list[_Event]:
    ann_chains: tuple[tuple[str, ...], ...] = ()
    if annotation is not None:
        parts = attribute_parts(annotation)
        if parts is not None:
            ann_chains = (parts,)
        else:
            ann_chains = tuple(
                p
                for sub in ast.walk(annotation)
                if isinstance(sub, (ast.Name, ast.Attribute))
                and (p := attribute_parts(sub)) is not None
            )
    if isinstance(target, ast.Name):
        return [_Event("def", target.id, span_of(target), ann_chains)]
    if isinstance(target, (ast.Tuple, ast.List)):
        out: list[_Event] = []
        for elt in target.elts:
            out.extend(_target_events(elt))
        return out
    if isinstance(target, ast.Starred):
        return _target_events(target.value)
    # Attribute / subscript targets: the base object is read, nothing defined.
    return _name_events(target)


def _stmt_events(stmt: ast.stmt) -> list[_Event]:
    if isinstance(stmt, ast.Assign):
        events = _name_events(stmt.value)
        for target in stmt.targets:
            events.extend(_target_events(target))
        return events
    if isinstance(stmt, ast.AnnAssign):
        events = _name_events(stmt.value)
        if stmt.value is not None:
            events.extend(_target_events(stmt.target, stmt.annotation))
        return events
    if isinstance(stmt, ast.AugAssign):
        events = _name_events(stmt.value)
        if isinstance(stmt.target, ast.Name):
            events.append(_Event("use", stmt.target.id, span_of(stmt.target)))
            events.append(_Event("def", stmt.target.id, span_of(stmt.target)))
        else:
            events.extend(_name_events(stmt.target))
        return events
    if isinstance(stmt, (ast.Expr, ast.Return)):
        return _name_events(stmt.value)
    if isinstance(stmt, ast.Raise):
        return _name_events(stmt.exc) + _name_events(stmt.cause)
    if isinstance(stmt, ast.Assert):
        return _name_events(stmt.test) + _name_events(stmt.msg)
    if isinstance(stmt, (ast.If, ast.While)):
        return _name_events(stmt.test)
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return _name_events(stmt.iter) + _target_events(stmt.target)
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        events = []
        for item in stmt.items:
            events.extend(_name_events(item.context_expr))
            if item.optional_vars is not None:
                events.extend(_target_events(item.optional_vars))
        return events
    if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
        return [_Event("def", stmt.name, span_of(stmt))]
    if isinstance(stmt, ast.Delete):
        return []
    if hasattr(ast, "Match") and isinstance(stmt, ast.Match):
        return _name_events(stmt.subject)
    return []


def _param_events(fn_node: ast.AST) -> list[_Event]:
    args = fn_node.args
    events = []
    for arg in [*args.posonlyargs, *args.args, *args.kwonlyargs, *filter(None, [args.vararg, args.kwarg])]:
        ann: tuple[tuple[str, ...], ...] = ()
        if arg.annotation is not None:
            parts = attribute_parts(arg.annotation)
            if parts is not None:
                ann = (parts,)
            else:
                ann = tuple(
                    p
                    for sub in ast.walk(arg.annotation)
                    if isinstance(sub, (ast.Name, ast.Attribute))
                    and (p := attribute_parts(sub)) is not None
                )
        events.append(_Event("def", arg.arg, span_of(arg), ann))
    return events


def _nesting_depth(fn_node: ast.AST) -> int:
    def depth(stmts: list[ast.stmt], level: int) -> int:
        deepest = level
        for stmt in stmts:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                continue
            if isinstance(stmt, _COMPOUND):
                inner: list[list[ast.stmt]] = [getattr(stmt, "body", [])]
                if getattr(stmt, "orelse", None):
                    inner.append(stmt.orelse)
                for handler in getattr(stmt, "handlers", []):
                    inner.append(handler.body)
                if getattr(stmt, "finalbody", None):
                    inner.append(stmt.finalbody)
                for case in getattr(stmt, "cases", []):
                    inner.append(case.body)
                for block in inner:
                    deepest = max(deepest, depth(block, level + 1))
        return deepest

    return depth(fn_node.body, 0)


# ---------------------------------------------------------------------------
# Fragment assembly
# ---------------------------------------------------------------------------


def build_function_fragment(rel_path: str, text: str, fn: FunctionInfo) -> FunctionFragment:
    """AST + CFG + DFG fragment for one parsed function."""
    graph = CodeGraph(repo_name="")
    fragment = FunctionFragment(
        graph=graph,
        function_node_id=nid.function_id(rel_path, fn.qualname, fn.span),
        ast_root_id="",
        rel_path=rel_path,
        qualname=fn.qualname,
    )

    fragment.ast_root_id = _build_ast(graph, rel_path, text, fn.node)

    cfg = _CfgBuilder()
    cfg.build(fn.node.body)

    fn_line = fn.span[0]
    block_ids: dict[int, str] = {}
    live = {cfg.ENTRY, cfg.EXIT}
    live.update(src for src, _, _ in cfg.edges)
    live.update(dst for _, dst, _ in cfg.edges)
    for idx, block in enumerate(cfg.blocks):
        if idx not in live:
            continue
        if idx == cfg.ENTRY:
            span = (fn_line, 0, fn_line, 0)
            code_text = "<entry>"
        elif idx == cfg.EXIT:
            span = (fn.span[2], 0, fn.span[2], 0)
            code_text = "<exit>"
        else:
            first, last = block.spans[0], block.spans[-1]
            span = (first[0], first[1], last[2], last[3])
            code_text = "\n".join(block.texts)[:_AST_TEXT_CAP]
        block_id = nid.cfg_id(rel_path, fn.qualname, block.label, span)
        block_ids[idx] = block_id
        graph.add_node(
            GraphNode(
                id=block_id,
                node_type=NodeType.CfgBlock,
                graph_type=GraphType.Cfg,
                code_text=code_text,
                file_path=rel_path,
                line_span=(span[0], span[2]),
            )
        )
    for src, dst, ctx in cfg.edges:
        graph.add_edge(GraphEdge(block_ids[src], block_ids[dst], EdgeType.ControlFlow, context=ctx))

    for idx, block in enumerate(cfg.blocks):
        if idx not in block_ids or idx in (cfg.ENTRY, cfg.EXIT):
            continue
        for stmt in block.members:
            stmt_id = nid.ast_id(rel_path, type(stmt).__name__, span_of(stmt))
            if stmt_id in graph.nodes:
                fragment.stmt_blocks.append((stmt_id, block_ids[idx]))

    fragment.cyclomatic = len(cfg.edges) - len(block_ids) + 2

    # Data-flow: reaching definitions over the block graph.
    block_events: dict[int, list[_Event]] = {cfg.ENTRY: _param_events(fn.node)}
    for idx, block in enumerate(cfg.blocks):
        if idx in block_ids and idx not in (cfg.ENTRY, cfg.EXIT):
            events: list[_Event] = []
            for stmt in block.members:
                events.extend(_stmt_events(stmt))
            block_events[idx] = events

    tracked = {
        e.var
        for events in block_events.values()
        for e in events
        if e.kind == "def"
    }

    def value_id(event: _Event) -> str:
        return nid.dfg_value_id(rel_path, fn.qualname, event.var, event.kind, event.span)

    preds: dict[int, list[int]] = {}
    for src, dst, _ in cfg.edges:
        preds.setdefault(dst, []).append(src)

    gen: dict[int, dict[str, str]] = {}
    for idx, events in block_events.items():
        last: dict[str, str] = {}
        for event in events:
            if event.kind == "def" and event.var in tracked:
                last[event.var] = value_id(event)
        gen[idx] = last

    blocks_order = sorted(block_events)
    out_sets: dict[int, dict[str, frozenset[str]]] = {idx: {} for idx in block_ids}
    changed = True
    while changed:
        changed = False
        for idx in blocks_order:
            in_set: dict[str, set[str]] = {}
            for pred in preds.get(idx, []):
                for var, ids in out_sets.get(pred, {}).items():
                    in_set.setdefault(var, set()).update(ids)
            new_out: dict[str, frozenset[str]] = {
                var: frozenset(ids) for var, ids in in_set.items()
            }
            for var, def_id in gen[idx].items():
                new_out[var] = frozenset({def_id})
            if new_out != out_sets[idx]:
                out_sets[idx] = new_out
                changed = True

    var_annotations: dict[str, str] = {}
    emitted_values: set[str] = set()
    used_vars: set[str] = set()

    def emit_value(event: _Event) -> str:
        vid = value_id(event)
        if vid not in emitted_values:
            emitted_values.add(vid)
            ann = var_annotations.get(event.var) if event.kind == "def" else None
            graph.add_node(
                GraphNode(
                    id=vid,
                    node_type=NodeType.DfgValue,
                    graph_type=GraphType.Dfg,
                    code_text=event.var,
                    file_path=rel_path,
                    line_span=(event.span[0], event.span[2]),
                    semantic_type=ann,
                )
            )
        return vid

    dataflow: list[tuple[str, str]] = []
    for idx in blocks_order:
        in_set: dict[str, set[str]] = {}
        for pred in preds.get(idx, []):
            for var, ids in out_sets.get(pred, {}).items():
                in_set.setdefault(var, set()).update(ids)
        local_last: dict[str, str] = {}
        for event in block_events[idx]:
            if event.var not in tracked:
                continue
            used_vars.add(event.var)
            if event.annotation and event.var not in var_annotations:
                var_annotations[event.var] = dotted(event.annotation[0])
            if event.kind == "def":
                vid = emit_value(event)
                local_last[event.var] = vid
                fragment.block_values.append((block_ids[idx], vid))
                if event.annotation:
                    fragment.annotated_defs.append((vid, event.annotation))
            else:
                vid = emit_value(event)
                fragment.block_values.append((block_ids[idx], vid))
                if event.var in local_last:
                    dataflow.append((local_last[event.var], vid))
                else:
                    for def_id in sorted(in_set.get(event.var, ())):
                        dataflow.append((def_id, vid))

    var_ids = {var: nid.dfg_var_id(rel_path, fn.qualname, var) for var in used_vars}
    for var in sorted(var_ids):
        graph.add_node(
            GraphNode(
                id=var_ids[var],
                node_type=NodeType.Variable,
                graph_type=GraphType.Dfg,
                code_text=var,
                file_path=rel_path,
                line_span=(fn_line, fn.span[2]),
                semantic_type=var_annotations.get(var),
            )
        )

    seen_def_edges: set[tuple[str, str]] = set()
    for idx in blocks_order:
        for event in block_events[idx]:
            if event.var not in tracked:
                continue
            vid = value_id(event)
            var_node = var_ids[event.var]
            key = (vid, var_node)
            if key in seen_def_edges:
                continue
            seen_def_edges.add(key)
            if event.kind == "def":
                graph.add_edge(GraphEdge(vid, var_node, EdgeType.Defines))
            else:
                graph.add_edge(GraphEdge(var_node, vid, EdgeType.Uses))

    seen_flow: set[tuple[str, str]] = set()
    for src, dst in dataflow:
        if (src, dst) not in seen_flow:
            seen_flow.add((src, dst))
            graph.add_edge(GraphEdge(src, dst, EdgeType.DataFlow))

    fragment.nesting_depth = _nesting_depth(fn.node)
    return fragment
