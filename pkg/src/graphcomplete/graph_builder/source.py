"""Language frontend: parsing source files into neutral per-module summaries.

Only Python is implemented, via the stdlib ``ast`` module.  The frontend
interface keeps everything the level builders need behind one class so a
second grammar can be added without touching graph construction.
"""

from __future__ import annotations

import ast
from abc import ABC, abstractmethod
from dataclasses import dataclass, field


def dotted(parts: tuple[str, ...]) -> str:
    return ".".join(parts)


def attribute_parts(node: ast.expr) -> tuple[str, ...] | None:
    """Flatten a Name / Attribute chain into its dotted parts, or None."""
    parts: list[str] = []
    while isinstance(node, ast.Attribute):
        parts.append(node.attr)
        node = node.value
    if isinstance(node, ast.Name):
        parts.append(node.id)
        return tuple(reversed(parts))
    return None


def span_of(node: ast.AST) -> tuple[int, int, int, int]:
    return (
        getattr(node, "lineno", 0),
        getattr(node, "col_offset", 0),
        getattr(node, "end_lineno", getattr(node, "lineno", 0)),
        getattr(node, "end_col_offset", getattr(node, "col_offset", 0)),
    )


@dataclass(frozen=True)
class ImportStatement:
    """One import statement, with relative imports already absolutized."""

    kind: str  # "import" | "from"
    base: str | None  # base module for "from" imports
    names: tuple[str, ...]  # plain: dotted modules; from: imported names sans "*"
    bindings: tuple[tuple[str, str], ...]  # (local name, dotted target)
    line: int
    is_star: bool = False


@dataclass
class FunctionInfo:
    qualname: str
    name: str
    signature: str
    span: tuple[int, int, int, int]
    source: str
    node: ast.AST  # FunctionDef | AsyncFunctionDef
    class_qualname: str | None = None
    decorators: tuple[str, ...] = ()


@dataclass
class ClassInfo:
    qualname: str
    name: str
    signature: str
    span: tuple[int, int, int, int]
    source: str
    bases: tuple[tuple[str, ...], ...]  # dotted parts per base, statically known
    is_interface_like: bool = False


@dataclass
class AliasInfo:
    name: str
    span: tuple[int, int, int, int]
    source: str
    referenced: tuple[tuple[str, ...], ...]  # dotted parts mentioned in the value


@dataclass(frozen=True)
class CallSite:
    caller: str  # function qualname
    parts: tuple[str, ...] | None  # None when the callee is dynamic
    line: int
    col: int
    arg_preview: str


@dataclass(frozen=True)
class AnnotationUse:
    parts: tuple[str, ...]
    line: int


@dataclass
class ParsedModule:
    rel_path: str
    module_name: str
    package: str  # package for resolving relative imports
    text: str
    tree: ast.Module
    imports: list[ImportStatement] = field(default_factory=list)
    functions: list[FunctionInfo] = field(default_factory=list)
    classes: list[ClassInfo] = field(default_factory=list)
    aliases: list[AliasInfo] = field(default_factory=list)
    calls: list[CallSite] = field(default_factory=list)
    annotation_uses: list[AnnotationUse] = field(default_factory=list)
    star_imports: list[str] = field(default_factory=list)

    def import_env(self) -> dict[str, str]:
        env: dict[str, str] = {}
        for stmt in self.imports:
            for local, target in stmt.bindings:
                env[local] = target
        return env


class LanguageFrontend(ABC):
    """Grammar abstraction point: one implementation per corpus language."""

    name: str = ""
    extensions: tuple[str, ...] = ()

    @abstractmethod
    def module_name(self, rel_path: str) -> tuple[str, str]:
        """Map a repo-relative path to (dotted module name, enclosing package)."""

    @abstractmethod
    def parse_module(self, rel_path: str, text: str) -> ParsedModule:
        """Parse one file; raises SyntaxError on unparseable input."""


_INTERFACE_BASES = {"ABC", "abc.ABC", "Protocol", "typing.Protocol", "ABCMeta"}


def _is_type_expr(node: ast.expr) -> bool:
    if isinstance(node, ast.Name):
        return True
    if isinstance(node, ast.Attribute):
        return _is_type_expr(node.value)
    if isinstance(node, ast.Subscript):
        return _is_type_expr(node.value) and _is_type_expr(node.slice)
    if isinstance(node, ast.Tuple):
        return all(_is_type_expr(e) for e in node.elts)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.BitOr):
        return _is_type_expr(node.left) and _is_type_expr(node.right)
    if isinstance(node, ast.Constant):
        return node.value is None or node.value is Ellipsis or isinstance(node.value, str)
    return False


def _annotation_names(node: ast.expr) -> list[tuple[str, ...]]:
    """All dotted name chains mentioned inside an annotation expression."""
    found: list[tuple[str, ...]] = []
    for sub in ast.walk(node):
        if isinstance(sub, (ast.Name, ast.Attribute)):
            parts = attribute_parts(sub)
            if parts is not None:
                found.append(parts)
    # Attribute chains also yield their Name leaves via ast.walk; keep the
    # longest chains only by dropping strict prefixes of another entry.
    keep = []
    for parts in found:
        if not any(parts != other and other[: len(parts)] == parts for other in found):
            keep.append(parts)
    seen: set[tuple[str, ...]] = set()
    out = []
    for parts in keep:
        if parts not in seen:
            seen.add(parts)
            out.append(parts)
    return out


class PythonFrontend(LanguageFrontend):
    name = "python"
    extensions = (".py",)

    def module_name(self, rel_path: str) -> tuple[str, str]:
        parts = rel_path[: -len(".py")].split("/")
        if parts[-1] == "__init__":
            parts = parts[:-1]
        module = ".".join(parts) if parts else ""
        if rel_path.endswith("__init__.py"):
            package = module
        else:
            package = ".".join(parts[:-1])
        return module, package

    def parse_module(self, rel_path: str, text: str) -> ParsedModule:
        tree = ast.parse(text, filename=rel_path)
        module, package = self.module_name(rel_path)
        parsed = ParsedModule(
            rel_path=rel_path,
            module_name=module,
            package=package,
            text=text,
            tree=tree,
        )
        self._collect_imports(parsed)
        self._collect_defs(parsed)
        self._collect_calls(parsed)
        self._collect_annotation_uses(parsed)
        return parsed

    # -- imports -----------------------------------------------------------

    def _collect_imports(self, parsed: ParsedModule) -> None:
        for node in ast.walk(parsed.tree):
            if isinstance(node, ast.Import):
                modules = []
                bindings = []
                for alias in node.names:
                    modules.append(alias.name)
                    if alias.asname:
                        bindings.append((alias.asname, alias.name))
                    else:
                        root = alias.name.split(".")[0]
                        bindings.append((root, root))
                parsed.imports.append(
                    ImportStatement("import", None, tuple(modules), tuple(bindings), node.lineno)
                )
            elif isinstance(node, ast.ImportFrom):
                base = self._absolutize(parsed, node.module, node.level)
                if base is None:
                    continue
                names = []
                bindings = []
                star = False
                for alias in node.names:
                    if alias.name == "*":
                        star = True
                        continue
                    names.append(alias.name)
                    target = f"{base}.{alias.name}" if base else alias.name
                    bindings.append((alias.asname or alias.name, target))
                if star and base:
                    parsed.star_imports.append(base)
                parsed.imports.append(
                    ImportStatement(
                        "from", base, tuple(names), tuple(bindings), node.lineno, is_star=star
                    )
                )

    @staticmethod
    def _absolutize(parsed: ParsedModule, module: str | None, level: int) -> str | None:
        if level == 0:
            return module
        anchor_parts = parsed.package.split(".") if parsed.package else []
        drop = level - 1
        if drop > len(anchor_parts):
            return None
        anchor_parts = anchor_parts[: len(anchor_parts) - drop]
        if module:
            anchor_parts.append(module)
        return ".".join(anchor_parts)

    # -- definitions -------------------------------------------------------

    def _collect_defs(self, parsed: ParsedModule) -> None:
        def visit(body: list[ast.stmt], prefix: str, class_qualname: str | None) -> None:
            for stmt in body:
                if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    qualname = f"{prefix}{stmt.name}"
                    source = ast.get_source_segment(parsed.text, stmt) or stmt.name
                    sig = f"def {stmt.name}({ast.unparse(stmt.args)})"
                    if stmt.returns is not None:
                        sig += f" -> {ast.unparse(stmt.returns)}"
                    decorators = tuple(
                        dotted(p)
                        for d in stmt.decorator_list
                        if (p := attribute_parts(d)) is not None
                    )
                    parsed.functions.append(
                        FunctionInfo(
                            qualname=qualname,
                            name=stmt.name,
                            signature=sig,
                            span=span_of(stmt),
                            source=source,
                            node=stmt,
                            class_qualname=class_qualname,
                            decorators=decorators,
                        )
                    )
                    visit(stmt.body, f"{qualname}.", None)
                elif isinstance(stmt, ast.ClassDef):
                    qualname = f"{prefix}{stmt.name}"
                    source = ast.get_source_segment(parsed.text, stmt) or stmt.name
                    bases = tuple(
                        p for b in stmt.bases if (p := attribute_parts(b)) is not None
                    )
                    base_names = {dotted(p) for p in bases}
                    meta_abc = any(
                        kw.arg == "metaclass"
                        and (mp := attribute_parts(kw.value)) is not None
                        and mp[-1] == "ABCMeta"
                        for kw in stmt.keywords
                    )
                    abstract = any(
                        isinstance(s, (ast.FunctionDef, ast.AsyncFunctionDef))
                        and any(
                            (dp := attribute_parts(d)) is not None
                            and dp[-1] == "abstractmethod"
                            for d in s.decorator_list
                        )
                        for s in stmt.body
                    )
                    sig = f"class {stmt.name}"
                    if stmt.bases:
                        sig += f"({', '.join(ast.unparse(b) for b in stmt.bases)})"
                    parsed.classes.append(
                        ClassInfo(
                            qualname=qualname,
                            name=stmt.name,
                            signature=sig,
                            span=span_of(stmt),
                            source=source,
                            bases=bases,
                            is_interface_like=bool(
                                base_names & _INTERFACE_BASES or meta_abc or abstract
                            ),
                        )
                    )
                    visit(stmt.body, f"{qualname}.", qualname)
                elif isinstance(stmt, ast.AnnAssign) and prefix == "":
                    self._maybe_alias(parsed, stmt)
                elif isinstance(stmt, ast.Assign) and prefix == "":
                    self._maybe_alias(parsed, stmt)

        visit(parsed.tree.body, "", None)

    def _maybe_alias(self, parsed: ParsedModule, stmt: ast.AnnAssign | ast.Assign) -> None:
        """Record module-level type aliases.

        Treated as aliases: ``X: TypeAlias = ...``, ``X = NewType(...)`` and
        assignments of parameterized type expressions (``X = dict[str, int]``,
        ``X = int | None``).  Bare ``X = Y`` re-exports are not aliases.
        """
        if isinstance(stmt, ast.AnnAssign):
            if not isinstance(stmt.target, ast.Name) or stmt.value is None:
                return
            ann = attribute_parts(stmt.annotation)
            if ann is None or ann[-1] != "TypeAlias":
                return
            target, value = stmt.target, stmt.value
        else:
            if len(stmt.targets) != 1 or not isinstance(stmt.targets[0], ast.Name):
                return
            target, value = stmt.targets[0], stmt.value
            is_newtype = (
                isinstance(value, ast.Call)
                and (p := attribute_parts(value.func)) is not None
                and p[-1] == "NewType"
            )
            is_param_type = isinstance(value, (ast.Subscript, ast.BinOp)) and _is_type_expr(
                value
            )
            if not (is_newtype or is_param_type):
                return
        referenced = tuple(
            p for p in _annotation_names(value) if p[-1] not in {"NewType", "TypeAlias"}
        )
        parsed.aliases.append(
            AliasInfo(
                name=target.id,
                span=span_of(stmt),
                source=ast.get_source_segment(parsed.text, stmt) or target.id,
                referenced=referenced,
            )
        )

    # -- call sites ----------------------------------------------------------

    def _collect_calls(self, parsed: ParsedModule) -> None:
        """Attribute every call expression to its innermost enclosing function."""

        def scan(node: ast.AST, owner: str | None) -> None:
            for child in ast.iter_child_nodes(node):
                if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    prefix = f"{owner}." if owner else ""
                    scan(child, f"{prefix}{child.name}")
                    continue
                if isinstance(child, ast.ClassDef):
                    prefix = f"{owner}." if owner else ""
                    scan(child, f"{prefix}{child.name}")
                    continue
                if isinstance(child, ast.Call) and owner is not None:
                    preview = ", ".join(ast.unparse(a) for a in child.args[:3])
                    parsed.calls.append(
                        CallSite(
                            caller=owner,
                            parts=attribute_parts(child.func),
                            line=child.lineno,
                            col=child.col_offset,
                            arg_preview=preview[:60],
                        )
                    )
                scan(child, owner)

        # Class bodies between module and method level keep owner=None so that
        # module-level and class-body calls are not attributed to any function.
        def scan_top(tree: ast.Module) -> None:
            for child in tree.body:
                if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)):
                    scan(child, child.name)
                elif isinstance(child, ast.ClassDef):
                    for sub in child.body:
                        if isinstance(sub, (ast.FunctionDef, ast.AsyncFunctionDef)):
                            scan(sub, f"{child.name}.{sub.name}")

        scan_top(parsed.tree)

    # -- annotation uses ---------------------------------------------------

    def _collect_annotation_uses(self, parsed: ParsedModule) -> None:
        for node in ast.walk(parsed.tree):
            anns: list[ast.expr] = []
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                args = node.args
                for arg in [
                    *args.posonlyargs,
                    *args.args,
                    *args.kwonlyargs,
                    *filter(None, [args.vararg, args.kwarg]),
                ]:
                    if arg.annotation is not None:
                        anns.append(arg.annotation)
                if node.returns is not None:
                    anns.append(node.returns)
            elif isinstance(node, ast.AnnAssign):
                anns.append(node.annotation)
            for ann in anns:
                for parts in _annotation_names(ann):
                    parsed.annotation_uses.append(AnnotationUse(parts, ann.lineno))
