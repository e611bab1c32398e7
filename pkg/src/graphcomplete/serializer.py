"""Fused-graph serialization into text triples and prompt assembly.

Token counting is tokenizer-agnostic: whitespace-delimited words scaled by a
configurable multiplier (default 1.3).  The prompt window is a hard budget,
split evenly between local and retrieved context after accounting for the
fixed template scaffolding; the local half always ends exactly at the cursor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fusion import FusedGraph
from .model import EdgeType, GraphNode

DEFAULT_TOTAL_TOKENS = 2048
DEFAULT_TOKEN_MULTIPLIER = 1.3
DEFAULT_CODE_FRACTION = 0.6  # retrieved budget share for code vs graph triples

_PRIORITY = {
    EdgeType.CrossGraphFusion: 0,
    EdgeType.Calls: 1,
    EdgeType.Inherits: 1,
    EdgeType.DataFlow: 2,
    EdgeType.ControlFlow: 2,
    EdgeType.AstChild: 3,
}
_DEFAULT_PRIORITY = 4

_PREDICATES = {
    EdgeType.Contains: "contains",
    EdgeType.Imports: "imports",
    EdgeType.Calls: "calls",
    EdgeType.TypeUses: "uses type",
    EdgeType.Inherits: "inherits from",
    EdgeType.Implements: "implements",
    EdgeType.AstChild: "has child",
    EdgeType.ControlFlow: "flows to",
    EdgeType.DataFlow: "data flows to",
    EdgeType.Defines: "defines",
    EdgeType.Uses: "is used at",
    EdgeType.DeclaresFunction: "declares",
    EdgeType.TypeReference: "references type",
    EdgeType.InterfaceInheritance: "inherits interface from",
    EdgeType.AnchorsAst: "anchors syntax tree",
    EdgeType.TypeAlignsDataflow: "types value",
    EdgeType.AstToCfg: "executes in",
    EdgeType.CfgToDfg: "computes",
    EdgeType.CrossGraphFusion: "fused with",
}


def token_estimate(text: str, multiplier: float = DEFAULT_TOKEN_MULTIPLIER) -> int:
    words = len(text.split())
    return math.ceil(words * multiplier)


@dataclass(frozen=True)
class GraphTriple:
    subject: str
    predicate: str
    object: str
    weight: float | None = None

    def render(self) -> str:
        line = f"{self.subject} — {self.predicate} → {self.object}"
        if self.weight is not None:
            line += f" (w={self.weight:.2f})"
        return line.replace("\n", " ")


def _describe(node: GraphNode) -> str:
    return f"{node.node_type.value} `{node.display_name}` [id:{node.id[:8]}]"


def serialize_graph(
    fused: FusedGraph,
    budget: int,
    multiplier: float = DEFAULT_TOKEN_MULTIPLIER,
) -> tuple[list[GraphTriple], int]:
    """Triples ordered by (edge priority, descending weight, node ids).

    Returns the triples that fit the token budget and the count of omitted
    edges.  A larger budget never reorders the retained prefix.
    """
    graph = fused.graph
    edges = sorted(
        graph.edges,
        key=lambda e: (
            _PRIORITY.get(e.edge_type, _DEFAULT_PRIORITY),
            -e.weight,
            e.src,
            e.dst,
            e.edge_type.value,
        ),
    )
    triples: list[GraphTriple] = []
    used = 0
    omitted = 0
    for edge in edges:
        triple = GraphTriple(
            subject=_describe(graph.nodes[edge.src]),
            predicate=_PREDICATES[edge.edge_type],
            object=_describe(graph.nodes[edge.dst]),
            weight=edge.weight if edge.weight != 1.0 else None,
        )
        cost = token_estimate(triple.render(), multiplier)
        if used + cost > budget:
            omitted = len(edges) - len(triples)
            break
        triples.append(triple)
        used += cost
    return triples, omitted


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------


@dataclass
class RetrievedSnippet:
    subgraph_id: str
    file_path: str
    code_text: str
    score: float


@dataclass
class PromptConfig:
    total_tokens: int = DEFAULT_TOTAL_TOKENS
    token_multiplier: float = DEFAULT_TOKEN_MULTIPLIER
    code_fraction: float = DEFAULT_CODE_FRACTION
    include_graph: bool = True
    include_retrieved: bool = True


@dataclass
class Prompt:
    sections: dict[str, str]
    text: str
    token_budget: int
    local_tokens: int
    retrieved_tokens: int
    local_budget: int = 0
    retrieved_budget: int = 0

    SECTION_ORDER = (
        "role",
        "current_code_context",
        "retrieved_code_context",
        "graph_context",
        "task_instruction",
        "output_format",
        "constraints",
    )


_ROLE = (
    "You are an expert code completion assistant for repository-scale Python "
    "projects. You receive the developer's current code context together with "
    "code and knowledge-graph relations retrieved from the whole repository, "
    "and you predict the single most likely next line at the cursor."
)

_TASK_INSTRUCTION = (
    "Study the current code context, the retrieved code, and the graph "
    "relations. Infer the most plausible continuation. Output exactly one "
    "line of code for the cursor position, plus a short explanation that "
    "cites node ids from the graph context when relevant."
)

_OUTPUT_FORMAT = """Return a single valid JSON object:
{
  "completed_code": "the suggested line of code",
  "explanation": "brief rationale",
  "confidence_score": 0.0,
  "referenced_nodes": ["node_id", "node_id"]
}"""

_CONSTRAINTS = (
    "- completed_code must contain exactly one line.\n"
    "- Keep the explanation concise and grounded in the provided context.\n"
    "- If uncertain, lower the confidence_score; if completion is impossible, "
    "return an empty code line with confidence 0.0."
)

_NONE_MARKER = "(none retrieved)"


def truncate_local_tail(code: str, budget: int, multiplier: float) -> str:
    """Keep the suffix nearest the cursor that fits the budget."""
    lines = code.splitlines()
    kept: list[str] = []
    used = 0
    for line in reversed(lines):
        cost = token_estimate(line, multiplier)
        if used + cost > budget:
            break
        kept.append(line)
        used += cost
    if not kept and lines:
        # A single oversized line: keep its tail words.
        words = lines[-1].split()
        keep_words = max(0, int(budget / multiplier))
        return " ".join(words[len(words) - keep_words :]) if keep_words else ""
    return "\n".join(reversed(kept))


def _render_snippets(
    snippets: list[RetrievedSnippet], budget: int, multiplier: float
) -> str:
    if not snippets:
        return _NONE_MARKER
    lines: list[str] = []
    used = 0
    for rank, snippet in enumerate(snippets, start=1):
        header = f"# [{rank}] {snippet.file_path} (score={snippet.score:.3f})"
        header_cost = token_estimate(header, multiplier)
        if used + header_cost > budget:
            break
        body_lines = []
        body_used = 0
        for line in snippet.code_text.splitlines():
            cost = token_estimate(line, multiplier)
            if used + header_cost + body_used + cost > budget:
                break
            body_lines.append(line)
            body_used += cost
        if not body_lines:
            break
        lines.append(header)
        lines.extend(body_lines)
        used += header_cost + body_used
        if len(body_lines) < len(snippet.code_text.splitlines()):
            break  # lower-ranked snippets are dropped first
    return "\n".join(lines) if lines else _NONE_MARKER


@dataclass
class PromptTask:
    repo_name: str
    file_path: str
    code_before_cursor: str


def build_prompt(
    task: PromptTask,
    snippets: list[RetrievedSnippet],
    fused: FusedGraph | None,
    cfg: PromptConfig | None = None,
) -> Prompt:
    cfg = cfg or PromptConfig()
    mult = cfg.token_multiplier

    sections: dict[str, str] = {
        "role": "1. [Role]\n" + _ROLE,
        "task_instruction": "3. [Task Instruction]\n" + _TASK_INSTRUCTION,
        "output_format": "4. [Output Format]\n" + _OUTPUT_FORMAT,
        "constraints": "5. [Constraints and Rules]\n" + _CONSTRAINTS,
    }

    local_header = (
        "2. [Context Information]\n"
        "2.1 User's Current Code Context\n"
        f"repo name: {task.repo_name}\n"
        f"File Path: {task.file_path}"
    )
    retrieved_header = "2.2 Retrieved Code Context"
    graph_header = "2.3 Retrieved Code Knowledge Graph"

    # Budget math never depends on which sections are enabled, so ablation
    # variants render byte-identical shared sections.
    scaffold_parts = [
        sections["role"],
        local_header,
        retrieved_header,
        graph_header,
        sections["task_instruction"],
        sections["output_format"],
        sections["constraints"],
    ]
    # Reserve covers "(none retrieved)" markers and the triple omission line.
    scaffold_tokens = sum(token_estimate(part, mult) for part in scaffold_parts) + 24

    content_budget = max(0, cfg.total_tokens - scaffold_tokens)
    local_budget = content_budget // 2
    retrieved_budget = content_budget - local_budget
    code_budget = int(retrieved_budget * cfg.code_fraction)
    triple_budget = retrieved_budget - code_budget

    local_code = truncate_local_tail(task.code_before_cursor, local_budget, mult)
    sections["current_code_context"] = f"{local_header}\n{local_code}"

    if cfg.include_retrieved:
        rendered = _render_snippets(snippets, code_budget, mult)
    else:
        rendered = _NONE_MARKER
    sections["retrieved_code_context"] = f"{retrieved_header}\n{rendered}"

    if cfg.include_graph:
        if fused is not None and fused.graph.edges:
            triples, omitted = serialize_graph(fused, triple_budget, mult)
            lines = [t.render() for t in triples]
            if omitted:
                lines.append(f"... ({omitted} more edges omitted)")
            graph_body = "\n".join(lines) if lines else _NONE_MARKER
        else:
            graph_body = _NONE_MARKER
        sections["graph_context"] = f"{graph_header}\n{graph_body}"
    else:
        sections["graph_context"] = ""

    ordered = [sections[name] for name in Prompt.SECTION_ORDER if sections[name]]
    text = "\n\n".join(ordered)
    graph_body = sections["graph_context"].split("\n", 1)[1] if cfg.include_graph else ""
    return Prompt(
        sections=sections,
        text=text,
        token_budget=cfg.total_tokens,
        local_tokens=token_estimate(local_code, mult),
        retrieved_tokens=token_estimate(rendered, mult) + token_estimate(graph_body, mult),
        local_budget=local_budget,
        retrieved_budget=retrieved_budget,
    )
