"""Benchmark tasks and the EM / ES / Recall / F1 metric suite.

Completion quality is measured four ways: exact match after trailing
whitespace trim, character-level edit similarity, and token-level recall
and F1 over the lexer's token stream.  Identifier-only variants of the
token metrics are reported alongside, labeled explicitly.
"""

from __future__ import annotations

import io
import json
import keyword
import re
import tokenize as pytokenize
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DecodeError

_FALLBACK_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*|\d+(?:\.\d+)?|\S")

_SKIP_TOKEN_TYPES = {
    pytokenize.ENCODING,
    pytokenize.ENDMARKER,
    pytokenize.NEWLINE,
    pytokenize.NL,
    pytokenize.INDENT,
    pytokenize.DEDENT,
    pytokenize.COMMENT,
}


@dataclass(frozen=True)
class EvalRecord:
    task_id: str
    repo_path: str
    file_path: str
    prefix: str
    groundtruth: str
    task_kind: str = "Line"  # "Line" | "Api"


@dataclass
class EvalMetrics:
    em: float
    es: float
    recall: float
    f1: float
    n: int
    per_task: list[dict] = field(default_factory=list)
    recall_identifier: float = 0.0
    f1_identifier: float = 0.0
    skipped: int = 0

    def as_dict(self) -> dict:
        return {
            "em": self.em,
            "es": self.es,
            "recall": self.recall,
            "f1": self.f1,
            "recall_identifier": self.recall_identifier,
            "f1_identifier": self.f1_identifier,
            "n": self.n,
            "skipped": self.skipped,
        }


def load_tasks(path: str | Path) -> list[EvalRecord]:
    tasks = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            tasks.append(
                EvalRecord(
                    task_id=str(record["task_id"]),
                    repo_path=record.get("repo_path", ""),
                    file_path=record.get("file_path", ""),
                    prefix=record["prefix"],
                    groundtruth=record["groundtruth"],
                    task_kind=record.get("task_kind", "Line"),
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise DecodeError(f"tasks file {path}:{lineno}: {exc}") from exc
    return tasks


#: Field aliases accepted by the external-benchmark importer, first hit wins.
_IMPORT_ALIASES = {
    "task_id": ("task_id", "id", "idx", "example_id"),
    "repo_path": ("repo_path", "repository", "repo", "repo_name"),
    "file_path": ("file_path", "file", "fpath", "path"),
    "prefix": ("prefix", "prompt", "left_context", "crossfile_context_prefix"),
    "groundtruth": ("groundtruth", "ground_truth", "reference", "label", "right_context_line"),
    "task_kind": ("task_kind", "kind", "task_type"),
}


def import_external_tasks(
    path: str | Path,
    overrides: dict[str, str] | None = None,
) -> list[EvalRecord]:
    """Convert an external benchmark JSONL file into the local task schema.

    Field names are mapped through common aliases; ``overrides`` pins an
    exact source field per target field when the defaults do not apply.
    Records missing a prefix or groundtruth are dropped.
    """
    aliases = {k: tuple(v) for k, v in _IMPORT_ALIASES.items()}
    for target, source in (overrides or {}).items():
        aliases[target] = (source,)
    tasks = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)

        def pick(target: str, default: str = "") -> str:
            for name in aliases[target]:
                if name in record and record[name] is not None:
                    return str(record[name])
            return default

        prefix = pick("prefix")
        groundtruth = pick("groundtruth").split("\n", 1)[0]
        if not prefix or not groundtruth.strip():
            continue
        tasks.append(
            EvalRecord(
                task_id=pick("task_id", default=f"task-{lineno:05d}"),
                repo_path=pick("repo_path"),
                file_path=pick("file_path"),
                prefix=prefix,
                groundtruth=groundtruth,
                task_kind=pick("task_kind", default="Line"),
            )
        )
    return tasks


def save_tasks(tasks: list[EvalRecord], path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "task_id": t.task_id,
                "repo_path": t.repo_path,
                "file_path": t.file_path,
                "prefix": t.prefix,
                "groundtruth": t.groundtruth,
                "task_kind": t.task_kind,
            },
            sort_keys=True,
        )
        for t in tasks
    ]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def exact_match(pred: str, ref: str) -> int:
    return int(pred.rstrip() == ref.rstrip())


def levenshtein(a: str, b: str) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[len(b)]


def edit_similarity(pred: str, ref: str) -> float:
    if not pred and not ref:
        return 1.0
    return 1.0 - levenshtein(pred, ref) / max(len(pred), len(ref))


def lex_line(line: str) -> list[str]:
    """Token strings of one code line via the Python lexer, regex fallback."""
    try:
        tokens = []
        for tok in pytokenize.generate_tokens(io.StringIO(line).readline):
            if tok.type in _SKIP_TOKEN_TYPES or not tok.string:
                continue
            tokens.append(tok.string)
        return tokens
    except (pytokenize.TokenizeError, SyntaxError, IndentationError):
        return _FALLBACK_TOKEN_RE.findall(line)


def identifier_tokens(tokens: list[str]) -> list[str]:
    return [
        t
        for t in tokens
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", t) and not keyword.iskeyword(t)
    ]


def _multiset_overlap(pred: list[str], ref: list[str]) -> int:
    counts: dict[str, int] = {}
    for token in ref:
        counts[token] = counts.get(token, 0) + 1
    overlap = 0
    for token in pred:
        if counts.get(token, 0) > 0:
            counts[token] -= 1
            overlap += 1
    return overlap


def token_prf(pred: str, ref: str) -> tuple[float, float, float]:
    """Multiset precision/recall/F1 over the lexer token streams."""
    pred_tokens = lex_line(pred)
    ref_tokens = lex_line(ref)
    return _prf(pred_tokens, ref_tokens)


def token_prf_identifiers(pred: str, ref: str) -> tuple[float, float, float]:
    return _prf(identifier_tokens(lex_line(pred)), identifier_tokens(lex_line(ref)))


def _prf(pred_tokens: list[str], ref_tokens: list[str]) -> tuple[float, float, float]:
    if not pred_tokens and not ref_tokens:
        return (1.0, 1.0, 1.0)
    overlap = _multiset_overlap(pred_tokens, ref_tokens)
    precision = overlap / len(pred_tokens) if pred_tokens else 0.0
    recall = overlap / len(ref_tokens) if ref_tokens else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return (precision, recall, f1)


def score_task(pred: str, ref: str) -> dict:
    precision, recall, f1 = token_prf(pred, ref)
    precision_id, recall_id, f1_id = token_prf_identifiers(pred, ref)
    return {
        "em": exact_match(pred, ref),
        "es": edit_similarity(pred, ref),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_identifier": precision_id,
        "recall_identifier": recall_id,
        "f1_identifier": f1_id,
    }


def aggregate(per_task: list[dict], skipped: int = 0) -> EvalMetrics:
    scored = [t for t in per_task if t.get("status", "ok") == "ok"]
    n = len(scored)

    def mean(key: str) -> float:
        return sum(t[key] for t in scored) / n if n else 0.0

    return EvalMetrics(
        em=mean("em"),
        es=mean("es"),
        recall=mean("recall"),
        f1=mean("f1"),
        recall_identifier=mean("recall_identifier"),
        f1_identifier=mean("f1_identifier"),
        n=n,
        per_task=per_task,
        skipped=skipped,
    )
