"""Deterministic node-id derivation for every node kind the builders emit."""

from __future__ import annotations

from ..model import derive_node_id

_NO_SPAN = (0, 0, 0, 0)

Span = tuple[int, int, int, int]


def folder_id(rel_dir: str) -> str:
    return derive_node_id(rel_dir, "folder", _NO_SPAN)


def file_id(rel_path: str) -> str:
    return derive_node_id(rel_path, "file", _NO_SPAN)


def function_id(rel_path: str, qualname: str, span: Span) -> str:
    return derive_node_id(rel_path, f"fn:{qualname}", span)


def class_id(rel_path: str, qualname: str, span: Span) -> str:
    return derive_node_id(rel_path, f"class:{qualname}", span)


def alias_id(rel_path: str, name: str, span: Span) -> str:
    return derive_node_id(rel_path, f"alias:{name}", span)


def ast_id(rel_path: str, ast_type: str, span: Span) -> str:
    return derive_node_id(rel_path, f"ast:{ast_type}", span)


def cfg_id(rel_path: str, qualname: str, label: str, span: Span) -> str:
    return derive_node_id(rel_path, f"cfg:{qualname}:{label}", span)


def dfg_value_id(rel_path: str, qualname: str, var: str, kind: str, span: Span) -> str:
    return derive_node_id(rel_path, f"dfgv:{qualname}:{var}:{kind}", span)


def dfg_var_id(rel_path: str, qualname: str, var: str) -> str:
    return derive_node_id(rel_path, f"dfgvar:{qualname}:{var}", _NO_SPAN)
