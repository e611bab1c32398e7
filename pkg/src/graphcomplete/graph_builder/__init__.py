"""Repository graph construction: three level builders plus the weave step."""

from .build import (
    BuildResult,
    build_function_level,
    build_graph,
    build_module_level,
    build_repo_level,
    restrict_to_ast,
    weave_cross_level,
)
from .source import LanguageFrontend, PythonFrontend

__all__ = [
    "BuildResult",
    "LanguageFrontend",
    "PythonFrontend",
    "build_function_level",
    "build_graph",
    "build_module_level",
    "build_repo_level",
    "restrict_to_ast",
    "weave_cross_level",
]
