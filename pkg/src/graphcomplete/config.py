"""Layered configuration: built-in defaults, TOML file, flag overrides.

Unknown keys are rejected; every default is visible via ``config show``.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .embedder import DEFAULT_DIM, DEFAULT_PE_DIM, make_backend
from .errors import ConfigError
from .fusion import FusionConfig
from .retriever import RerankConfig, load_adaptive_weights
from .serializer import PromptConfig

DEFAULTS: dict[str, dict[str, Any]] = {
    "embedder": {"kind": "deterministic", "endpoint": "", "dim": DEFAULT_DIM},
    "pe": {"d2": DEFAULT_PE_DIM},
    "index": {"m": 32, "ef_construction": 200, "ef_search": 256},
    "retriever": {
        "k_s": 10,
        "k_g": 10,
        "k": 3,
        "alpha": 0.5,
        "lambda": 0.7,
        "alpha_weights": "",  # path to a JSON weight file enables adaptive alpha
    },
    "fusion": {"theta": 0.4, "layers": 2, "seed": 7, "hidden_dim": 0},
    "prompt": {"total_tokens": 2048, "token_multiplier": 1.3, "code_fraction": 0.6},
    "llm": {
        "kind": "mock",
        "endpoint": "",
        "model": "",
        "max_tokens": 100,
        "api_key_env": "GRAPHCOMPLETE_API_KEY",
    },
}


class AppConfig:
    def __init__(self, values: dict[str, dict[str, Any]]):
        self.values = values

    def __getitem__(self, dotted: str) -> Any:
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def show(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)

    # -- typed views ---------------------------------------------------------

    def embedder_backend(self):
        e = self.values["embedder"]
        return make_backend(e["kind"], dim=e["dim"], endpoint=e["endpoint"] or None)

    def rerank_config(self) -> RerankConfig:
        r = self.values["retriever"]
        alpha: Any = float(r["alpha"])
        if r["alpha_weights"]:
            alpha = load_adaptive_weights(r["alpha_weights"])
        return RerankConfig(
            alpha=alpha,
            k_s=int(r["k_s"]),
            k_g=int(r["k_g"]),
            k=int(r["k"]),
            mmr_lambda=float(r["lambda"]),
        )

    def fusion_config(self) -> FusionConfig:
        f = self.values["fusion"]
        return FusionConfig(
            theta=float(f["theta"]),
            gnn_layers=int(f["layers"]),
            hidden_dim=int(f["hidden_dim"]) or None,
            seed=int(f["seed"]),
        )

    def prompt_config(self) -> PromptConfig:
        p = self.values["prompt"]
        return PromptConfig(
            total_tokens=int(p["total_tokens"]),
            token_multiplier=float(p["token_multiplier"]),
            code_fraction=float(p["code_fraction"]),
        )


def _merge(base: dict, incoming: dict, origin: str) -> None:
    for section, content in incoming.items():
        if section not in base:
            raise ConfigError(f"{origin}: unknown config section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"{origin}: section {section!r} must be a table")
        for key, value in content.items():
            if key not in base[section]:
                raise ConfigError(f"{origin}: unknown config key {section}.{key}")
            expected = type(base[section][key])
            if expected is float and isinstance(value, int):
                value = float(value)
            if not isinstance(value, expected):
                raise ConfigError(
                    f"{origin}: {section}.{key} expects {expected.__name__}, "
                    f"got {type(value).__name__}"
                )
            base[section][key] = value


def _coerce(raw: str, template: Any) -> Any:
    if isinstance(template, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> AppConfig:
    """Defaults, then the TOML file, then ``section.key=value`` overrides."""
    values = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            payload = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        _merge(values, payload, str(path))
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in values or key not in values[section]:
            raise ConfigError(f"unknown config key {dotted}")
        values[section][key] = _coerce(raw, values[section][key])
    return AppConfig(values)
