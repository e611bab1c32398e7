"""Dual-path retrieval: merge semantic and structural hits, rerank, diversify.

Candidates found by only one path get their missing similarity computed
directly against the query's other-path vector rather than defaulting to
zero, so the combined score always compares like with like.  All ordering
ties break by ascending subgraph id for reproducibility.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .embedder import cosine
from .errors import ConfigError
from .index import IndexBundle


@dataclass(frozen=True)
class AdaptiveAlpha:
    """Logistic gate over the concatenated query encodings."""

    weights: np.ndarray
    bias: float


@dataclass
class RerankConfig:
    alpha: float | AdaptiveAlpha = 0.5
    k_s: int = 10
    k_g: int = 10
    k: int = 3
    mmr_lambda: float = 0.7

    def __post_init__(self) -> None:
        if isinstance(self.alpha, float) and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ConfigError(f"mmr lambda must lie in [0, 1], got {self.mmr_lambda}")
        if min(self.k_s, self.k_g, self.k) < 1:
            raise ConfigError("k_s, k_g and k must be positive")
        if self.k > self.k_s + self.k_g:
            raise ConfigError(f"k={self.k} exceeds k_s+k_g={self.k_s + self.k_g}")


@dataclass
class RetrievedCandidate:
    subgraph_id: str
    sem_sim: float
    struct_sim: float
    score: float
    origin: str  # "Semantic" | "Structural" | "Both"


@dataclass
class QueryEncoding:
    semantic: np.ndarray  # v_q
    structural: np.ndarray  # pooled h_Gq


@dataclass
class RetrievalResult:
    selected: list[RetrievedCandidate]
    merged: list[RetrievedCandidate]
    alpha: float
    semantic_hits: list[tuple[str, float]] = field(default_factory=list)
    structural_hits: list[tuple[str, float]] = field(default_factory=list)


def adaptive_alpha(
    query_semantic: np.ndarray, query_structural: np.ndarray, gate: AdaptiveAlpha
) -> float:
    """alpha = logistic(W . [v_q ; h_Gq] + b), strictly inside (0, 1)."""
    combined = np.concatenate([np.asarray(query_semantic), np.asarray(query_structural)])
    weights = np.asarray(gate.weights, dtype=np.float64)
    if weights.shape != combined.shape:
        raise ConfigError(
            f"adaptive alpha dimension mismatch: weights {weights.shape}, "
            f"query {combined.shape}"
        )
    logit = float(np.dot(weights, combined)) + gate.bias
    return 1.0 / (1.0 + math.exp(-logit))


def load_adaptive_weights(path: str | Path) -> AdaptiveAlpha:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    weights = np.asarray(payload["w_alpha"], dtype=np.float64)
    if payload.get("dim") != weights.shape[0]:
        raise ConfigError(
            f"adaptive weight file {path}: dim {payload.get('dim')} != "
            f"vector length {weights.shape[0]}"
        )
    return AdaptiveAlpha(weights=weights, bias=float(payload["b_alpha"]))


def mmr_select(
    candidates: list[RetrievedCandidate],
    similarity: Callable[[str, str], float],
    lam: float,
    k: int,
) -> list[RetrievedCandidate]:
    """Greedy maximal-marginal-relevance selection.

    First pick maximizes the rerank score; every following pick maximizes
    lam * score - (1 - lam) * max similarity to the already-selected set.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"mmr lambda must lie in [0, 1], got {lam}")
    remaining = sorted(candidates, key=lambda c: c.subgraph_id)
    selected: list[RetrievedCandidate] = []
    while remaining and len(selected) < k:
        if not selected:
            best = max(remaining, key=lambda c: (c.score, _rev(c.subgraph_id)))
        else:
            def mmr_value(c: RetrievedCandidate) -> float:
                redundancy = max(similarity(c.subgraph_id, s.subgraph_id) for s in selected)
                return lam * c.score - (1.0 - lam) * redundancy

            best = max(remaining, key=lambda c: (mmr_value(c), _rev(c.subgraph_id)))
        selected.append(best)
        remaining.remove(best)
    return selected


class _rev:
    """Inverts comparison so max() breaks ties by ascending subgraph id."""

    __slots__ = ("value",)

    def __init__(self, value: str):
        self.value = value

    def __lt__(self, other: "_rev") -> bool:
        return self.value > other.value

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _rev) and self.value == other.value


def retrieve(
    query: QueryEncoding, bundle: IndexBundle, cfg: RerankConfig
) -> RetrievalResult:
    """Run both search paths, merge, rerank by the alpha-weighted score, MMR-diversify."""
    sem_hits = bundle.semantic.search(query.semantic, cfg.k_s)
    struct_hits = bundle.structural.search(query.structural, cfg.k_g)

    if isinstance(cfg.alpha, AdaptiveAlpha):
        alpha = adaptive_alpha(query.semantic, query.structural, cfg.alpha)
    else:
        alpha = float(cfg.alpha)

    sem_by_id = dict(sem_hits)
    struct_by_id = dict(struct_hits)
    merged: list[RetrievedCandidate] = []
    for subgraph_id in sorted(set(sem_by_id) | set(struct_by_id)):
        sem = sem_by_id.get(subgraph_id)
        struct = struct_by_id.get(subgraph_id)
        if sem is not None and struct is not None:
            origin = "Both"
        elif sem is not None:
            origin = "Semantic"
            stored = bundle.structural.vector_for(subgraph_id)
            struct = cosine(query.structural, stored) if stored is not None else 0.0
        else:
            origin = "Structural"
            stored = bundle.semantic.vector_for(subgraph_id)
            sem = cosine(query.semantic, stored) if stored is not None else 0.0
        score = alpha * sem + (1.0 - alpha) * struct
        merged.append(
            RetrievedCandidate(
                subgraph_id=subgraph_id,
                sem_sim=float(sem),
                struct_sim=float(struct),
                score=float(score),
                origin=origin,
            )
        )

    def pair_similarity(a: str, b: str) -> float:
        va = bundle.semantic.vector_for(a)
        vb = bundle.semantic.vector_for(b)
        if va is None or vb is None:
            return 0.0
        return cosine(va, vb)

    selected = mmr_select(merged, pair_similarity, cfg.mmr_lambda, cfg.k)
    return RetrievalResult(
        selected=selected,
        merged=sorted(merged, key=lambda c: (-c.score, c.subgraph_id)),
        alpha=alpha,
        semantic_hits=sem_hits,
        structural_hits=struct_hits,
    )
