"""Semantic text vectors and structural graph embeddings.

Two embedding backends share one interface: a pure, offline deterministic
backend (hashed bag of identifier/keyword features) and a remote HTTP
backend for serving a real code embedding model out of process.  Structural
embeddings concatenate per-node text vectors with a Laplacian positional
encoding and pool by arithmetic mean.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TransportError
from .model import CodeGraph

DEFAULT_DIM = 768
DEFAULT_PE_DIM = 8

_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_EIG_ZERO_TOL = 1e-8
_SIGN_TOL = 1e-12


@dataclass(frozen=True)
class SemanticVector:
    values: np.ndarray
    source_digest: str

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("semantic vector has non-finite entries")


@dataclass
class StructuralEmbedding:
    node_ids: list[str]
    vectors: np.ndarray  # (n, d1 + d2)
    pooled: np.ndarray  # (d1 + d2,)
    pe_dim: int


def normalize_snippet(text: str) -> str:
    return " ".join(text.split())


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity with zero-norm vectors defined as similarity 0."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class DeterministicBackend:
    """Pure offline embedder: hashed token features with sublinear counts.

    Tokens are identifiers and keywords; each token hashes into one of
    ``dim`` buckets, counts are squashed by log(1 + tf) and the vector is
    L2-normalized.  Same text always gives the same vector.
    """

    kind = "deterministic"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ConfigError(f"embedding dimension must be positive, got {dim}")
        self.dim = dim

    @staticmethod
    def _bucket(token: str, dim: int) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % dim

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            counts: dict[int, int] = {}
            for token in _TOKEN_RE.findall(text):
                bucket = self._bucket(token, self.dim)
                counts[bucket] = counts.get(bucket, 0) + 1
            if not counts:
                continue
            for bucket, count in counts.items():
                out[row, bucket] = np.log1p(count)
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class RemoteBackend:
    """HTTP embedder: POST {endpoint}/embed with {"texts": [...]}."""

    kind = "remote"

    def __init__(self, endpoint: str, dim: int = DEFAULT_DIM, transport=None, batch_size: int = 64):
        if not endpoint:
            raise ConfigError("remote embedder requires an endpoint URL")
        self.endpoint = endpoint.rstrip("/")
        self.dim = dim
        self.batch_size = batch_size
        if transport is None:
            import requests

            transport = requests.post
        self._post = transport

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for start in range(0, len(texts), self.batch_size):
            chunk = texts[start : start + self.batch_size]
            try:
                response = self._post(f"{self.endpoint}/embed", json={"texts": chunk}, timeout=30)
            except Exception as exc:  # connection-level failure
                raise TransportError(f"embedder at {self.endpoint} unreachable: {exc}") from exc
            status = getattr(response, "status_code", 200)
            if status != 200:
                raise TransportError(f"embedder at {self.endpoint} returned HTTP {status}")
            payload = response.json()
            if payload.get("dim") != self.dim:
                raise ConfigError(
                    f"embedder dimension mismatch: server {payload.get('dim')}, "
                    f"configured {self.dim}"
                )
            vectors = np.asarray(payload["vectors"], dtype=np.float32)
            if vectors.shape != (len(chunk), self.dim):
                raise ConfigError(f"embedder returned shape {vectors.shape}")
            out[start : start + len(chunk)] = vectors
        return out


EmbedderBackend = DeterministicBackend | RemoteBackend


def make_backend(kind: str, dim: int = DEFAULT_DIM, endpoint: str | None = None) -> EmbedderBackend:
    if kind == "deterministic":
        return DeterministicBackend(dim=dim)
    if kind == "remote":
        return RemoteBackend(endpoint or "", dim=dim)
    raise ConfigError(f"unknown embedder kind {kind!r}")


def embed_text(snippet: str, backend: EmbedderBackend) -> SemanticVector:
    normalized = normalize_snippet(snippet)
    if not normalized:
        raise ValueError("cannot embed an empty snippet")
    values = backend.embed_batch([snippet])[0]
    digest = hashlib.sha256(normalized.encode("utf-8")).hexdigest()
    return SemanticVector(values=values, source_digest=digest)


# ---------------------------------------------------------------------------
# Laplacian positional encoding
# ---------------------------------------------------------------------------


def normalized_laplacian(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian with the pseudo-inverse degree convention.

    Isolated nodes get an all-zero row/column (eigenvalue 0) rather than a
    unit diagonal.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"adjacency must be square, got {a.shape}")
    if not np.allclose(a, a.T):
        raise ConfigError("adjacency must be symmetric")
    degrees = a.sum(axis=1)
    inv_sqrt = np.where(degrees > 0, 1.0 / np.sqrt(np.where(degrees > 0, degrees, 1.0)), 0.0)
    norm_adj = a * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap = np.diag((degrees > 0).astype(np.float64)) - norm_adj
    return (lap + lap.T) / 2.0


def laplacian_pe(adjacency: np.ndarray, d2: int) -> np.ndarray:
    """Per-node positions from eigenvectors of the d2 smallest non-zero eigenvalues.

    Columns are ordered by ascending eigenvalue and zero-padded when the
    graph has fewer than d2 non-zero eigenvalues.  Each eigenvector's first
    non-negligible entry is made positive; equal eigenvalues are ordered by
    the sign-fixed vectors lexicographically so the output is deterministic
    up to eigenspace rotation.
    """
    if d2 <= 0:
        raise ConfigError(f"positional encoding dimension must be positive, got {d2}")
    lap = normalized_laplacian(adjacency)
    n = lap.shape[0]
    if n == 0:
        raise ConfigError("positional encoding of an empty graph")
    eigenvalues, eigenvectors = np.linalg.eigh(lap)

    columns: list[tuple[float, np.ndarray]] = []
    for idx in range(n):
        value = float(eigenvalues[idx])
        if value <= _EIG_ZERO_TOL:
            continue
        vec = eigenvectors[:, idx].copy()
        for entry in vec:
            if abs(entry) > _SIGN_TOL:
                if entry < 0:
                    vec = -vec
                break
        columns.append((value, vec))
        if len(columns) == d2 and idx + 1 < n and float(eigenvalues[idx + 1]) - value > _EIG_ZERO_TOL:
            break

    # Deterministic order inside (near-)degenerate eigenspaces.
    columns.sort(key=lambda item: (round(item[0] / _EIG_ZERO_TOL), tuple(item[1])))
    pe = np.zeros((n, d2), dtype=np.float64)
    for col, (_, vec) in enumerate(columns[:d2]):
        pe[:, col] = vec
    return pe


def subgraph_adjacency(graph: CodeGraph, node_ids: list[str]) -> np.ndarray:
    """Undirected 0/1 adjacency over the listed nodes, all edge types pooled."""
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    a = np.zeros((len(node_ids), len(node_ids)), dtype=np.float64)
    neighbors = graph.undirected_neighbors()
    for node_id, i in index.items():
        for other in neighbors.get(node_id, ()):
            j = index.get(other)
            if j is not None:
                a[i, j] = 1.0
                a[j, i] = 1.0
    return a


def embed_graph(
    graph: CodeGraph,
    backend: EmbedderBackend,
    d2: int = DEFAULT_PE_DIM,
    node_ids: list[str] | None = None,
) -> StructuralEmbedding:
    """Per-node [text embedding ; positional encoding] plus the mean-pooled vector."""
    if node_ids is None:
        node_ids = sorted(graph.nodes)
    if not node_ids:
        raise ConfigError("cannot embed an empty subgraph")
    texts = []
    for node_id in node_ids:
        node = graph.nodes[node_id]
        text = node.code_text if node.code_text.strip() else f"<{node.node_type.value.lower()}>"
        texts.append(text)
    semantic = backend.embed_batch(texts).astype(np.float64)
    positions = laplacian_pe(subgraph_adjacency(graph, node_ids), d2)
    vectors = np.concatenate([semantic, positions], axis=1)
    return StructuralEmbedding(
        node_ids=list(node_ids),
        vectors=vectors,
        pooled=vectors.mean(axis=0),
        pe_dim=d2,
    )
