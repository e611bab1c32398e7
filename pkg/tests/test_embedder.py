"""Embedding backends, Laplacian positional encoding, graph pooling."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphcomplete.embedder import (
    DeterministicBackend,
    RemoteBackend,
    cosine,
    embed_graph,
    embed_text,
    laplacian_pe,
    normalized_laplacian,
)
from graphcomplete.errors import ConfigError, TransportError
from graphcomplete.model import CodeGraph, EdgeType, GraphEdge, GraphNode, GraphType, NodeType

from oracles import jacobi_eigenvalues

P3 = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
K3 = np.ones((3, 3)) - np.eye(3)


class TestDeterministicBackend:
    def test_purity(self, backend):
        a = embed_text("def foo(x):\n    return x + 1", backend)
        b = embed_text("def foo(x):\n    return x + 1", backend)
        assert np.array_equal(a.values, b.values)
        assert a.source_digest == b.source_digest

    def test_self_cosine_is_one(self, backend):
        v = embed_text("total = compute(items)", backend)
        assert cosine(v.values, v.values) == pytest.approx(1.0, abs=1e-6)

    def test_disjoint_tokens_give_zero_cosine(self, backend):
        # Oracle: hand-check the two token sets land in disjoint buckets.
        left, right = "alpha beta gamma", "delta epsilon zeta"
        buckets_left = {DeterministicBackend._bucket(t, backend.dim) for t in left.split()}
        buckets_right = {DeterministicBackend._bucket(t, backend.dim) for t in right.split()}
        assert not (buckets_left & buckets_right)
        a = embed_text(left, backend)
        b = embed_text(right, backend)
        assert cosine(a.values, b.values) == pytest.approx(0.0, abs=1e-9)

    def test_empty_snippet_rejected(self, backend):
        with pytest.raises(ValueError):
            embed_text("   \n\t ", backend)

    def test_tokenless_snippet_gives_zero_vector(self, backend):
        v = embed_text("###", backend)
        assert np.all(v.values == 0.0)

    @given(st.text(min_size=1, max_size=80))
    @settings(max_examples=50, deadline=None)
    def test_purity_property(self, text):
        backend = DeterministicBackend(dim=64)
        if not text.split():
            return
        a = backend.embed_batch([text])[0]
        b = backend.embed_batch([text])[0]
        assert np.array_equal(a, b)


class TestLaplacianPe:
    def test_p3_eigenvalues_match_jacobi_oracle(self):
        lap = normalized_laplacian(P3)
        oracle = jacobi_eigenvalues(lap)
        assert np.allclose(oracle, [0.0, 1.0, 2.0], atol=1e-9)
        assert np.allclose(np.linalg.eigvalsh(lap), oracle, atol=1e-9)

    def test_k3_eigenvalues_match_jacobi_oracle(self):
        lap = normalized_laplacian(K3)
        oracle = jacobi_eigenvalues(lap)
        assert np.allclose(oracle, [0.0, 1.5, 1.5], atol=1e-9)
        assert np.allclose(np.linalg.eigvalsh(lap), oracle, atol=1e-9)

    def test_p3_positions(self):
        pe = laplacian_pe(P3, 4)
        assert pe.shape == (3, 4)
        # Two non-zero eigenvalues: columns 2 and 3 are zero padding.
        assert np.allclose(pe[:, 2:], 0.0)
        lap = normalized_laplacian(P3)
        for col, eigenvalue in ((0, 1.0), (1, 2.0)):
            vec = pe[:, col]
            assert np.allclose(lap @ vec, eigenvalue * vec, atol=1e-9)
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-9)

    def test_single_node_all_padding(self):
        pe = laplacian_pe(np.zeros((1, 1)), 3)
        assert np.allclose(pe, 0.0)

    def test_k3_repeated_eigenvalue_subspace(self):
        # Individual eigenvectors are non-unique under multiplicity; assert
        # subspace properties instead of exact vectors.
        pe = laplacian_pe(K3, 2)
        lap = normalized_laplacian(K3)
        for col in range(2):
            vec = pe[:, col]
            assert np.allclose(lap @ vec, 1.5 * vec, atol=1e-9)
        # The two columns are orthonormal.
        assert pe[:, 0] @ pe[:, 1] == pytest.approx(0.0, abs=1e-9)

    def test_sign_convention_first_nonzero_positive(self):
        for adjacency in (P3, K3, np.array([[0, 1], [1, 0]], dtype=float)):
            pe = laplacian_pe(adjacency, 3)
            for col in range(pe.shape[1]):
                column = pe[:, col]
                nonzero = column[np.abs(column) > 1e-12]
                if len(nonzero):
                    assert nonzero[0] > 0

    def test_deterministic(self):
        a = laplacian_pe(K3, 4)
        b = laplacian_pe(K3, 4)
        assert np.array_equal(a, b)

    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=60, deadline=None)
    def test_eigenvalue_range_property(self, n, seed):
        rng = np.random.default_rng(seed)
        adjacency = np.triu((rng.random((n, n)) < 0.4).astype(float), k=1)
        adjacency = adjacency + adjacency.T
        eigenvalues = jacobi_eigenvalues(normalized_laplacian(adjacency))
        assert eigenvalues.min() >= -1e-9
        assert eigenvalues.max() <= 2.0 + 1e-9

    def test_asymmetric_adjacency_rejected(self):
        with pytest.raises(ConfigError):
            laplacian_pe(np.array([[0, 1], [0, 0]], dtype=float), 2)


def _tiny_graph(texts: list[str], edges: list[tuple[int, int]]) -> CodeGraph:
    g = CodeGraph(repo_name="t")
    ids = []
    for i, text in enumerate(texts):
        node_id = f"{i:032x}"
        ids.append(node_id)
        g.add_node(
            GraphNode(
                id=node_id,
                node_type=NodeType.Function,
                graph_type=GraphType.CallGraph,
                code_text=text,
                file_path="t.py",
                line_span=(i + 1, i + 1),
            )
        )
    for a, b in edges:
        g.add_edge(GraphEdge(ids[a], ids[b], EdgeType.Calls))
    return g


class TestEmbedGraph:
    def test_single_node_pooled_equals_node_vector(self, backend):
        g = _tiny_graph(["def f(): pass"], [])
        emb = embed_graph(g, backend, d2=4)
        assert np.allclose(emb.pooled, emb.vectors[0])

    def test_pe_dimension_appended(self, backend):
        g = _tiny_graph(["def f(): pass", "def g(): pass"], [(0, 1)])
        emb = embed_graph(g, backend, d2=6)
        assert emb.vectors.shape == (2, backend.dim + 6)

    def test_isomorphic_identical_text_graphs_pool_equal(self, backend):
        g1 = _tiny_graph(["def a(): pass", "def b(): pass"], [(0, 1)])
        g2 = _tiny_graph(["def a(): pass", "def b(): pass"], [(0, 1)])
        e1 = embed_graph(g1, backend, d2=4)
        e2 = embed_graph(g2, backend, d2=4)
        assert np.allclose(e1.pooled, e2.pooled)

    def test_pooling_invariant_under_node_reordering(self, backend):
        g = _tiny_graph(["def a(): pass", "def b(): pass", "def c(): pass"], [(0, 1), (1, 2)])
        ids = sorted(g.nodes)
        forward = embed_graph(g, backend, d2=4, node_ids=ids)
        backward = embed_graph(g, backend, d2=4, node_ids=list(reversed(ids)))
        assert np.allclose(forward.pooled, backward.pooled, atol=1e-12)

    def test_empty_subgraph_rejected(self, backend):
        g = _tiny_graph(["def f(): pass"], [])
        with pytest.raises(ConfigError):
            embed_graph(g, backend, d2=4, node_ids=[])


class _FakeResponse:
    def __init__(self, payload, status_code=200):
        self._payload = payload
        self.status_code = status_code

    def json(self):
        return self._payload


class TestRemoteBackend:
    def test_posts_and_parses(self):
        calls = []

        def transport(url, json=None, timeout=None):
            calls.append((url, json))
            return _FakeResponse({"vectors": [[1.0, 0.0], [0.0, 1.0]], "dim": 2})

        backend = RemoteBackend("http://emb.local", dim=2, transport=transport)
        out = backend.embed_batch(["a", "b"])
        assert out.shape == (2, 2)
        assert calls[0][0] == "http://emb.local/embed"
        assert calls[0][1] == {"texts": ["a", "b"]}

    def test_non_200_is_transport_error(self):
        backend = RemoteBackend(
            "http://emb.local", dim=2, transport=lambda *a, **k: _FakeResponse({}, 503)
        )
        with pytest.raises(TransportError):
            backend.embed_batch(["a"])

    def test_unreachable_is_transport_error(self):
        def transport(*args, **kwargs):
            raise ConnectionError("refused")

        backend = RemoteBackend("http://emb.local", dim=2, transport=transport)
        with pytest.raises(TransportError):
            backend.embed_batch(["a"])

    def test_dimension_mismatch_is_config_error(self):
        backend = RemoteBackend(
            "http://emb.local",
            dim=4,
            transport=lambda *a, **k: _FakeResponse({"vectors": [[1.0, 0.0]], "dim": 2}),
        )
        with pytest.raises(ConfigError):
            backend.embed_batch(["a"])
