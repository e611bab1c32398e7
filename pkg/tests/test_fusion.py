"""Query graphs, the node encoder, cross-attention, fused-graph assembly."""

from __future__ import annotations

import math

import numpy as np
import pytest

from graphcomplete.embedder import embed_graph
from graphcomplete.fusion import (
    FusionConfig,
    aggregate_retrieved,
    build_query_graph,
    cross_attention,
    encode_nodes,
    fuse,
    type_compatible,
)
from graphcomplete.model import CodeGraph, EdgeType, GraphEdge, GraphNode, GraphType, NodeType

SNIPPET = """\
import util

def scale_all(values):
    total = 0
    for v in values:
        total = util.clamp(total + v, 0, 100)
    return """


def _line_graph(texts, edge_pairs):
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
    for a, b in edge_pairs:
        g.add_edge(GraphEdge(ids[a], ids[b], EdgeType.Calls))
    return g, ids


class TestQueryGraph:
    def test_non_empty_with_anchor(self):
        q = build_query_graph(SNIPPET, 7, 12, "m.py")
        assert q.graph.nodes
        assert q.cursor_anchor in q.graph.nodes

    def test_has_ast_and_defuse(self):
        q = build_query_graph(SNIPPET, 7, 12, "m.py")
        types = {n.node_type for n in q.graph.nodes.values()}
        assert NodeType.Statement in types
        assert NodeType.Variable in types
        edge_types = {e.edge_type for e in q.graph.edges}
        assert EdgeType.AstChild in edge_types
        assert EdgeType.Defines in edge_types

    def test_unparseable_prefix_still_yields_graph(self):
        q = build_query_graph("@@@ ???", 1, 8, "m.py")
        assert q.graph.nodes
        assert q.cursor_anchor in q.graph.nodes

    def test_call_expressions_marked(self):
        q = build_query_graph(SNIPPET, 7, 12, "m.py")
        calls = [
            n
            for n in q.graph.nodes.values()
            if n.node_type == NodeType.Expression and n.semantic_type == "call"
        ]
        assert calls


class TestEncodeNodes:
    def test_zero_layers_is_identity(self, backend):
        g, ids = _line_graph(["def a(): pass", "def b(): pass"], [(0, 1)])
        cfg = FusionConfig(gnn_layers=0)
        node_ids, h = encode_nodes(g, backend, 4, cfg)
        raw = embed_graph(g, backend, 4, node_ids)
        assert np.array_equal(h, raw.vectors)

    def test_single_node_depends_only_on_itself(self, backend):
        g1, _ = _line_graph(["def a(): pass"], [])
        cfg = FusionConfig(gnn_layers=2, seed=3)
        _, h1 = encode_nodes(g1, backend, 4, cfg)
        _, h1_again = encode_nodes(g1, backend, 4, cfg)
        assert np.array_equal(h1, h1_again)
        assert not np.allclose(h1, 0.0)

    def test_star_center_is_transformed_mean_of_leaves(self, backend):
        # Star: node 0 is the center, 1..3 leaves.  At layer 1 the center row
        # must equal tanh(mean(leaf features) @ W0); hand-evaluate one step.
        texts = ["def hub(): pass", "def l1(): pass", "def l2(): pass", "def l3(): pass"]
        g, ids = _line_graph(texts, [(0, 1), (0, 2), (0, 3)])
        cfg = FusionConfig(gnn_layers=1, seed=11)
        node_ids, h = encode_nodes(g, backend, 4, cfg)
        feats = embed_graph(g, backend, 4, node_ids).vectors
        center = node_ids.index(ids[0])
        leaves = [node_ids.index(i) for i in ids[1:]]
        rng = np.random.Generator(np.random.PCG64(cfg.seed))
        weight = rng.standard_normal((feats.shape[1], feats.shape[1])) / np.sqrt(feats.shape[1])
        expected = np.tanh(feats[leaves].mean(axis=0) @ weight)
        assert np.allclose(h[center], expected, atol=1e-12)

    def test_seed_determinism(self, backend):
        g, _ = _line_graph(["def a(): pass", "def b(): pass"], [(0, 1)])
        cfg = FusionConfig(gnn_layers=2, seed=5)
        _, h1 = encode_nodes(g, backend, 4, cfg)
        _, h2 = encode_nodes(g, backend, 4, cfg)
        assert np.array_equal(h1, h2)
        _, h3 = encode_nodes(g, backend, 4, FusionConfig(gnn_layers=2, seed=6))
        assert not np.array_equal(h1, h3)


class TestAggregate:
    def test_single_graph_weight_one(self):
        h = np.ones((3, 4))
        agg = aggregate_retrieved([("u1", ["a", "b", "c"], h)], [0.9])
        assert agg.weights["u1"] == pytest.approx(1.0)
        assert np.allclose(agg.matrix, h)

    def test_equal_scores_equal_weights(self):
        agg = aggregate_retrieved(
            [("u1", ["a"], np.ones((1, 2))), ("u2", ["b"], np.ones((1, 2)))],
            [0.4, 0.4],
        )
        assert agg.weights["u1"] == pytest.approx(0.5)
        assert agg.weights["u2"] == pytest.approx(0.5)

    def test_softmax_of_one_zero(self):
        agg = aggregate_retrieved(
            [("u1", ["a"], np.ones((1, 2))), ("u2", ["b"], np.ones((1, 2)))],
            [1.0, 0.0],
        )
        e = math.e
        assert agg.weights["u1"] == pytest.approx(e / (e + 1), abs=1e-9)
        assert agg.weights["u2"] == pytest.approx(1 / (e + 1), abs=1e-9)

    def test_rows_preserve_node_identity(self):
        agg = aggregate_retrieved(
            [("u1", ["a", "b"], np.ones((2, 2))), ("u2", ["c"], np.ones((1, 2)))],
            [0.5, 0.5],
        )
        assert agg.rows == [("u1", "a"), ("u1", "b"), ("u2", "c")]


class TestCrossAttention:
    def test_single_retrieved_node_gets_full_attention(self):
        a = cross_attention(np.random.default_rng(0).standard_normal((4, 8)), np.ones((1, 8)))
        assert np.allclose(a, 1.0)

    def test_orthogonal_rows_uniform(self):
        h_q = np.array([[1.0, 0.0, 0.0, 0.0]])
        h_r = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
        a = cross_attention(h_q, h_r)
        assert np.allclose(a, 1.0 / 3.0)

    def test_two_by_two_hand_case(self):
        # Logits (2, 0) scaled by sqrt(d=4) -> softmax(1, 0).
        h_q = np.array([[2.0, 0.0, 0.0, 0.0]])
        h_r = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        a = cross_attention(h_q, h_r, dim=4)
        e = math.e
        assert a[0, 0] == pytest.approx(e / (e + 1), abs=1e-9)
        assert a[0, 1] == pytest.approx(1 / (e + 1), abs=1e-9)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        a = cross_attention(rng.standard_normal((13, 6)), rng.standard_normal((9, 6)))
        assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)
        assert np.all(a > 0.0)
        assert np.all(a < 1.0 + 1e-12)


@pytest.fixture(scope="module")
def fused_setup(fixture_graph, fixture_bundle, backend):
    query = build_query_graph(SNIPPET, 7, 12, "m.py")
    unit_ids = sorted(fixture_bundle.units)[:3]
    units = [fixture_bundle.units[uid] for uid in unit_ids]
    scores = [0.9, 0.6, 0.3]
    return query, units, scores


class TestFusedGraph:
    def test_high_theta_gives_disjoint_union(self, fused_setup, fixture_graph, backend):
        query, units, scores = fused_setup
        cfg = FusionConfig(theta=0.99)
        out = fuse(query, fixture_graph, units, scores, backend, 8, cfg)
        assert out.fused.cross_edges == []
        n_retrieved = len({n for u in units for n in u.node_ids} - set(out.fused.merged_nodes))
        assert len(out.fused.graph.nodes) == len(query.graph.nodes) + n_retrieved

    def test_original_edges_preserved(self, fused_setup, fixture_graph, backend):
        query, units, scores = fused_setup
        cfg = FusionConfig(theta=0.4)
        out = fuse(query, fixture_graph, units, scores, backend, 8, cfg)
        fused_keys = {(e.src, e.dst, e.edge_type) for e in out.fused.graph.edges}
        for edge in query.graph.edges:
            assert (edge.src, edge.dst, edge.edge_type) in fused_keys
        members = {n for u in units for n in u.node_ids}
        merge = out.fused.merged_nodes
        for edge in fixture_graph.edges:
            if edge.src in members and edge.dst in members:
                src = merge.get(edge.src, edge.src)
                dst = merge.get(edge.dst, edge.dst)
                assert (src, dst, edge.edge_type) in fused_keys

    def test_cross_edges_satisfy_contract(self, fused_setup, fixture_graph, backend):
        query, units, scores = fused_setup
        cfg = FusionConfig(theta=0.4)
        out = fuse(query, fixture_graph, units, scores, backend, 8, cfg)
        for edge in out.fused.cross_edges:
            assert edge.weight > cfg.theta
            assert out.fused.provenance[edge.src] == "Query"
            assert out.fused.provenance[edge.dst].startswith("Retrieved:")
            q_node = out.fused.graph.nodes[edge.src]
            r_node = out.fused.graph.nodes[edge.dst]
            assert type_compatible(q_node, r_node)

    def test_theta_monotonicity(self, fused_setup, fixture_graph, backend):
        query, units, scores = fused_setup
        previous: set | None = None
        for theta in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
            out = fuse(query, fixture_graph, units, scores, backend, 8, FusionConfig(theta=theta))
            current = {(e.src, e.dst) for e in out.fused.cross_edges}
            if previous is not None:
                assert current <= previous
            previous = current

    def test_seed_determinism(self, fused_setup, fixture_graph, backend):
        query, units, scores = fused_setup
        cfg = FusionConfig(theta=0.4, seed=17)
        a = fuse(query, fixture_graph, units, scores, backend, 8, cfg)
        b = fuse(query, fixture_graph, units, scores, backend, 8, cfg)
        assert np.array_equal(a.attention, b.attention)
        assert [(e.src, e.dst, e.weight) for e in a.fused.cross_edges] == [
            (e.src, e.dst, e.weight) for e in b.fused.cross_edges
        ]

    def test_equivalent_retrieved_nodes_merge(self, backend, tmp_path):
        # Two identical functions in different files collapse to one node.
        from graphcomplete.graph_builder import build_graph
        from graphcomplete.index import build_indexes

        (tmp_path / "m1.py").write_text("def dup(x):\n    return x\n")
        (tmp_path / "m2.py").write_text("def dup(x):\n    return x\n")
        graph = build_graph(tmp_path).graph
        bundle = build_indexes(graph, backend, pe_dim=4)
        query = build_query_graph("def caller():\n    value = dup(", 2, 17, "q.py")
        unit_ids = sorted(bundle.units)
        units = [bundle.units[uid] for uid in unit_ids]
        out = fuse(query, graph, units, [0.8, 0.4], backend, 4, FusionConfig(theta=0.4))
        assert out.fused.merged_nodes, "duplicate functions should merge"
        for dropped, representative in out.fused.merged_nodes.items():
            assert dropped not in out.fused.graph.nodes
            assert representative in out.fused.graph.nodes

    def test_no_units_yields_query_only_graph(self, fixture_graph, backend):
        query = build_query_graph(SNIPPET, 7, 12, "m.py")
        out = fuse(query, fixture_graph, [], [], backend, 8, FusionConfig())
        assert set(out.fused.graph.nodes) == set(query.graph.nodes)
        assert out.fused.cross_edges == []

    def test_single_retrieved_node_forces_cross_edges(self, fixture_graph, fixture_bundle, backend):
        # With |V_r| = 1 every attention entry is exactly 1.0 > theta, so a
        # cross edge appears for every type-compatible query node.
        from dataclasses import replace

        query = build_query_graph(SNIPPET, 7, 12, "m.py")
        unit_id = sorted(fixture_bundle.units)[0]
        unit = replace(fixture_bundle.units[unit_id], node_ids=[fixture_bundle.units[unit_id].anchor])
        out = fuse(query, fixture_graph, [unit], [0.7], backend, 8, FusionConfig(theta=0.4))
        assert np.allclose(out.attention, 1.0)
        anchor_node = fixture_graph.nodes[unit.anchor]
        compatible_query_nodes = [
            n for n in query.graph.nodes.values() if type_compatible(n, anchor_node)
        ]
        assert compatible_query_nodes, "snippet must contain call expressions"
        assert len(out.fused.cross_edges) == len(compatible_query_nodes)
        assert len(out.fused.cross_edges) <= len(query.graph.nodes)
        for edge in out.fused.cross_edges:
            assert edge.weight == pytest.approx(1.0)
