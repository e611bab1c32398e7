"""Vector indexes: exactness, recall, round trips, subgraph units."""

from __future__ import annotations

import numpy as np
import pytest

from graphcomplete.errors import DecodeError
from graphcomplete.index import (
    SUBGRAPH_NODE_CAP,
    FlatIndex,
    HnswIndex,
    build_indexes,
    cut_unit,
    load_units,
    save_units,
    _unit_adjacency,
)
from graphcomplete.graph_builder import build_graph
from graphcomplete.model import NodeType

from oracles import brute_force_cosine_topk


@pytest.fixture(scope="module")
def small_corpus():
    rng = np.random.default_rng(7)
    vectors = rng.standard_normal((300, 32)).astype(np.float32)
    ids = [f"v{i:04d}" for i in range(300)]
    return ids, vectors


class TestFlatIndex:
    def test_exact_hit_scores_one(self, small_corpus):
        ids, vectors = small_corpus
        index = FlatIndex(dim=32)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        hits = index.search(vectors[17], k=1)
        assert hits[0][0] == "v0017"
        assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_query_scores_zero(self):
        index = FlatIndex(dim=2)
        index.add("a", np.array([1.0, 0.0], dtype=np.float32))
        hits = index.search(np.array([0.0, 1.0], dtype=np.float32), k=1)
        assert hits[0][1] == pytest.approx(0.0, abs=1e-9)

    def test_matches_brute_force_exactly(self, small_corpus):
        ids, vectors = small_corpus
        index = FlatIndex(dim=32)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        rng = np.random.default_rng(11)
        for _ in range(20):
            q = rng.standard_normal(32).astype(np.float32)
            expected = brute_force_cosine_topk(q, ids, vectors, 7)
            got = index.search(q, k=7)
            assert [i for i, _ in got] == [i for i, _ in expected]
            for (_, a), (_, b) in zip(got, expected):
                assert a == pytest.approx(b, abs=1e-5)

    def test_scale_invariance(self):
        index = FlatIndex(dim=3)
        index.add("a", np.array([1.0, 2.0, 3.0], dtype=np.float32))
        index.add("b", 100.0 * np.array([1.0, 2.0, 3.0], dtype=np.float32))
        hits = index.search(np.array([1.0, 2.0, 3.0], dtype=np.float32), k=2)
        assert hits[0][1] == pytest.approx(hits[1][1], abs=1e-6)

    def test_zero_vector_never_outranks_positive(self):
        index = FlatIndex(dim=2)
        index.add("zero", np.zeros(2, dtype=np.float32))
        index.add("hit", np.array([1.0, 0.0], dtype=np.float32))
        hits = index.search(np.array([1.0, 0.0], dtype=np.float32), k=2)
        assert hits[0][0] == "hit"
        assert hits[1][1] == pytest.approx(0.0)

    def test_round_trip(self, small_corpus, tmp_path):
        ids, vectors = small_corpus
        index = FlatIndex(dim=32)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        index.save(tmp_path / "flat.jsonl")
        loaded = FlatIndex.load(tmp_path / "flat.jsonl")
        q = vectors[3]
        assert index.search(q, 10) == loaded.search(q, 10)


class TestHnswIndex:
    def test_exact_hit_first(self, small_corpus):
        ids, vectors = small_corpus
        index = HnswIndex(dim=32, m=16, ef_construction=100, ef_search=64)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        hits = index.search(vectors[42], k=3)
        assert hits[0][0] == "v0042"
        assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_k_larger_than_index_returns_all(self):
        index = HnswIndex(dim=4, m=8)
        rng = np.random.default_rng(3)
        for i in range(5):
            index.add(f"e{i}", rng.standard_normal(4).astype(np.float32))
        assert len(index.search(rng.standard_normal(4).astype(np.float32), k=50)) == 5

    def test_empty_index_returns_empty(self):
        index = HnswIndex(dim=4)
        assert index.search(np.ones(4, dtype=np.float32), k=5) == []

    def test_recall_at_10(self, small_corpus):
        ids, vectors = small_corpus
        index = HnswIndex(dim=32, m=32, ef_construction=200, ef_search=256)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        rng = np.random.default_rng(23)
        hits = total = 0
        for _ in range(30):
            q = rng.standard_normal(32).astype(np.float32)
            exact = {i for i, _ in brute_force_cosine_topk(q, ids, vectors, 10)}
            approx = {i for i, _ in index.search(q, 10)}
            hits += len(exact & approx)
            total += 10
        assert hits / total >= 0.95

    def test_round_trip_identical_results(self, small_corpus, tmp_path):
        ids, vectors = small_corpus
        index = HnswIndex(dim=32, m=16, ef_construction=100, ef_search=64)
        for i, v in zip(ids, vectors):
            index.add(i, v)
        index.save(tmp_path / "hnsw.jsonl")
        loaded = HnswIndex.load(tmp_path / "hnsw.jsonl")
        rng = np.random.default_rng(5)
        for _ in range(10):
            q = rng.standard_normal(32).astype(np.float32)
            assert index.search(q, 10) == loaded.search(q, 10)

    def test_build_is_deterministic(self, small_corpus):
        ids, vectors = small_corpus
        one = HnswIndex(dim=32, m=16)
        two = HnswIndex(dim=32, m=16)
        for i, v in zip(ids, vectors):
            one.add(i, v)
            two.add(i, v)
        assert one.neighbors == two.neighbors
        assert one.levels == two.levels

    def test_corrupt_file_is_decode_error(self, tmp_path):
        path = tmp_path / "hnsw.jsonl"
        path.write_text('{"format_version": 1, "kind": "flat", "dim": 2, "count": 0}\n')
        with pytest.raises(DecodeError):
            HnswIndex.load(path)


class TestUnits:
    def test_one_unit_per_function(self, fixture_graph, fixture_bundle):
        functions = fixture_graph.nodes_of_type(NodeType.Function)
        assert len(fixture_bundle.units) == len(functions) == 13
        assert len(fixture_bundle.semantic) == 13
        assert len(fixture_bundle.structural) == 13

    def test_anchor_is_member(self, fixture_bundle):
        for unit in fixture_bundle.units.values():
            assert unit.anchor in unit.node_ids
            assert len(unit.node_ids) <= SUBGRAPH_NODE_CAP

    def test_unit_text_contains_anchor_source(self, fixture_graph, fixture_bundle):
        for unit in fixture_bundle.units.values():
            anchor = fixture_graph.nodes[unit.anchor]
            assert anchor.code_text in unit.code_text

    def test_over_cap_truncation_is_bfs_by_hop_then_id(self, tmp_path):
        # A function calling 300 siblings exceeds the 200-node cap.
        lines = ["def hub():"]
        lines += [f"    f{i:03d}()" for i in range(300)]
        lines += [""]
        for i in range(300):
            lines += [f"def f{i:03d}():", "    pass", ""]
        (tmp_path / "big.py").write_text("\n".join(lines))
        graph = build_graph(tmp_path).graph
        adjacency = _unit_adjacency(graph)
        hub = next(
            n for n in graph.nodes_of_type(NodeType.Function) if n.semantic_type == "def hub()"
        )
        unit = cut_unit(graph, hub.id, adjacency)
        assert len(unit.node_ids) == SUBGRAPH_NODE_CAP
        assert unit.node_ids[0] == hub.id
        # Hop-1 neighbors fill the remainder in ascending id order.
        hop1 = sorted(adjacency[hub.id])
        assert unit.node_ids[1:] == hop1[: SUBGRAPH_NODE_CAP - 1]

    def test_zero_function_repo_gives_empty_indexes(self, tmp_path, backend):
        (tmp_path / "only_constants.py").write_text("X = 1\nY = 2\n")
        graph = build_graph(tmp_path).graph
        bundle = build_indexes(graph, backend)
        assert len(bundle.units) == 0
        assert len(bundle.semantic) == 0
        assert any(d.kind == "no_units" for d in bundle.diagnostics)

    def test_catalog_round_trip(self, fixture_bundle, tmp_path):
        save_units(fixture_bundle.units, tmp_path / "units.jsonl")
        loaded = load_units(tmp_path / "units.jsonl")
        assert loaded == fixture_bundle.units

    def test_bundle_search_round_trip(self, fixture_bundle, tmp_path, backend):
        fixture_bundle.semantic.save(tmp_path / "sem.jsonl")
        fixture_bundle.structural.save(tmp_path / "str.jsonl")
        sem = HnswIndex.load(tmp_path / "sem.jsonl")
        struct = FlatIndex.load(tmp_path / "str.jsonl")
        q_sem = np.ones(backend.dim, dtype=np.float32)
        q_str = np.ones(backend.dim + fixture_bundle.pe_dim, dtype=np.float32)
        assert fixture_bundle.semantic.search(q_sem, 5) == sem.search(q_sem, 5)
        assert fixture_bundle.structural.search(q_str, 5) == struct.search(q_str, 5)
