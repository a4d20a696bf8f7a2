"""Graph container and neighborhood sampling oracles."""

import collections

import numpy as np
import pytest

from cortexmap.graph import (
    SPLIT_CODES,
    CortexGraph,
    balanced_node_stream,
    khop_subgraph,
    load_graph,
    sample_fixed_neighbors,
    save_graph,
    split_nodes,
)

from conftest import random_graph


def bfs_khop_oracle(graph, u, k):
    """Plain breadth-first search reference for the closed K-hop set."""
    dist = {u: 0}
    frontier = [u]
    for d in range(1, k + 1):
        nxt = []
        for node in frontier:
            for v in graph.neighbors(node):
                if int(v) not in dist:
                    dist[int(v)] = d
                    nxt.append(int(v))
        frontier = nxt
    return dist


def test_graph_normalizes_edges():
    g = CortexGraph(positions=np.zeros((4, 3)),
                    edges=[[1, 0], [0, 1], [2, 3]],
                    section_ids=np.zeros(4, dtype=np.int32),
                    coords=np.zeros((4, 2)))
    assert g.edges.tolist() == [[0, 1], [2, 3]]
    with pytest.raises(ValueError, match="self-loops"):
        CortexGraph(positions=np.zeros((2, 3)), edges=[[0, 0]],
                    section_ids=np.zeros(2, dtype=np.int32),
                    coords=np.zeros((2, 2)))


def test_adjacency_is_symmetric():
    rng = np.random.default_rng(0)
    g = random_graph(rng, 30, p=0.2)
    for u in range(g.n_nodes):
        for v in g.neighbors(u):
            assert u in g.neighbors(int(v))


def test_graph_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    g = random_graph(rng, 25, p=0.15)
    g.labels = rng.integers(-1, 4, size=25).astype(np.int32)
    g.splits = rng.integers(0, 4, size=25).astype(np.int8)
    g.features["cy"] = rng.normal(size=(25, 7)).astype(np.float32)
    g.features["pm"] = rng.normal(size=(25, 3)).astype(np.float32)
    g.feature_valid = rng.random(25) > 0.2
    path = tmp_path / "graph.bin"
    save_graph(path, g)
    g2 = load_graph(path)
    assert np.array_equal(g2.edges, g.edges)
    assert np.array_equal(g2.positions, g.positions)
    assert np.array_equal(g2.coords, g.coords)
    assert np.array_equal(g2.section_ids, g.section_ids)
    assert np.array_equal(g2.labels, g.labels)
    assert np.array_equal(g2.splits, g.splits)
    assert np.array_equal(g2.feature_valid, g.feature_valid)
    assert set(g2.features) == {"cy", "pm"}
    for name in g.features:
        assert np.array_equal(g2.features[name], g.features[name])


def test_split_nodes_by_section():
    g = CortexGraph(positions=np.zeros((6, 3)), edges=np.empty((0, 2)),
                    section_ids=np.array([0, 0, 1, 1, 2, 2], dtype=np.int32),
                    coords=np.zeros((6, 2)))
    split_nodes(g, {0: "train", 1: "test", 2: "train"})
    assert g.split_mask("train").tolist() == [1, 1, 0, 0, 1, 1]
    assert g.split_mask("test").tolist() == [0, 0, 1, 1, 0, 0]
    with pytest.raises(ValueError, match="without split"):
        split_nodes(g, {0: "train", 1: "test"})
    with pytest.raises(ValueError, match="unknown split"):
        split_nodes(g, {0: "train", 1: "test", 2: "validation"})


def test_khop_matches_bfs_oracle_on_random_graphs():
    rng = np.random.default_rng(2)
    for trial in range(100):
        n = int(rng.integers(5, 40))
        g = random_graph(rng, n, p=float(rng.uniform(0.05, 0.3)))
        u = int(rng.integers(n))
        k = int(rng.integers(0, 4))
        sub = khop_subgraph(g, u, k)
        oracle = bfs_khop_oracle(g, u, k)
        assert set(sub.nodes.tolist()) == set(oracle)
        for local, node in enumerate(sub.nodes):
            assert sub.hops[local] == oracle[int(node)]
        # induced edges: exactly the graph edges inside the node set
        nodes = set(sub.nodes.tolist())
        want = {(min(a, b), max(a, b)) for a, b in g.edges.tolist()
                if a in nodes and b in nodes}
        local_of = {int(v): i for i, v in enumerate(sub.nodes)}
        got = {tuple(sorted((int(sub.nodes[a]), int(sub.nodes[b]))))
               for a, b in sub.edges_local.tolist()}
        assert got == want
        assert sub.k == k
        assert int(sub.nodes[local_of[u]]) == u


def test_fixed_fanout_is_subset_of_khop():
    rng = np.random.default_rng(3)
    for trial in range(50):
        n = int(rng.integers(8, 40))
        g = random_graph(rng, n, p=0.25)
        u = int(rng.integers(n))
        k = int(rng.integers(1, 4))
        sub = sample_fixed_neighbors(g, u, k, fanout=3, rng=rng)
        full = set(khop_subgraph(g, u, k).nodes.tolist())
        assert set(sub.nodes.tolist()) <= full
        # per frontier node at most fanout new nodes per hop
        for hop in range(1, k + 1):
            parents = np.count_nonzero(sub.hops == hop - 1)
            children = np.count_nonzero(sub.hops == hop)
            assert children <= 3 * parents


def test_fixed_fanout_inclusion_frequency():
    # star graph: center with 6 leaves, fanout 3 -> each leaf in half the draws
    center = 0
    edges = [[0, i] for i in range(1, 7)]
    g = CortexGraph(positions=np.zeros((7, 3)), edges=edges,
                    section_ids=np.zeros(7, dtype=np.int32),
                    coords=np.zeros((7, 2)))
    rng = np.random.default_rng(4)
    trials = 2000
    counts = np.zeros(7)
    for _ in range(trials):
        sub = sample_fixed_neighbors(g, center, 1, fanout=3, rng=rng)
        counts[sub.nodes] += 1
    p = 0.5
    se = np.sqrt(p * (1 - p) / trials)
    assert np.all(np.abs(counts[1:] / trials - p) < 3 * se)


def test_balanced_stream_matches_inverse_frequency():
    rng = np.random.default_rng(5)
    n = 300
    g = random_graph(rng, n, p=0.02)
    labels = np.concatenate([np.zeros(210), np.ones(60), np.full(30, 2)])
    g.labels = labels.astype(np.int32)
    g.splits = np.full(n, SPLIT_CODES["train"], dtype=np.int8)
    stream = balanced_node_stream(g, "train", rng=np.random.default_rng(6))
    draws = 9000
    got = collections.Counter(g.labels[next(stream)] for _ in range(draws))
    p = 1 / 3
    se = np.sqrt(p * (1 - p) / draws)
    for c in range(3):
        assert abs(got[c] / draws - p) < 3 * se


def test_balanced_stream_skips_invalid_and_unlabeled():
    rng = np.random.default_rng(7)
    g = random_graph(rng, 20, p=0.1)
    g.labels = np.array([0] * 10 + [-1] * 10, dtype=np.int32)
    g.splits = np.full(20, SPLIT_CODES["train"], dtype=np.int8)
    g.feature_valid = np.array([True] * 5 + [False] * 15)
    stream = balanced_node_stream(g, "train", rng=np.random.default_rng(0))
    seen = {next(stream) for _ in range(200)}
    assert seen <= set(range(5))


def test_balanced_stream_empty_split_raises():
    rng = np.random.default_rng(8)
    g = random_graph(rng, 5, p=0.3)
    with pytest.raises(ValueError, match="no eligible"):
        next(balanced_node_stream(g, "test"))
