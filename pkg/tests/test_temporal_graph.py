import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bfs_layers, oracle_first, oracle_second, oracle_span_index, oracle_third, random_graph_edges
from streamsparse.ingest import ReviewRecord, ReviewStream
from streamsparse.temporal_graph import (
    BipartiteGraph,
    EmptyStream,
    build_temporal_graph,
    export_edge_list,
    first_order,
    second_order,
    second_order_global,
    second_order_local,
    third_order,
)


def graph(edges):
    g = BipartiteGraph()
    for i, (u, p) in enumerate(edges):
        g.add_edge(u, p, i)
    return g


def stream_of(rows):
    return ReviewStream.from_records(ReviewRecord(u, p, t, 5, "") for u, p, t in rows)


def test_first_order_basic():
    g = graph([("u1", "p1"), ("u1", "p2")])
    assert first_order(g, "u1") == {"p1", "p2"}
    assert first_order(g, "nobody") == set()


def test_second_order_basic():
    assert second_order(graph([("u1", "p1"), ("u2", "p1")]), "u1") == {"u2"}
    assert second_order(graph([("u1", "p1"), ("u1", "p2")]), "u1") == set()


def test_third_order_basic():
    g = graph([("u1", "p1"), ("u2", "p1"), ("u2", "p2")])
    assert third_order(g, "u1") == {"p2"}
    star = graph([("u1", "p1"), ("u2", "p1"), ("u3", "p1")])
    assert third_order(star, "u1") == set()


def test_ambiguous_id_needs_side():
    g = graph([("x", "y"), ("z", "x")])
    with pytest.raises(ValueError):
        first_order(g, "x")
    assert first_order(g, "x", "user") == {"y"}
    assert first_order(g, "x", "product") == {"z"}


def test_random_graphs_match_oracles():
    rng = random.Random(11)
    for _ in range(30):
        edges = random_graph_edges(rng, 15, 15, 60)
        g = graph(edges)
        for u in {u for u, _ in edges}:
            layers = bfs_layers(edges, u, "u", 3)
            assert first_order(g, u, "user") == oracle_first(edges, u, "u") == layers[0]
            assert second_order(g, u, "user") == oracle_second(edges, u, "u") == layers[1]
            assert third_order(g, u, "user") == oracle_third(edges, u, "u") == layers[2]
        for p in {p for _, p in edges}:
            assert second_order(g, p, "product") == oracle_second(edges, p, "p")


def test_equal_width_windows():
    tg = build_temporal_graph(stream_of([("u", "p", 0), ("u", "p", 100)]), 10)
    assert [(w.start, w.end) for w in tg.spans] == [(i * 10, i * 10 + 10) for i in range(10)]
    assert tg.spans[-1].inclusive and tg.spans[-1].contains(100)
    assert not tg.spans[0].contains(10)
    assert tg.span_of_record == [0, 9]


def test_single_timestamp_is_one_window():
    tg = build_temporal_graph(stream_of([("u1", "p", 7), ("u2", "p", 7), ("u3", "q", 7)]), 10)
    assert tg.snapshots[0].n_edges == 3
    assert all(s.n_edges == 0 for s in tg.snapshots[1:])
    assert tg.spans[0].contains(7)


def test_empty_stream_rejected():
    with pytest.raises(EmptyStream):
        build_temporal_graph(ReviewStream(), 10)
    with pytest.raises(ValueError):
        build_temporal_graph(stream_of([("u", "p", 1)]), 0)


def test_random_stream_span_index():
    rng = random.Random(5)
    rows = [(f"u{rng.randrange(8)}", f"p{rng.randrange(8)}", rng.randrange(10_000)) for _ in range(50)]
    s = stream_of(rows)
    tg = build_temporal_graph(s, 10)
    t_min = min(r.timestamp for r in s)
    t_max = max(r.timestamp for r in s)
    for idx, rec in enumerate(s):
        expected = oracle_span_index(rec.timestamp, t_min, t_max, 10)
        assert tg.span_of_record[idx] == expected
        assert tg.spans[expected].contains(rec.timestamp)


def test_local_and_global():
    s = stream_of([("a", "p", 0), ("b", "p", 30), ("c", "p", 35), ("d", "q", 100)])
    tg = build_temporal_graph(s, 10)
    assert second_order_global(tg, "a") == {"b", "c"}
    assert second_order_local(tg, "b", 3) == {"c"}
    assert second_order_local(tg, "a", 3) == set()
    assert second_order_local(tg, "a", 0) == set()
    with pytest.raises(IndexError):
        second_order_local(tg, "a", 10)


def test_single_span_local_equals_global():
    rng = random.Random(9)
    rows = [(f"u{rng.randrange(6)}", f"p{rng.randrange(6)}", rng.randrange(100)) for _ in range(30)]
    tg = build_temporal_graph(stream_of(rows), 1)
    for u in {r[0] for r in rows}:
        assert second_order_local(tg, u, 0) == second_order_global(tg, u)


def test_local_matches_filtered_oracle():
    rng = random.Random(21)
    rows = [(f"u{rng.randrange(10)}", f"p{rng.randrange(10)}", rng.randrange(1000)) for _ in range(80)]
    s = stream_of(rows)
    tg = build_temporal_graph(s, 4)
    for span in range(4):
        edges = [(r.user_id, r.product_id) for i, r in enumerate(s) if tg.spans[span].contains(r.timestamp)]
        for u in {r[0] for r in rows}:
            assert second_order_local(tg, u, span) == oracle_second(edges, u, "u")
            assert second_order_local(tg, u, span) <= second_order_global(tg, u)


def test_export_edge_list():
    s = stream_of([("a", "p", 0), ("b", "q", 10)])
    lines = list(export_edge_list(build_temporal_graph(s, 2), s))
    assert lines == ["0\ta\tp\t0", "1\tb\tq\t10"]


rows_strategy = st.lists(
    st.tuples(st.sampled_from("abcdef"), st.sampled_from("pqrstu"), st.integers(0, 500)),
    min_size=1, max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(rows_strategy, st.integers(1, 12))
def test_partition_and_symmetry(rows, n_spans):
    s = stream_of(rows)
    tg = build_temporal_graph(s, n_spans)
    union = Counter()
    for snap in tg.snapshots:
        union.update(snap.edges())
    assert union == Counter(tg.global_graph.edges())
    for g in [tg.global_graph, *tg.snapshots]:
        fwd = Counter((u, p, i) for u, nb in g.user_adj.items() for p, i in nb)
        back = Counter((u, p, i) for p, nb in g.product_adj.items() for u, i in nb)
        assert fwd == back
        assert not set(g.user_adj) & set(g.product_adj)


@settings(max_examples=60, deadline=None)
@given(rows_strategy, st.sampled_from("abcdef"), st.sampled_from("pqrstu"))
def test_adding_edge_never_shrinks_second_order(rows, u, p):
    before = graph([(a, b) for a, b, _ in rows])
    after = graph([(a, b) for a, b, _ in rows] + [(u, p)])
    for user in before.user_adj:
        so = second_order(before, user, "user")
        assert user not in so
        assert so <= second_order(after, user, "user")
