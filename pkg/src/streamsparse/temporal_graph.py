"""Bipartite user/product graphs, discrete-time snapshots and neighborhood queries."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Literal

from .ingest import ReviewStream

Side = Literal["user", "product"]


class EmptyStream(ValueError):
    pass


@dataclass(frozen=True)
class SpanWindow:
    """Integer time window [start, end), or [start, end] when ``inclusive``."""

    index: int
    start: int
    end: int
    inclusive: bool = False

    def contains(self, ts: int) -> bool:
        if self.inclusive:
            return self.start <= ts <= self.end
        return self.start <= ts < self.end


@dataclass
class BipartiteGraph:
    """User/product adjacency; each edge is tagged with the index of its review in the stream."""

    user_adj: dict[str, list[tuple[str, int]]] = field(default_factory=lambda: defaultdict(list))
    product_adj: dict[str, list[tuple[str, int]]] = field(default_factory=lambda: defaultdict(list))

    def add_edge(self, user: str, product: str, review_idx: int) -> None:
        self.user_adj[user].append((product, review_idx))
        self.product_adj[product].append((user, review_idx))

    def edges(self) -> list[tuple[str, str, int]]:
        return [(u, p, i) for u, nbrs in self.user_adj.items() for p, i in nbrs]

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.user_adj.values())

    def side_of(self, node: str) -> Side | None:
        in_u = node in self.user_adj
        in_p = node in self.product_adj
        if in_u and in_p:
            raise ValueError(f"id {node!r} is both a user and a product; pass side explicitly")
        if in_u:
            return "user"
        if in_p:
            return "product"
        return None

    def _adj(self, side: Side) -> dict[str, list[tuple[str, int]]]:
        return self.user_adj if side == "user" else self.product_adj

    def review_indices(self, node: str, side: Side | None = None) -> list[int]:
        side = side or self.side_of(node)
        if side is None:
            return []
        return [i for _, i in self._adj(side).get(node, ())]


def _neighbors(g: BipartiteGraph, node: str, side: Side) -> set[str]:
    return {n for n, _ in g._adj(side).get(node, ())}


def _resolve(g: BipartiteGraph, node: str, side: Side | None) -> Side | None:
    return side if side is not None else g.side_of(node)


def _flip(side: Side) -> Side:
    return "product" if side == "user" else "user"


def first_order(g: BipartiteGraph, node: str, side: Side | None = None) -> set[str]:
    side = _resolve(g, node, side)
    if side is None:
        return set()
    return _neighbors(g, node, side)


def second_order(g: BipartiteGraph, node: str, side: Side | None = None) -> set[str]:
    side = _resolve(g, node, side)
    if side is None:
        return set()
    out: set[str] = set()
    for mid in _neighbors(g, node, side):
        out |= _neighbors(g, mid, _flip(side))
    out.discard(node)
    return out


def third_order(g: BipartiteGraph, node: str, side: Side | None = None) -> set[str]:
    side = _resolve(g, node, side)
    if side is None:
        return set()
    far: set[str] = set()
    for peer in second_order(g, node, side):
        far |= _neighbors(g, peer, side)
    return far - _neighbors(g, node, side)


@dataclass
class TemporalGraph:
    spans: list[SpanWindow]
    snapshots: list[BipartiteGraph]
    global_graph: BipartiteGraph
    span_of_record: list[int]

    @property
    def n_spans(self) -> int:
        return len(self.spans)


def span_boundaries(t_min: int, t_max: int, n_spans: int) -> list[SpanWindow]:
    """Equal-width integer windows covering [t_min, t_max].

    Window i holds integer t with ceil(b_i) <= t < ceil(b_{i+1}) where
    b_i = t_min + i * (t_max - t_min) / n_spans, which is exactly the set of t
    with floor((t - t_min) * n_spans / (t_max - t_min)) == i.
    """
    width_num = t_max - t_min
    if width_num == 0:
        # everything lands in window 0; the rest are empty
        return [SpanWindow(i, t_min, t_min, inclusive=(i == 0)) for i in range(n_spans)]
    starts = [t_min + -((-i * width_num) // n_spans) for i in range(n_spans)]
    ends = starts[1:] + [t_max]
    return [
        SpanWindow(i, s, e, inclusive=(i == n_spans - 1)) for i, (s, e) in enumerate(zip(starts, ends))
    ]


def span_index(ts: int, t_min: int, t_max: int, n_spans: int) -> int:
    if t_max == t_min:
        return 0
    return min((ts - t_min) * n_spans // (t_max - t_min), n_spans - 1)


def build_temporal_graph(stream: ReviewStream, n_spans: int = 10) -> TemporalGraph:
    if n_spans < 1:
        raise ValueError("n_spans must be >= 1")
    if len(stream) == 0:
        raise EmptyStream("cannot build a temporal graph from an empty stream")

    times = [r.timestamp for r in stream]
    t_min, t_max = min(times), max(times)
    spans = span_boundaries(t_min, t_max, n_spans)
    snapshots = [BipartiteGraph() for _ in range(n_spans)]
    global_graph = BipartiteGraph()
    span_of_record = []
    for idx, rec in enumerate(stream):
        s = span_index(rec.timestamp, t_min, t_max, n_spans)
        span_of_record.append(s)
        snapshots[s].add_edge(rec.user_id, rec.product_id, idx)
        global_graph.add_edge(rec.user_id, rec.product_id, idx)
    return TemporalGraph(spans, snapshots, global_graph, span_of_record)


def second_order_local(tg: TemporalGraph, user: str, span_idx: int) -> set[str]:
    if not 0 <= span_idx < tg.n_spans:
        raise IndexError(f"span index {span_idx} outside 0..{tg.n_spans - 1}")
    return second_order(tg.snapshots[span_idx], user, "user")


def second_order_global(tg: TemporalGraph, user: str) -> set[str]:
    return second_order(tg.global_graph, user, "user")


def export_edge_list(tg: TemporalGraph, stream: ReviewStream) -> Iterable[str]:
    """Debug dump: span_index, user_id, product_id, timestamp (tab separated)."""
    for span_idx, snap in enumerate(tg.snapshots):
        for user, product, idx in sorted(snap.edges(), key=lambda e: e[2]):
            yield f"{span_idx}\t{user}\t{product}\t{stream[idx].timestamp}"


def mean_second_order_degree(g: BipartiteGraph) -> float:
    users = list(g.user_adj)
    if not users:
        return 0.0
    return math.fsum(len(second_order(g, u, "user")) for u in users) / len(users)
