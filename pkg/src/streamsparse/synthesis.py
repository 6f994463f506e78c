"""Category-specific review synthesis and merging back into the stream.

Each slot gets its own random generator derived from (seed, slot key), so the
result of a slot never depends on which worker ran it or in what order.
"""

from __future__ import annotations

import hashlib
import logging
import random
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .ingest import ReviewRecord, ReviewStream
from .interpolation import InterpolationPlan, InterpolationSlot, slot_timestamp
from .llm_gateway import (
    BackendUnavailable,
    RateLimited,
    GenerationBackend,
    PromptTemplate,
    get_templates,
    parse_profile,
    parse_selection,
    parse_synthetic_review,
    prompt_hash,
    render,
)
from .sparsity import Category, SparsityAssignment
from .temporal_graph import (
    BipartiteGraph,
    TemporalGraph,
    second_order_global,
    second_order_local,
    third_order,
)

log = logging.getLogger(__name__)

REVIEWS_PER_PRODUCT = 5


class SynthesisError(RuntimeError):
    def __init__(self, message: str, slot: InterpolationSlot | None = None):
        self.slot = slot
        if slot is not None:
            message = f"slot {slot.user_id}/span {slot.span_index}/#{slot.slot_ordinal}: {message}"
        super().__init__(message)


class NoSecondOrderProducts(SynthesisError):
    pass


@dataclass(frozen=True)
class SynthesisConfig:
    K: int = 5
    N: int = 5
    M: int = 5
    seed: int = 0
    workers: int = 1
    reviews_per_product: int = REVIEWS_PER_PRODUCT

    def __post_init__(self):
        for name in ("K", "N", "M", "workers", "reviews_per_product"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class SyntheticReview:
    user_id: str
    product_id: str
    timestamp: int
    rating: int
    text: str
    category: Category
    span_index: int
    provenance: dict = field(default_factory=dict, compare=False)

    def to_record(self) -> ReviewRecord:
        return ReviewRecord(
            self.user_id, self.product_id, self.timestamp, self.rating, self.text,
            synthetic=True, category=str(self.category),
        )


@dataclass
class SynthesisReport:
    requested: dict[str, int] = field(default_factory=dict)
    produced: dict[str, int] = field(default_factory=dict)
    fallbacks: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    rating_distribution: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "requested": self.requested,
            "produced": self.produced,
            "fallbacks": self.fallbacks,
            "failures": self.failures,
            "rating_distribution": self.rating_distribution,
        }


class _Context:
    """Per-slot state: graph, stream, backend, templates and the slot's RNG."""

    def __init__(self, stream, tg, backend, cfg, slot, templates):
        self.stream = stream
        self.tg = tg
        self.g: BipartiteGraph = tg.global_graph
        self.backend = backend
        self.cfg = cfg
        self.slot = slot
        self.templates = templates
        key = f"{cfg.seed}\x1fsynth\x1f{slot.user_id}\x1f{slot.span_index}\x1f{slot.slot_ordinal}"
        self.rng = random.Random(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big"))
        self.prompts: list[str] = []

    def ask(self, template_id: str, bindings: Mapping) -> str:
        prompt = render(template_id, bindings, self.templates)
        self.prompts.append(f"{template_id}:{prompt_hash(prompt)[:16]}")
        return self.backend.complete(prompt)

    def sample(self, items: Sequence, k: int) -> list:
        items = list(items)
        if len(items) <= k:
            return items
        return self.rng.sample(items, k)

    def texts(self, review_ids) -> list[str]:
        return [self.stream[i].text for i in review_ids]

    def user_reviews(self, user: str, g: BipartiteGraph | None = None) -> list[int]:
        return sorted((g or self.g).review_indices(user, "user"))

    def product_reviews(self, product: str) -> list[int]:
        return sorted(self.g.review_indices(product, "product"))

    def product_profile(self, product: str) -> str:
        ids = self.sample(self.product_reviews(product), self.cfg.reviews_per_product)
        return parse_profile(self.ask("P_pm", {"reviews": self.texts(ids)}))

    def finish(self, user_profile: str, product: str, product_profile: str, path: str) -> SyntheticReview:
        raw = self.ask("P_sd", {"user_profile": user_profile, "product_profile": product_profile})
        text, rating = parse_synthetic_review(raw)
        return SyntheticReview(
            user_id=self.slot.user_id,
            product_id=product,
            timestamp=slot_timestamp(self.slot, self.cfg.seed),
            rating=rating,
            text=text,
            category=self.slot.category,
            span_index=self.slot.span_index,
            provenance={
                "path": path,
                "prompts": list(self.prompts),
                "backend": self.backend.kind,
                "seed": self.cfg.seed,
            },
        )


def anchor_product(g: BipartiteGraph, stream: ReviewStream, user: str) -> str | None:
    """The user's most-reviewed product; ties go to the most recently reviewed, then smallest id."""
    counts: Counter = Counter()
    latest: dict[str, int] = {}
    for p, idx in g.user_adj.get(user, ()):
        counts[p] += 1
        latest[p] = max(latest.get(p, -1), stream[idx].timestamp)
    if not counts:
        return None
    return min(counts, key=lambda p: (-counts[p], -latest[p], p))


def candidate_products(g: BipartiteGraph, user: str) -> list[str]:
    """Products reached through Second_Order(First_Order(user)), excluding the user's own products."""
    return sorted(third_order(g, user, "user"))


def _select_product(ctx: _Context, user: str) -> tuple[str, str]:
    # runs before the user profile so a fallback wastes no backend calls
    candidates = candidate_products(ctx.g, user)
    if not candidates:
        raise NoSecondOrderProducts("no second-order products reachable", ctx.slot)
    chosen = sorted(ctx.sample(candidates, ctx.cfg.N))
    profiles = [ctx.product_profile(p) for p in chosen]
    anchor = anchor_product(ctx.g, ctx.stream, user)
    anchor_profile = ctx.product_profile(anchor)
    raw = ctx.ask("P_so", {"original_profile": anchor_profile, "candidates": profiles})
    picked = parse_selection(raw, len(chosen))[0]
    return chosen[picked - 1], profiles[picked - 1]


def synth_midtail(user, slot, tg, backend, cfg, stream, templates=None) -> SyntheticReview:
    ctx = _Context(stream, tg, backend, cfg, slot, templates or get_templates())
    own = ctx.user_reviews(user)
    if not own:
        raise SynthesisError("mid-tail user has no reviews", slot)
    try:
        product, product_profile = _select_product(ctx, user)
    except NoSecondOrderProducts:
        log.info("%s: no second-order products, using extreme path", user)
        return _extreme(ctx, user, path="extreme-fallback")
    sample = ctx.sample(own, cfg.K)
    user_profile = parse_profile(ctx.ask("P_um", {"reviews": ctx.texts(sample)}))
    return ctx.finish(user_profile, product, product_profile, "midtail")


def _neighbour_reviews(ctx: _Context, users: set[str], g: BipartiteGraph) -> list[str]:
    picked = sorted(ctx.sample(sorted(users), ctx.cfg.N))
    texts = []
    for u in picked:
        texts.extend(ctx.texts(ctx.sample(ctx.user_reviews(u, g), ctx.cfg.reviews_per_product)))
    return texts


def synth_longtail(user, slot, tg, backend, cfg, stream, templates=None) -> SyntheticReview:
    ctx = _Context(stream, tg, backend, cfg, slot, templates or get_templates())
    try:
        product, product_profile = _select_product(ctx, user)
    except NoSecondOrderProducts:
        log.info("%s: no second-order products, using extreme path", user)
        return _extreme(ctx, user, path="extreme-fallback")
    local = second_order_local(tg, user, slot.span_index)
    bindings = {
        "own_reviews": ctx.texts(ctx.user_reviews(user)),
        "local_reviews": _neighbour_reviews(ctx, local, tg.snapshots[slot.span_index]),
        "global_reviews": _neighbour_reviews(ctx, second_order_global(tg, user), tg.global_graph),
    }
    user_profile = parse_profile(ctx.ask("P_ul", bindings))
    return ctx.finish(user_profile, product, product_profile, "longtail")


def top_products(g: BipartiteGraph, M: int, stream: ReviewStream) -> list[str]:
    """Products by (review count desc, mean rating desc, id asc), first ``M``."""
    ranked = []
    for p, nbrs in g.product_adj.items():
        ratings = [stream[i].rating for _, i in nbrs]
        if ratings:
            ranked.append((-len(ratings), -sum(ratings) / len(ratings), p))
    ranked.sort()
    return [p for _, _, p in ranked[:M]]


def _extreme(ctx: _Context, user: str, path: str = "extreme") -> SyntheticReview:
    tops = top_products(ctx.g, ctx.cfg.M, ctx.stream)
    if not tops:
        raise SynthesisError("graph has no products", ctx.slot)
    product = tops[ctx.slot.sequence % len(tops)]
    user_profile = parse_profile(ctx.ask("P_ue", {"reviews": ctx.texts(ctx.user_reviews(user))}))
    return ctx.finish(user_profile, product, ctx.product_profile(product), path)


def synth_extreme(user, slot, tg, backend, cfg, stream, templates=None) -> SyntheticReview:
    ctx = _Context(stream, tg, backend, cfg, slot, templates or get_templates())
    return _extreme(ctx, user)


PIPELINES = {
    Category.MIDTAIL: synth_midtail,
    Category.LONGTAIL: synth_longtail,
    Category.EXTREME: synth_extreme,
}


def merge_stream(stream: ReviewStream, synthetic: Sequence[SyntheticReview]) -> ReviewStream:
    records = list(stream.records) + [s.to_record() for s in synthetic]
    return ReviewStream.from_records(records, stream.dataset_name)


def run_synthesis(
    plan: InterpolationPlan,
    tg: TemporalGraph,
    assignments: Sequence[SparsityAssignment],
    backend: GenerationBackend,
    cfg: SynthesisConfig,
    stream: ReviewStream,
    templates: Mapping[str, PromptTemplate] | None = None,
) -> tuple[ReviewStream, SynthesisReport, list[SyntheticReview]]:
    """Run every slot through its category pipeline and merge the results.

    Failed slots are recorded in the report rather than raised.
    """
    templates = templates or get_templates()
    category = {a.user_id: a.category for a in assignments}
    # once retries are exhausted the backend is treated as down for the rest of the run
    backend_down = threading.Event()

    def job(slot: InterpolationSlot):
        if backend_down.is_set():
            return None, BackendUnavailable("skipped: backend unavailable earlier in this run")
        cat = category.get(slot.user_id, slot.category)
        try:
            return PIPELINES[cat](slot.user_id, slot, tg, backend, cfg, stream, templates), None
        except (BackendUnavailable, RateLimited) as exc:
            backend_down.set()
            return None, exc
        except Exception as exc:  # noqa: BLE001 - every failure is reported per slot
            return None, exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, plan.slots))
    else:
        results = [job(s) for s in plan.slots]

    report = SynthesisReport()
    produced = []
    for slot, (review, exc) in zip(plan.slots, results):
        cat = str(slot.category)
        report.requested[cat] = report.requested.get(cat, 0) + 1
        if review is None:
            report.failures.append({
                "user_id": slot.user_id, "span_index": slot.span_index,
                "slot_ordinal": slot.slot_ordinal, "error": f"{type(exc).__name__}: {exc}",
            })
            continue
        produced.append(review)
        report.produced[cat] = report.produced.get(cat, 0) + 1
        dist = report.rating_distribution.setdefault(cat, {str(r): 0 for r in range(1, 6)})
        dist[str(review.rating)] += 1
        if review.provenance.get("path") == "extreme-fallback":
            report.fallbacks.append({
                "user_id": slot.user_id, "span_index": slot.span_index, "slot_ordinal": slot.slot_ordinal,
            })
    return merge_stream(stream, produced), report, produced
