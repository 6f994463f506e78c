"""Locating the (user, timespan) positions that need synthetic reviews."""

from __future__ import annotations

import hashlib
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .ingest import ReviewStream
from .sparsity import SPARSE_CATEGORIES, Category, SparsityAssignment
from .temporal_graph import SpanWindow, TemporalGraph


class NoSpans(ValueError):
    pass


@dataclass(frozen=True)
class PlanConfig:
    floor: int = 10
    seed: int = 0


@dataclass(frozen=True)
class InterpolationSlot:
    user_id: str
    category: Category
    span_index: int
    window: SpanWindow
    slot_ordinal: int
    top_up: bool = False
    # position of this slot in the user's own slot list; drives round-robin choices
    sequence: int = 0

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.user_id, self.span_index, self.slot_ordinal)


@dataclass
class InterpolationPlan:
    slots: list[InterpolationSlot] = field(default_factory=list)
    original_counts: dict[str, int] = field(default_factory=dict)

    @property
    def counts(self) -> dict[Category, int]:
        c = Counter(s.category for s in self.slots)
        return {cat: c.get(cat, 0) for cat in SPARSE_CATEGORIES}

    def slots_for(self, user: str) -> list[InterpolationSlot]:
        return [s for s in self.slots if s.user_id == user]


def _user_span_presence(stream: ReviewStream, tg: TemporalGraph) -> dict[str, Counter]:
    presence: dict[str, Counter] = defaultdict(Counter)
    for idx, rec in enumerate(stream):
        presence[rec.user_id][tg.span_of_record[idx]] += 1
    return presence


def plan_interpolation(
    stream: ReviewStream,
    tg: TemporalGraph,
    assignments: list[SparsityAssignment],
    cfg: PlanConfig = PlanConfig(),
) -> InterpolationPlan:
    """One slot per empty span for every sparse user, plus round-robin top-ups
    until the user's total strictly exceeds ``cfg.floor``."""
    if tg.n_spans < 1:
        raise NoSpans("temporal graph has no spans")

    presence = _user_span_presence(stream, tg)
    plan = InterpolationPlan()
    for a in sorted(assignments, key=lambda a: a.user_id):
        if a.category not in SPARSE_CATEGORIES:
            continue
        spans_hit = presence.get(a.user_id, Counter())
        original = sum(spans_hit.values())
        plan.original_counts[a.user_id] = original

        empty = [i for i in range(tg.n_spans) if spans_hit.get(i, 0) == 0]
        per_span = Counter()
        user_slots = []
        for i in empty:
            user_slots.append((i, per_span[i], False))
            per_span[i] += 1

        rotation = empty or list(range(tg.n_spans))
        k = 0
        while original + len(user_slots) <= cfg.floor:
            i = rotation[k % len(rotation)]
            user_slots.append((i, per_span[i], True))
            per_span[i] += 1
            k += 1

        for seq, (i, ordinal, top_up) in enumerate(user_slots):
            plan.slots.append(
                InterpolationSlot(a.user_id, a.category, i, tg.spans[i], ordinal, top_up, seq)
            )
    return plan


def check_plan(plan: InterpolationPlan, stream: ReviewStream, tg: TemporalGraph, floor: int) -> list[str]:
    """Recount the plan against the stream; returns a list of violation messages."""
    presence = _user_span_presence(stream, tg)
    problems = []
    by_user: dict[str, list[InterpolationSlot]] = defaultdict(list)
    for s in plan.slots:
        by_user[s.user_id].append(s)
        if s.category == Category.NORMAL:
            problems.append(f"{s.user_id}: slot planned for a Normal user")
        if presence[s.user_id].get(s.span_index, 0) > 0 and not s.top_up:
            problems.append(f"{s.user_id}: non top-up slot in occupied span {s.span_index}")
    for user, slots in by_user.items():
        total = sum(presence[user].values()) + len(slots)
        if total <= floor:
            problems.append(f"{user}: total {total} does not exceed floor {floor}")
        covered = set(presence[user]) | {s.span_index for s in slots}
        missing = sorted(set(range(tg.n_spans)) - covered)
        if missing:
            problems.append(f"{user}: spans {missing} left empty")
    return problems


def _slot_rng(slot: InterpolationSlot, seed: int, salt: str = "ts") -> random.Random:
    material = f"{seed}\x1f{salt}\x1f{slot.user_id}\x1f{slot.span_index}\x1f{slot.slot_ordinal}"
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def slot_timestamp(slot: InterpolationSlot, seed: int) -> int:
    w = slot.window
    hi = w.end if w.inclusive else w.end - 1
    if hi <= w.start:
        return w.start
    return _slot_rng(slot, seed).randint(w.start, hi)
