"""Vocabulary richness (type-token ratio) of original vs synthetic reviews."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable

from .ingest import ReviewStream

_TOKEN = re.compile(r"[^\W_]+")

GROUPS = ("original", "synthetic-midtail", "synthetic-longtail", "synthetic-extreme")
_GROUP_OF_CATEGORY = {
    "MidTail": "synthetic-midtail",
    "LongTail": "synthetic-longtail",
    "Extreme": "synthetic-extreme",
}


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def type_token_ratio(tokens: list[str]) -> float:
    return len(set(tokens)) / len(tokens)


def richness(texts: Iterable[str]) -> float | None:
    """Mean per-review TTR over reviews with at least one token; None if there are none."""
    ratios = [type_token_ratio(toks) for toks in map(tokenize, texts) if toks]
    if not ratios:
        return None
    return math.fsum(ratios) / len(ratios)


@dataclass
class GroupRichness:
    richness: float
    reviews: int
    tokens: int


@dataclass
class RichnessReport:
    groups: dict[str, GroupRichness] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            name: {"richness": g.richness, "reviews": g.reviews, "tokens": g.tokens}
            for name, g in self.groups.items()
        }

    def table(self) -> str:
        rows = [("group", "reviews", "tokens", "richness")]
        for name, g in self.groups.items():
            rows.append((name, str(g.reviews), str(g.tokens), f"{g.richness:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = []
        for r in rows:
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells))
        return "\n".join(lines)


def richness_report(stream: ReviewStream) -> RichnessReport:
    texts: dict[str, list[str]] = {g: [] for g in GROUPS}
    for rec in stream:
        group = _GROUP_OF_CATEGORY.get(rec.category, "synthetic-other") if rec.synthetic else "original"
        texts.setdefault(group, []).append(rec.text)

    report = RichnessReport()
    for group, items in texts.items():
        value = richness(items)
        if value is None:
            continue
        report.groups[group] = GroupRichness(
            richness=value,
            reviews=len(items),
            tokens=sum(len(tokenize(t)) for t in items),
        )
    return report
