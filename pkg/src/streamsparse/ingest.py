"""Loading Amazon-style JSON-lines review dumps into a chronological stream."""

from __future__ import annotations

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class IngestError(ValueError):
    """Base class for review parsing failures."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MalformedLine(IngestError):
    pass


class MissingField(IngestError):
    pass


class BadRating(IngestError):
    pass


class BadTimestamp(IngestError):
    pass


REQUIRED_FIELDS = ("reviewerID", "asin", "unixReviewTime", "overall")


@dataclass(frozen=True)
class ReviewRecord:
    user_id: str
    product_id: str
    timestamp: int
    rating: int
    text: str = ""
    synthetic: bool = False
    category: str | None = None

    def __post_init__(self):
        if self.rating not in (1, 2, 3, 4, 5):
            raise BadRating(f"rating {self.rating!r} outside 1-5")
        if self.timestamp < 0:
            raise BadTimestamp(f"negative timestamp {self.timestamp}")

    def to_json(self) -> str:
        obj = {
            "reviewerID": self.user_id,
            "asin": self.product_id,
            "unixReviewTime": self.timestamp,
            "overall": float(self.rating),
            "reviewText": self.text,
        }
        if self.synthetic:
            obj["synthetic"] = True
            obj["category"] = self.category
        return json.dumps(obj, ensure_ascii=False, sort_keys=False)


def _sort_key(rec: ReviewRecord):
    return (rec.timestamp, rec.user_id, rec.product_id)


@dataclass(frozen=True)
class ReviewStream:
    records: tuple[ReviewRecord, ...] = field(default_factory=tuple)
    dataset_name: str = ""

    @classmethod
    def from_records(cls, records: Iterable[ReviewRecord], dataset_name: str = "") -> "ReviewStream":
        # sorted() is stable, so input order breaks the remaining ties
        return cls(tuple(sorted(records, key=_sort_key)), dataset_name)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    @property
    def users(self) -> list[str]:
        return sorted({r.user_id for r in self.records})

    @property
    def products(self) -> list[str]:
        return sorted({r.product_id for r in self.records})


def parse_review_line(line: str, line_no: int | None = None) -> ReviewRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"not valid JSON ({exc.msg})", line_no) from None
    if not isinstance(obj, dict):
        raise MalformedLine("expected a JSON object", line_no)

    missing = [k for k in REQUIRED_FIELDS if obj.get(k) is None]
    if missing:
        raise MissingField(f"missing field(s): {', '.join(missing)}", line_no)

    try:
        rating = int(float(obj["overall"]))
    except (TypeError, ValueError):
        raise BadRating(f"non-numeric overall {obj['overall']!r}", line_no) from None
    if not 1 <= rating <= 5:
        raise BadRating(f"overall {obj['overall']!r} outside 1-5", line_no)

    try:
        timestamp = int(obj["unixReviewTime"])
    except (TypeError, ValueError):
        raise BadTimestamp(f"non-integer unixReviewTime {obj['unixReviewTime']!r}", line_no) from None
    if timestamp < 0:
        raise BadTimestamp(f"negative unixReviewTime {timestamp}", line_no)

    text = obj.get("reviewText")
    synthetic = bool(obj.get("synthetic", False))
    return ReviewRecord(
        user_id=str(obj["reviewerID"]),
        product_id=str(obj["asin"]),
        timestamp=timestamp,
        rating=rating,
        text="" if text is None else str(text),
        synthetic=synthetic,
        category=obj.get("category") if synthetic else None,
    )


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def load_dataset(path: str | Path, dataset_name: str | None = None) -> ReviewStream:
    """Read a JSON-lines review file (optionally gzipped) into a sorted stream.

    Blank lines are skipped. Parse errors carry the 1-based line number.
    """
    path = Path(path)
    if dataset_name is None:
        dataset_name = path.name.split(".")[0]
    records = []
    with _open_text(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(parse_review_line(line, line_no))
    return ReviewStream.from_records(records, dataset_name)


def write_dataset(stream: ReviewStream, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in stream:
            fh.write(rec.to_json())
            fh.write("\n")
