"""Prompt rendering, text-generation backends and response parsing."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import string
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx

log = logging.getLogger(__name__)

TEMPLATE_IDS = ("P_um", "P_ul", "P_ue", "P_pm", "P_so", "P_sd")
DEFAULT_TEMPLATE_DIR = Path(__file__).with_name("templates")


class GatewayError(RuntimeError):
    pass


class UnboundPlaceholder(GatewayError, KeyError):
    pass


class BackendUnavailable(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, message: str, retry_after: float | None = None, attempts: int = 0):
        super().__init__(message)
        self.retry_after = retry_after
        self.attempts = attempts


class ParseError(GatewayError, ValueError):
    pass


class NoSelectionFound(ParseError):
    pass


class IndexOutOfRange(ParseError):
    pass


class RatingNotFound(ParseError):
    pass


class RatingOutOfRange(ParseError):
    pass


class EmptyProfile(ParseError):
    pass


# ---------------------------------------------------------------- templates


class Prompt(str):
    """Rendered prompt text that remembers which template produced it."""

    template_id: str | None
    meta: dict

    def __new__(cls, text: str, template_id: str | None = None, meta: dict | None = None):
        obj = super().__new__(cls, text)
        obj.template_id = template_id
        obj.meta = dict(meta or {})
        return obj


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str

    @property
    def placeholders(self) -> list[str]:
        names = []
        for m in string.Template.pattern.finditer(self.body):
            name = m.group("named") or m.group("braced")
            if name and name not in names:
                names.append(name)
        return names


def load_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    directory = Path(directory) if directory else DEFAULT_TEMPLATE_DIR
    out = {}
    for tid in TEMPLATE_IDS:
        path = directory / f"{tid}.txt"
        if not path.exists():
            raise FileNotFoundError(f"template {tid} not found in {directory}")
        out[tid] = PromptTemplate(tid, path.read_text(encoding="utf-8"))
    return out


def _one_line(text: str) -> str:
    return " ".join(text.split())


def numbered(items: Sequence[str], empty: str = "none") -> str:
    if not items:
        return empty
    return "\n".join(f"{i}. {_one_line(t)}" for i, t in enumerate(items, start=1))


_TEMPLATE_CACHE: dict[str, dict[str, PromptTemplate]] = {}
_TEMPLATE_LOCK = threading.Lock()


def get_templates(directory: str | Path | None = None) -> dict[str, PromptTemplate]:
    key = str(directory or DEFAULT_TEMPLATE_DIR)
    with _TEMPLATE_LOCK:
        if key not in _TEMPLATE_CACHE:
            _TEMPLATE_CACHE[key] = load_templates(directory)
        return _TEMPLATE_CACHE[key]


def render(
    template_id: str,
    bindings: Mapping[str, str | Sequence[str]],
    templates: Mapping[str, PromptTemplate] | None = None,
) -> Prompt:
    """Substitute bindings into a template; list values become numbered lines."""
    templates = templates if templates is not None else get_templates()
    try:
        tpl = templates[template_id]
    except KeyError:
        raise GatewayError(f"unknown template id {template_id!r}") from None

    values = {}
    meta = {}
    for name, value in bindings.items():
        if isinstance(value, str):
            values[name] = value
        else:
            values[name] = numbered(list(value))
            meta[f"{name}_count"] = len(value)
    missing = [p for p in tpl.placeholders if p not in values]
    if missing:
        raise UnboundPlaceholder(f"{template_id}: unbound placeholder(s) {', '.join(missing)}")
    text = string.Template(tpl.body).substitute(values)
    return Prompt(text, template_id, meta)


# ---------------------------------------------------------------- backends


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class GenerationBackend:
    kind = "abstract"

    def complete(self, prompt: str) -> str:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


_WORD = re.compile(r"[A-Za-z][A-Za-z'-]+")
_FILLER = (
    "quality value product works well price delivery easy great fine "
    "reliable useful expected simple decent sturdy recommend nice"
).split()


class MockBackend(GenerationBackend):
    """Deterministic offline backend: output depends only on (seed, prompt).

    Output shape follows the template that produced the prompt so every
    parser downstream accepts it.
    """

    kind = "mock"

    def __init__(self, seed: int = 0, latency: float = 0.0):
        self.seed = seed
        self.latency = latency

    def describe(self) -> dict:
        return {"kind": self.kind, "seed": self.seed}

    def _digest(self, prompt: str) -> int:
        h = hashlib.sha256(f"{self.seed}\x1f{prompt}".encode("utf-8")).digest()
        return int.from_bytes(h[:8], "big")

    def _words(self, rng: random.Random, prompt: str, n: int) -> str:
        vocab = sorted({w.lower() for w in _WORD.findall(prompt)}) or _FILLER
        return " ".join(rng.choice(vocab) for _ in range(n))

    def complete(self, prompt: str) -> str:
        if self.latency:
            time.sleep(self.latency)
        digest = self._digest(prompt)
        rng = random.Random(digest)
        kind = getattr(prompt, "template_id", None) or _guess_template(prompt)

        if kind == "P_sd":
            rating = 1 + digest % 5
            body = self._words(rng, prompt, rng.randint(12, 30))
            return f"Rating: {rating}\nReview: {body.capitalize()}."
        if kind == "P_so":
            n = getattr(prompt, "meta", {}).get("candidates_count") or _count_candidates(prompt)
            if n < 1:
                return "Suitable: none"
            k = rng.randint(1, n)
            picks = sorted(rng.sample(range(1, n + 1), k))
            return "Suitable: " + ", ".join(map(str, picks))
        return "Profile: " + self._words(rng, prompt, rng.randint(15, 35)).capitalize() + "."


def _guess_template(prompt: str) -> str:
    if re.search(r"^Rating:", prompt, re.M | re.I):
        return "P_sd"
    if "Suitable:" in prompt:
        return "P_so"
    return "P_um"


def _count_candidates(prompt: str) -> int:
    _, _, tail = prompt.partition("Candidate products:")
    n = 0
    for line in tail.strip().splitlines():
        if re.match(r"^\d+\.\s", line):
            n += 1
        elif n:
            break
    return n


@dataclass
class RemoteBackend(GenerationBackend):
    """Chat-completion client with bounded retries and an in-flight limit."""

    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = "OPENAI_API_KEY"
    max_attempts: int = 3
    backoff: float = 1.0
    timeout: float = 60.0
    max_in_flight: int = 4
    temperature: float = 0.7
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    kind: str = field(default="remote", init=False)

    def __post_init__(self):
        self._gate = threading.BoundedSemaphore(max(1, self.max_in_flight))
        self._client = httpx.Client(timeout=self.timeout, transport=self.transport)

    def describe(self) -> dict:
        return {"kind": self.kind, "model": self.model, "base_url": self.base_url}

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": str(prompt)}],
            "temperature": self.temperature,
        }
        url = self.base_url.rstrip("/") + "/chat/completions"
        last_exc: Exception | None = None
        retry_after = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._gate:
                    resp = self._client.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_exc, retry_after = exc, None
                log.warning("completion attempt %d failed: %s", attempt, exc)
            else:
                if resp.status_code == 429:
                    retry_after = _retry_after(resp)
                    last_exc = RateLimited("rate limited", retry_after, attempt)
                elif resp.status_code >= 500:
                    last_exc, retry_after = BackendUnavailable(f"HTTP {resp.status_code}"), None
                elif resp.status_code >= 400:
                    raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return resp.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendUnavailable(f"malformed completion response: {exc}") from None
            if attempt < self.max_attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                if retry_after is not None:
                    delay = max(delay, retry_after)
                self.sleep(delay)

        if isinstance(last_exc, RateLimited):
            raise RateLimited(
                f"rate limited after {self.max_attempts} attempts", last_exc.retry_after, self.max_attempts
            )
        raise BackendUnavailable(f"backend unreachable after {self.max_attempts} attempts: {last_exc}")


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


class CachedBackend(GenerationBackend):
    """On-disk response cache keyed by prompt hash; lets a failed run resume."""

    def __init__(self, inner: GenerationBackend, directory: str | Path):
        self.inner = inner
        self.kind = inner.kind
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def describe(self) -> dict:
        return self.inner.describe()

    def complete(self, prompt: str) -> str:
        key = prompt_hash(json.dumps(self.inner.describe(), sort_keys=True) + "\x1f" + prompt)
        path = self.directory / f"{key}.txt"
        if path.exists():
            return path.read_text(encoding="utf-8")
        out = self.inner.complete(prompt)
        tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
        tmp.write_text(out, encoding="utf-8")
        tmp.replace(path)
        return out


def complete(backend: GenerationBackend, prompt: str) -> str:
    return backend.complete(prompt)


# ---------------------------------------------------------------- parsers


_SUITABLE = re.compile(r"suitable\s*:(.*)", re.I)
_RATING = re.compile(r"^\W*rating\W*:\W*(-?\d+)", re.I)
_HEADER = re.compile(r"^\W*(review|review text|text)\W*:\s*", re.I)


def parse_selection(raw: str, candidate_count: int) -> list[int]:
    if candidate_count < 1:
        raise ValueError("candidate_count must be >= 1")
    m = _SUITABLE.search(raw)
    scope = m.group(1) if m else raw
    found = [int(x) for x in re.findall(r"\d+", scope)]
    if not found:
        raise NoSelectionFound(f"no candidate indices in response: {raw[:80]!r}")
    bad = [i for i in found if not 1 <= i <= candidate_count]
    if bad:
        raise IndexOutOfRange(f"indices {bad} outside 1..{candidate_count}")
    return list(dict.fromkeys(found))


def parse_synthetic_review(raw: str) -> tuple[str, int]:
    rating = None
    kept = []
    for line in raw.splitlines():
        m = _RATING.match(line)
        if m:
            if rating is None:
                rating = int(m.group(1))
            continue
        kept.append(_HEADER.sub("", line, count=1))
    if rating is None:
        raise RatingNotFound("no 'Rating: <int>' line in response")
    if not 1 <= rating <= 5:
        raise RatingOutOfRange(f"rating {rating} outside 1-5")
    return "\n".join(kept).strip(), rating


def parse_profile(raw: str) -> str:
    text = re.sub(r"^\s*profile\s*:\s*", "", raw.strip(), flags=re.I).strip()
    if not text:
        raise EmptyProfile("backend returned an empty profile")
    return text


@dataclass(frozen=True)
class Profile:
    subject_id: str
    subject_kind: str
    text: str
    source_review_ids: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise EmptyProfile(f"empty profile for {self.subject_kind} {self.subject_id}")
