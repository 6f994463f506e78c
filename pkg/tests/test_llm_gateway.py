import json

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamsparse.llm_gateway import (
    TEMPLATE_IDS,
    BackendUnavailable,
    CachedBackend,
    IndexOutOfRange,
    MockBackend,
    NoSelectionFound,
    RateLimited,
    RatingNotFound,
    RatingOutOfRange,
    RemoteBackend,
    UnboundPlaceholder,
    complete,
    load_templates,
    parse_profile,
    parse_selection,
    parse_synthetic_review,
    render,
)


def test_all_templates_ship():
    templates = load_templates()
    assert set(templates) == set(TEMPLATE_IDS)
    assert templates["P_sd"].placeholders == ["user_profile", "product_profile"]
    assert templates["P_ul"].placeholders == ["own_reviews", "local_reviews", "global_reviews"]


def test_render_sd_contains_profiles():
    prompt = render("P_sd", {"user_profile": "U", "product_profile": "P"})
    assert "\nU\n" in prompt and "\nP\n" in prompt
    assert prompt.template_id == "P_sd"


def test_render_so_enumerates_candidates():
    prompt = render("P_so", {"original_profile": "orig", "candidates": ["a", "b\nb2", "c"]})
    assert "1. a\n2. b b2\n3. c" in prompt
    assert prompt.meta["candidates_count"] == 3


def test_render_empty_list_is_none():
    prompt = render("P_ul", {"own_reviews": ["x"], "local_reviews": [], "global_reviews": ["y"]})
    assert "same time period):\nnone\n" in prompt


def test_render_missing_binding():
    with pytest.raises(UnboundPlaceholder):
        render("P_sd", {"user_profile": "U"})


@settings(max_examples=50, deadline=None)
@given(st.text(min_size=1), st.text(min_size=1))
def test_render_preserves_bindings(user, product):
    prompt = render("P_sd", {"user_profile": user, "product_profile": product})
    assert user in prompt and product in prompt


def test_mock_deterministic_and_seeded():
    prompt = render("P_um", {"reviews": ["great", "bad"]})
    a, b = MockBackend(seed=1), MockBackend(seed=1)
    assert complete(a, prompt) == complete(b, prompt)
    assert complete(a, prompt).startswith("Profile:")
    assert parse_profile(complete(a, prompt))


def test_mock_sd_has_rating():
    raw = complete(MockBackend(), render("P_sd", {"user_profile": "u", "product_profile": "p"}))
    text, rating = parse_synthetic_review(raw)
    assert 1 <= rating <= 5 and text


def test_mock_ratings_span_full_range():
    backend = MockBackend()
    seen = {
        parse_synthetic_review(backend.complete(render("P_sd", {"user_profile": str(i), "product_profile": "p"})))[1]
        for i in range(200)
    }
    assert seen == {1, 2, 3, 4, 5}


def test_mock_handles_plain_strings():
    prompt = str(render("P_so", {"original_profile": "o", "candidates": ["a", "b", "c", "d"]}))
    assert all(i <= 4 for i in parse_selection(MockBackend().complete(prompt), 4))
    plain_sd = str(render("P_sd", {"user_profile": "u", "product_profile": "p"}))
    parse_synthetic_review(MockBackend().complete(plain_sd))


@settings(max_examples=100, deadline=None)
@given(st.text(), st.text(), st.integers(0, 10**6))
def test_mock_sd_is_parse_closed(user, product, seed):
    prompt = render("P_sd", {"user_profile": user, "product_profile": product})
    out = MockBackend(seed).complete(prompt)
    assert out == MockBackend(seed).complete(prompt)
    _, rating = parse_synthetic_review(out)
    assert 1 <= rating <= 5


@settings(max_examples=60, deadline=None)
@given(st.lists(st.text(min_size=1), min_size=1, max_size=8), st.integers(0, 1000))
def test_mock_selection_is_parse_closed(cands, seed):
    prompt = render("P_so", {"original_profile": "orig", "candidates": cands})
    picked = parse_selection(MockBackend(seed).complete(prompt), len(cands))
    assert picked and all(1 <= i <= len(cands) for i in picked)


# ---------------------------------------------------------------- parsers


def test_parse_selection():
    assert parse_selection("Suitable: 2, 3", 5) == [2, 3]
    assert parse_selection("3 1 3", 5) == [3, 1]
    with pytest.raises(IndexOutOfRange):
        parse_selection("2, 2, 9", 5)
    with pytest.raises(NoSelectionFound):
        parse_selection("none of these fit", 5)
    with pytest.raises(IndexOutOfRange):
        parse_selection("Suitable: 0", 5)


def test_parse_synthetic_review():
    assert parse_synthetic_review("Rating: 4\nReview: good value, arrived fast") == ("good value, arrived fast", 4)
    assert parse_synthetic_review("**rating**: 2\nmeh\nRating: 5") == ("meh", 2)
    with pytest.raises(RatingOutOfRange):
        parse_synthetic_review("Rating: 6\nReview: wow")
    with pytest.raises(RatingNotFound):
        parse_synthetic_review("a nice product, five stars")


# ---------------------------------------------------------------- remote backend


def remote(handler, **kw):
    return RemoteBackend(
        base_url="http://llm.test/v1", transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw
    )


def ok_response(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_remote_wire_format(monkeypatch):
    monkeypatch.setenv("TEST_KEY", "sk-123")
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return ok_response("Rating: 3\nReview: fine")

    backend = remote(handler, api_key_env="TEST_KEY", model="gpt-3.5-turbo")
    assert backend.complete("hello") == "Rating: 3\nReview: fine"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-123"
    assert seen["body"]["model"] == "gpt-3.5-turbo"
    assert seen["body"]["messages"] == [{"role": "user", "content": "hello"}]


def test_remote_retries_then_succeeds():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return ok_response("Profile: x")

    delays = []
    backend = RemoteBackend(base_url="http://llm.test", transport=httpx.MockTransport(handler), sleep=delays.append)
    assert backend.complete("p") == "Profile: x"
    assert delays == [1.0, 2.0]


def test_remote_rate_limited():
    backend = remote(lambda r: httpx.Response(429, headers={"retry-after": "7"}))
    with pytest.raises(RateLimited) as info:
        backend.complete("p")
    assert info.value.retry_after == 7.0
    assert info.value.attempts == 3


def test_remote_unreachable():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    with pytest.raises(BackendUnavailable):
        remote(handler).complete("p")


def test_remote_real_unreachable_endpoint():
    backend = RemoteBackend(base_url="http://127.0.0.1:9", timeout=0.5, sleep=lambda s: None)
    with pytest.raises(BackendUnavailable):
        backend.complete("p")


def test_cached_backend(tmp_path):
    calls = []

    class Counting(MockBackend):
        def complete(self, prompt):
            calls.append(prompt)
            return super().complete(prompt)

    cached = CachedBackend(Counting(), tmp_path)
    first = cached.complete("abc")
    assert cached.complete("abc") == first
    assert len(calls) == 1
