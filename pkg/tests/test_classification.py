from __future__ import annotations

import json
import logging

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CONTENT, INDEX, page, snapshot
from crawlscout.classification import (
    ApiConfig,
    ClassifierSpec,
    HttpTransport,
    InputMode,
    PredictionCache,
    ReplayTransport,
    TokenBucket,
    build_prompt,
    classify,
    classify_all_pages,
    classify_llm,
    classify_llm_outcomes,
    classify_mock,
    classify_rule_based,
    parse_response,
    title_word_count,
    with_predictions,
)
from crawlscout.classification.llm import cache_key, request_hash, request_payload
from crawlscout.errors import AuthConfigError, CacheWriteError, MissingLabels, TransportError


def three_pages(**kw):
    return snapshot([page("https://ex.com/", 0, 0, **kw), page("https://ex.com/a", 1, 1, **kw),
                     page("https://ex.com/b", 1, 2, **kw)])


# --------------------------------------------------------------------------- simple classifiers


def test_all_pages():
    assert set(classify_all_pages(three_pages()).values()) == {INDEX}
    assert classify_all_pages(snapshot([])) == {}


def test_rule_boundary_and_zero_words():
    nine = "World News Politics Business Tech Science Health Sports Opinion"
    snap = snapshot([page("u0", 0, 0, title=nine), page("u1", 1, 1, title=nine + " Extra"),
                     page("u2", 1, 2, title="")])
    assert classify_rule_based(snap) == {"u0": INDEX, "u1": CONTENT, "u2": INDEX}
    assert classify_rule_based(snap, 10)["u1"] is INDEX


@settings(max_examples=100)
@given(st.lists(st.text(alphabet="abc", min_size=1, max_size=4), max_size=14),
       st.lists(st.sampled_from([" ", "  ", "\t", "\n", "　"]), min_size=15, max_size=15))
def test_rule_invariant_under_whitespace(words, gaps):
    plain = " ".join(words)
    noisy = gaps[0] + "".join(w + gaps[i + 1] for i, w in enumerate(words))
    assert title_word_count(noisy) == title_word_count(plain) == len(words)
    a = classify_rule_based(snapshot([page("u", title=plain)]))
    b = classify_rule_based(snapshot([page("u", title=noisy)]))
    assert a == b


def test_mock_error_rates_and_determinism():
    gold = {f"https://ex.com/{i}": INDEX if i % 3 == 0 else CONTENT for i in range(200)}
    snap = snapshot([page(u, min(i, 1), i, gold_type=t) for i, (u, t) in enumerate(gold.items())])
    assert classify_mock(snap, 1, 0.0) == gold
    assert classify_mock(snap, 1, 1.0) == {u: t.flipped() for u, t in gold.items()}
    half = classify_mock(snap, 5, 0.5)
    assert half == classify_mock(snap, 5, 0.5)
    assert half != classify_mock(snap, 6, 0.5)
    flips = sum(half[u] is not gold[u] for u in gold)
    assert 60 < flips < 140


def test_mock_requires_gold():
    with pytest.raises(MissingLabels):
        classify_mock(three_pages(), 0)


@pytest.mark.parametrize("cid", ["all-pages", "rule-title-words", "rule-title-words:5", "mock:3",
                                 "mock:3:0.25", "llm:gpt-4o-mini:title", "llm:org/model:v1:title-body"])
def test_classifier_id_round_trip(cid):
    assert ClassifierSpec.parse(cid).classifier_id == cid


@pytest.mark.parametrize("cid", ["", "rule", "mock", "llm:x", "llm:x:nope", "mock:x"])
def test_bad_classifier_ids(cid):
    with pytest.raises(ValueError):
        ClassifierSpec.parse(cid)


def test_with_predictions_requires_complete_map():
    snap = three_pages()
    labeled = with_predictions(snap, "all-pages", classify_all_pages(snap))
    assert labeled.predictions_for("all-pages") == classify_all_pages(snap)
    with pytest.raises(ValueError):
        with_predictions(snap, "x", {"https://ex.com/": INDEX})


# --------------------------------------------------------------------------- prompt and parsing


def test_prompt_title_only():
    system, user = build_prompt(page("u", title="Sports"), InputMode.TITLE_ONLY)
    assert "Title: Sports" in user and "Body:" not in user
    low = system.lower()
    assert "hyperlinks to other pages within the website" in low
    assert "news articles and columns" in low
    assert "index or content" in low


def test_prompt_body_truncated():
    _, user = build_prompt(page("u", title="T", body="x" * 10_000), "title-body")
    body = user.split("Body: ", 1)[1]
    assert len(body) == 4000


def test_prompt_empty_title_kept():
    _, user = build_prompt(page("u", title=""), "title")
    assert user.splitlines()[0] == "Title: "


def test_prompt_braces_in_title_are_literal():
    _, user = build_prompt(page("u", title="{body} and {x}"), "title")
    assert "Title: {body} and {x}" in user


@pytest.mark.parametrize("raw, expected", [
    ("Index", INDEX),
    ("content", CONTENT),
    ('"Index."', INDEX),
    ("This is a content page.", CONTENT),
    ("It is an INDEX page", INDEX),
    ("index of content", None),
    ("", None),
    (None, None),
    ("unsure", None),
])
def test_parse_response(raw, expected):
    assert parse_response(raw) is expected


# --------------------------------------------------------------------------- LLM path


class Scripted:
    """Transport returning queued answers per title, recording every payload."""

    def __init__(self, answers):
        self.answers = answers
        self.payloads = []

    def __call__(self, payload):
        self.payloads.append(payload)
        title = payload["messages"][1]["content"].split("Title: ", 1)[1].split("\n", 1)[0]
        ans = self.answers(title) if callable(self.answers) else self.answers
        if isinstance(ans, Exception):
            raise ans
        return ans


API = ApiConfig(credential=None, max_concurrent_requests=1, requests_per_minute=600_000, retry_backoff=0)
LLM = ClassifierSpec.llm("m", "title")


def titled(*titles):
    return snapshot([page(f"https://ex.com/{i}", min(i, 1), i, title=t, body=f"b{t}") for i, t in enumerate(titles)])


def test_llm_all_content(tmp_path):
    t = Scripted("content")
    labels = classify_llm(titled("a", "b", "c"), LLM, API, PredictionCache(tmp_path), t)
    assert set(labels.values()) == {CONTENT}
    p = t.payloads[0]
    assert p["temperature"] == 0 and p["max_tokens"] == 8 and p["model"] == "m"


def test_llm_garbage_falls_back_to_content(tmp_path, caplog):
    t = Scripted(lambda title: "Index" if title == "ok" else "???")
    with caplog.at_level(logging.WARNING):
        labels = classify_llm(titled("ok", "bad"), LLM, API, PredictionCache(tmp_path), t)
    assert labels == {"https://ex.com/0": INDEX, "https://ex.com/1": CONTENT}
    assert sum(1 for p in t.payloads if "Title: bad" in p["messages"][1]["content"]) == 3
    assert any("https://ex.com/1" in r.getMessage() for r in caplog.records if r.levelno == logging.WARNING)
    # the fallback is not cached, so a rerun asks again
    t2 = Scripted("index")
    outcomes = classify_llm_outcomes(titled("ok", "bad"), LLM, API, PredictionCache(tmp_path), t2)
    assert [o.cached for o in outcomes] == [True, False] and len(t2.payloads) == 1


def test_llm_transient_errors_retried(tmp_path):
    calls = []

    def flaky(payload):
        calls.append(1)
        if len(calls) < 3:
            raise TransportError("HTTP 503", transient=True)
        return "index"

    labels = classify_llm(titled("a"), LLM, API, PredictionCache(tmp_path), flaky)
    assert labels == {"https://ex.com/0": INDEX} and len(calls) == 3


def test_llm_permanent_error_aborts(tmp_path):
    with pytest.raises(TransportError):
        classify_llm(titled("a"), LLM, API, PredictionCache(tmp_path),
                     Scripted(TransportError("HTTP 400", transient=False)))


def test_llm_cache_hits_make_no_calls(tmp_path):
    snap = titled("a", "b")
    cache = PredictionCache(tmp_path)
    classify_llm(snap, LLM, API, cache, Scripted("index"))
    t = Scripted("content")
    outcomes = classify_llm_outcomes(snap, LLM, API, cache, t)
    assert t.payloads == [] and all(o.cached for o in outcomes)
    assert {o.predicted for o in outcomes} == {INDEX}


def test_cache_key_tracks_inputs():
    p = page("u", title="T", body="B")
    title_key = cache_key("m", InputMode.TITLE_ONLY, p)
    assert title_key == cache_key("m", InputMode.TITLE_ONLY, page("other", title="T", body="changed"))
    assert title_key != cache_key("m", InputMode.TITLE_ONLY, page("u", title="T2", body="B"))
    assert title_key != cache_key("m2", InputMode.TITLE_ONLY, p)
    body_key = cache_key("m", InputMode.TITLE_AND_BODY, p)
    assert body_key != title_key
    assert body_key != cache_key("m", InputMode.TITLE_AND_BODY, page("u", title="T", body="B2"))


def test_missing_credential_fails_before_any_call(tmp_path, monkeypatch):
    monkeypatch.delenv("CRAWLSCOUT_API_KEY", raising=False)
    with pytest.raises(AuthConfigError, match="auth config error"):
        classify_llm(titled("a"), LLM, ApiConfig.from_env(), PredictionCache(tmp_path))
    with pytest.raises(AuthConfigError):
        classify(titled("a"), LLM, cache=PredictionCache(tmp_path))


def test_credential_not_in_repr_or_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("CRAWLSCOUT_API_KEY", "sk-secret-123")
    api = ApiConfig.from_env(max_concurrent_requests=1)
    assert api.credential == "sk-secret-123" and "sk-secret" not in repr(api)
    classify_llm(titled("a"), LLM, api, PredictionCache(tmp_path), Scripted("index"))
    for f in tmp_path.rglob("*"):
        if f.is_file():
            assert "sk-secret" not in f.read_text()


def test_cache_write_failure_aborts(tmp_path):
    blocker = tmp_path / "cache"
    blocker.write_text("not a directory")
    with pytest.raises(CacheWriteError):
        classify_llm(titled("a"), LLM, API, PredictionCache(blocker), Scripted("index"))


def test_http_transport_against_mock_endpoint():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        if seen["body"]["model"] == "busy":
            return httpx.Response(429)
        if seen["body"]["model"] == "bad":
            return httpx.Response(401)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Index"}}]})

    api = ApiConfig(endpoint="http://127.0.0.1:9/v1", credential="k")
    t = HttpTransport(api, client=httpx.Client(transport=httpx.MockTransport(handler)))
    assert t(request_payload("m", "s", "u")) == "Index"
    assert seen["auth"] == "Bearer k" and seen["body"]["temperature"] == 0
    with pytest.raises(TransportError) as err:
        t(request_payload("busy", "s", "u"))
    assert err.value.transient
    with pytest.raises(TransportError) as err:
        t(request_payload("bad", "s", "u"))
    assert not err.value.transient


def test_replay_missing_entry_is_permanent():
    replay = ReplayTransport(records={})
    with pytest.raises(TransportError) as err:
        replay(request_payload("m", "s", "u"))
    assert not err.value.transient and replay.calls == 1


def test_replay_matches_by_request_hash():
    payload = request_payload("m", "s", "u")
    replay = ReplayTransport(records={request_hash(payload): "content"})
    assert replay(payload) == "content"


def test_token_bucket_rate():
    now = [0.0]

    def sleep(s):
        now[0] += s

    bucket = TokenBucket(60, capacity=2, clock=lambda: now[0], sleep=sleep)
    for _ in range(5):
        bucket.acquire()
    # two free tokens, then one per second at 60 rpm
    assert now[0] == pytest.approx(3.0)


def test_concurrent_llm_matches_sequential(tmp_path):
    snap = titled(*[f"title {i}" + " word" * (i % 12) for i in range(40)])
    answer = lambda title: "index" if len(title.split()) <= 6 else "content"  # noqa: E731
    seq = classify_llm(snap, LLM, API, PredictionCache(tmp_path / "a"), Scripted(answer))
    par = classify_llm(snap, LLM, ApiConfig(credential=None, max_concurrent_requests=8, requests_per_minute=600_000),
                       PredictionCache(tmp_path / "b"), Scripted(answer))
    assert seq == par
