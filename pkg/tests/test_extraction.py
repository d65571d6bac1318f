from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import d
from crawlscout.extraction import (
    extract_body,
    extract_links,
    extract_page,
    extract_publish_date,
    extract_title,
    is_internal,
    normalize_url,
    registered_host,
    score_blocks,
    truncate_body,
)

# --------------------------------------------------------------------------- normalize_url


@pytest.mark.parametrize("raw, base, expected", [
    ("../a/b#top", "https://ex.com/x/y", "https://ex.com/a/b"),
    ("HTTPS://EX.COM:443/a/", "https://other.org/", "https://ex.com/a"),
    ("http://ex.com:80/", "https://ex.com/", "http://ex.com/"),
    ("http://ex.com:8080/a", "https://ex.com/", "http://ex.com:8080/a"),
    ("/", "https://ex.com/deep/page", "https://ex.com/"),
    ("?p=12", "https://ex.com/blog/", "https://ex.com/blog?p=12"),
    ("/a/%7euser/%2f%zz", "https://ex.com/", "https://ex.com/a/~user/%2F%25zz"),
    ("/café", "https://ex.com/", "https://ex.com/caf%C3%A9"),
    ("./b/../c/./d/", "https://ex.com/a/", "https://ex.com/a/c/d"),
    (";/", "https://ex.com/x/y", "https://ex.com/x"),  # empty path parameters are dropped
    ("/a;;", "https://ex.com/", "https://ex.com/a;;"),
])
def test_normalize_url(raw, base, expected):
    assert normalize_url(raw, base) == expected


@pytest.mark.parametrize("raw", ["mailto:a@b.c", "javascript:void(0)", "data:text/html,hi", "ftp://ex.com/f",
                                 "http://", "http://[bad"])
def test_normalize_url_rejects(raw):
    assert normalize_url(raw, "https://ex.com/") is None


_url_text = st.lists(st.sampled_from(list("abcXYZ019-._~%/?=&#:@!$'()*+,; ") + ["é", "%2f", "%41", ".."]),
                     max_size=30).map("".join)


@settings(max_examples=300)
@given(_url_text, st.sampled_from(["https://ex.com/x/y", "http://Ex.COM:80/", "https://a.b.ex.com/q?x=1"]))
def test_normalize_url_idempotent(raw, base):
    once = normalize_url(raw, base)
    if once is not None:
        assert normalize_url(once, once) == once
        assert normalize_url(once, "https://unrelated.org/") == once


@pytest.mark.parametrize("url, host, expected", [
    ("https://example.com/a", "example.com", True),
    ("https://other.com/a", "example.com", False),
    ("https://news.example.com/a", "example.com", True),
    ("https://badexample.com/a", "example.com", False),
    ("not a url", "example.com", False),
])
def test_is_internal(url, host, expected):
    assert is_internal(url, host) is expected


def test_registered_host_drops_www():
    assert registered_host("https://WWW.Example.com/x") == "example.com"


# --------------------------------------------------------------------------- links and titles


def test_extract_links_dedup_and_internal():
    html = b'<a href="/a">1</a><a href="/a#x">2</a><a href="https://other.com/b">3</a>'
    assert extract_links(html, "https://ex.com/", "ex.com") == ["https://ex.com/a"]


def test_extract_links_none():
    assert extract_links(b"<p>no anchors</p>", "https://ex.com/", "ex.com") == []


def test_extract_links_keeps_structural_regions_and_order():
    html = b"""<header><a href="/h">h</a></header><nav><a href="/n">n</a></nav>
    <main><a href="mailto:x@y.z">m</a><a href="/m">m</a></main><footer><a href="/f">f</a></footer>"""
    assert extract_links(html, "https://ex.com/", "ex.com") == [
        "https://ex.com/h", "https://ex.com/n", "https://ex.com/m", "https://ex.com/f"]


def test_extract_links_honors_base_href():
    html = b'<head><base href="https://ex.com/dir/"></head><a href="x">x</a>'
    assert extract_links(html, "https://ex.com/other/page", "ex.com") == ["https://ex.com/dir/x"]


@pytest.mark.parametrize("html, expected", [
    (b"<title>Space launch today</title>", "Space launch today"),
    (b'<meta property="og:title" content="A"><title>A | Site Name</title>', "A"),
    (b"<p>nothing</p>", ""),
    (b"<title>  </title><h1> Fallback\n heading </h1>", "Fallback heading"),
    (b"<title>Tab\t and  <b>newline</b>\n</title>", "Tab and <b>newline</b>"),
])
def test_extract_title(html, expected):
    assert extract_title(html) == expected


# --------------------------------------------------------------------------- body

STORY = "The council approved the new river plan on Monday, after a long debate. Residents welcomed it."
ARTICLE = f"""<html><head><title>t</title><style>p {{ color: red }}</style></head><body>
<div class="menu"><ul><li><a href="/a">Home</a></li><li><a href="/b">World</a></li></ul></div>
<div id="story">{STORY}</div>
<div class="more"><a href="/c">Related story one</a> and <a href="/d">two</a></div>
</body></html>""".encode()


def test_body_hand_scored_fixture():
    # Hand scores: "Home" and "World" are fully linked -> 0.
    # Story: 94 chars, no links, 3 punctuation marks -> 94 * 1 * (1 + 3/20) = 108.1.
    # Related: 25 chars with 18 linked -> 25 * (1 - 0.72)^2 * 1 = 1.96.
    blocks = {b.block_text: b for b in score_blocks(ARTICLE)}
    story = blocks[STORY]
    assert (story.text_len, story.link_density, story.punctuation_count) == (94, 0.0, 3)
    assert story.score == pytest.approx(108.1)
    assert blocks["Home"].score == 0 and blocks["World"].score == 0
    related = blocks["Related story one and two"]
    assert related.link_density == pytest.approx(0.72)
    assert related.score == pytest.approx(1.96)
    # only the story clears the block threshold (10) and the cluster threshold (50)
    assert extract_body(ARTICLE) == STORY


def test_body_of_link_lists_is_empty():
    html = "<ul>" + "".join(f'<li><a href="/{i}">Link number {i}, here</a></li>' for i in range(40)) + "</ul>"
    assert extract_body(html.encode()) == ""


@pytest.mark.parametrize("html", [b"", b"<html></html>", "   "])
def test_body_of_empty_html(html):
    assert extract_body(html) == ""


def test_body_below_cluster_threshold():
    assert extract_body(b"<p>Short one, really.</p>") == ""  # 20 chars -> score 22 < 50


def test_body_joins_adjacent_scoring_blocks():
    a = "First paragraph of the story, with enough text to score."
    b = "Second paragraph continues the story; it also scores well."
    html = f"<div><p>{a}</p><p>{b}</p></div><p><a href='/x'>nav nav nav nav</a></p><p>{a}</p>"
    assert extract_body(html.encode()) == f"{a} {b}"


@settings(max_examples=50)
@given(st.lists(st.sampled_from(["<!-- c -->", "<script>var x = 'a, b. c';</script>",
                                 "<style>.a{b:c}</style>"]), max_size=4))
def test_body_invariant_under_comments_and_scripts(junk):
    noisy = ARTICLE.replace(b'<div id="story">', ("".join(junk) + '<div id="story">').encode())
    noisy = noisy.replace(b"</body>", "".join(junk).encode() + b"</body>")
    assert extract_body(noisy) == extract_body(ARTICLE)


def test_truncate_body():
    assert len(truncate_body("x" * 10_000)) == 4000
    assert truncate_body("short") == "short"


# --------------------------------------------------------------------------- dates


def test_date_from_meta():
    html = b'<meta property="article:published_time" content="2025-01-14T09:30:00Z">'
    assert extract_publish_date(html, "https://ex.com/2024/12/01/x") == d("2025-01-14")


def test_date_from_url_only():
    assert extract_publish_date(b"<p>x</p>", "https://ex.com/2025/01/03/story") == d("2025-01-03")


def test_date_absent():
    assert extract_publish_date(b"<p>x</p>", "https://ex.com/story") is None


def test_date_source_precedence_and_fallthrough():
    html = b"""<meta property="article:published_time" content="not a date">
    <script type="application/ld+json">{"@graph": [{"datePublished": "2025-02-10T23:59:00-05:00"}]}</script>
    <time datetime="2025-03-01">March</time>"""
    # unparseable meta falls through to JSON-LD; the written day is kept (no timezone shift)
    assert extract_publish_date(html, "https://ex.com/x") == d("2025-02-10")
    assert extract_publish_date(b'<time datetime="2025-03-01T10:00">x</time>', "https://ex.com/x") == d("2025-03-01")


def test_invalid_url_date_is_absent():
    assert extract_publish_date(b"", "https://ex.com/2025/13/45/x") is None


def test_extract_page_combines_fields():
    res = extract_page(ARTICLE, "https://ex.com/2025/01/03/s", "ex.com")
    assert res.title == "t" and res.body == STORY
    assert res.links == tuple(f"https://ex.com/{c}" for c in "abcd")
    assert res.publish_date == d("2025-01-03")
