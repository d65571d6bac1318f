"""Field extraction from raw HTML: URLs, links, title, main text, publish date.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from datetime import date
from email.utils import parsedate_to_datetime
from urllib.parse import urljoin, urlsplit, urlunsplit

from bs4 import BeautifulSoup, Comment, NavigableString
from bs4.element import CData, Declaration, Doctype, ProcessingInstruction, Tag

BODY_CHAR_LIMIT = 4000

# body scoring constants
BLOCK_MIN_SCORE = 10.0
CLUSTER_MIN_SCORE = 50.0
PUNCTUATION_CAP = 20

_DEFAULT_PORTS = {"http": 80, "https": 443}
_UNRESERVED = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~")
_SUB_DELIMS = frozenset("!$&'()*+,;=")
_PATH_SAFE = _UNRESERVED | _SUB_DELIMS | frozenset(":@/")
_QUERY_SAFE = _PATH_SAFE | frozenset("?")
_HEX = frozenset("0123456789abcdefABCDEF")
_STRIP_CHARS = str.maketrans("", "", "\t\n\r")

BLOCK_TAGS = frozenset(
    """address article aside blockquote body center dd details dialog dir div dl dt
    fieldset figcaption figure footer form h1 h2 h3 h4 h5 h6 header hgroup hr li main
    menu nav ol p pre section summary table tbody td tfoot th thead tr ul""".split()
)
# dropped before body scoring only; link extraction sees the whole document
BODY_SKIP_TAGS = frozenset("script style noscript template head nav footer aside iframe svg".split())
_NON_TEXT = (Comment, CData, Declaration, Doctype, ProcessingInstruction)

_URL_DATE = re.compile(r"/(\d{4})/(\d{2})/(\d{2})(?:/|$)")
_ISO_DATE = re.compile(r"^\s*(\d{4})-(\d{2})-(\d{2})")


@dataclass(frozen=True)
class ExtractionResult:
    title: str
    body: str
    links: tuple[str, ...]
    publish_date: date | None


@dataclass(frozen=True)
class BlockScore:
    block_text: str
    text_len: int
    link_density: float
    punctuation_count: int
    score: float


# --------------------------------------------------------------------------- URLs


def _canon_percent(text: str, safe: frozenset[str]) -> str:
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "%":
            if i + 2 < n and text[i + 1] in _HEX and text[i + 2] in _HEX:
                byte = int(text[i + 1 : i + 3], 16)
                decoded = chr(byte)
                out.append(decoded if decoded in _UNRESERVED else f"%{byte:02X}")
                i += 3
                continue
            out.append("%25")
        elif ch in safe:
            out.append(ch)
        else:
            out.extend(f"%{b:02X}" for b in ch.encode("utf-8"))
        i += 1
    return "".join(out)


def _remove_dot_segments(path: str) -> str:
    if "." not in path:
        return path
    segments = path.split("/")
    out: list[str] = []
    for seg in segments[1:] if path.startswith("/") else segments:
        if seg == "..":
            if out:
                out.pop()
        elif seg != ".":
            out.append(seg)
    result = "/" + "/".join(out)
    if segments[-1] in (".", "..") and not result.endswith("/"):
        result += "/"
    return result


def normalize_url(raw: str, base: str) -> str | None:
    """Canonical absolute form of ``raw`` resolved against ``base``.

    Returns None for references the crawler cannot follow (non-http schemes,
    missing host, malformed authority).
    """
    raw = (raw or "").translate(_STRIP_CHARS).strip()
    try:
        parts = urlsplit(urljoin(base, raw))
        scheme = parts.scheme.lower()
        host = parts.hostname
        port = parts.port
    except ValueError:
        return None
    if scheme not in _DEFAULT_PORTS or not host:
        return None
    try:
        host = host.encode("idna").decode("ascii").lower()
    except UnicodeError:
        pass
    if ":" in host:
        host = f"[{host}]"
    netloc = host if port in (None, _DEFAULT_PORTS[scheme]) else f"{host}:{port}"

    path = _remove_dot_segments(_canon_percent(parts.path, _PATH_SAFE)) or "/"
    while path != "/":
        # urljoin drops empty path parameters ("a;" -> "a"); match it so the result is a fixed point
        trimmed = path.rstrip("/") or "/"
        last = trimmed.rsplit("/", 1)[-1]
        if last.find(";") == len(last) - 1:
            trimmed = trimmed[:-1] or "/"
        if trimmed == path:
            break
        path = trimmed
    query = _canon_percent(parts.query, _QUERY_SAFE)
    return urlunsplit((scheme, netloc, path, query, ""))


def url_host(url: str) -> str | None:
    try:
        return urlsplit(url).hostname
    except ValueError:
        return None


def registered_host(url: str) -> str:
    """Host used for the internal-link test: lowercased, leading ``www.`` dropped."""
    host = url_host(url) or ""
    return host[4:] if host.startswith("www.") else host


def is_internal(candidate: str, host: str) -> bool:
    cand = url_host(candidate)
    if not cand or not host:
        return False
    host = host.lower()
    return cand == host or cand.endswith("." + host)


# --------------------------------------------------------------------------- HTML


def _soup(html: bytes | str) -> BeautifulSoup:
    return BeautifulSoup(html or b"", "lxml")


def _collapse(text: str) -> str:
    return " ".join(text.split())


def extract_links(html: bytes | str, page_url: str, host: str, soup: BeautifulSoup | None = None) -> list[str]:
    soup = soup if soup is not None else _soup(html)
    base = page_url
    base_tag = soup.find("base", href=True)
    if base_tag is not None and normalize_url(base_tag["href"], page_url) is not None:
        # resolve without normalizing: a trailing slash on the base matters here
        base = urljoin(page_url, base_tag["href"].strip())
    out: list[str] = []
    seen: set[str] = set()
    for a in soup.find_all("a", href=True):
        url = normalize_url(a["href"], base)
        if url is None or url in seen or not is_internal(url, host):
            continue
        seen.add(url)
        out.append(url)
    return out


def extract_title(html: bytes | str, soup: BeautifulSoup | None = None) -> str:
    soup = soup if soup is not None else _soup(html)
    for attr in ("property", "name"):
        meta = soup.find("meta", attrs={attr: "og:title"})
        if meta is not None:
            text = _collapse(meta.get("content") or "")
            if text:
                return text
    if soup.title is not None:
        text = _collapse(soup.title.get_text(" "))
        if text:
            return text
    h1 = soup.find("h1")
    if h1 is not None:
        return _collapse(h1.get_text(" "))
    return ""


def _is_punctuation(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _score(text: str, linked_chars: int) -> BlockScore:
    n = len(text)
    density = min(1.0, linked_chars / max(1, n))
    punct = sum(1 for ch in text if _is_punctuation(ch))
    score = n * (1.0 - density) ** 2 * (1.0 + min(punct, PUNCTUATION_CAP) / PUNCTUATION_CAP)
    return BlockScore(text, n, density, punct, score)


class _BlockBuilder:
    """Accumulates text pieces into one whitespace-collapsed block, tracking linked characters."""

    def __init__(self) -> None:
        self.chars: list[str] = []
        self.linked = 0
        self.pending_space = False

    def add(self, piece: str, in_link: bool) -> None:
        for ch in piece:
            if ch.isspace():
                self.pending_space = bool(self.chars)
                continue
            if self.pending_space:
                self.chars.append(" ")
                self.pending_space = False
            self.chars.append(ch)
            if in_link:
                self.linked += 1

    def take(self) -> BlockScore | None:
        text = "".join(self.chars)
        linked = self.linked
        self.chars, self.linked, self.pending_space = [], 0, False
        return _score(text, linked) if text else None


def score_blocks(html: bytes | str, soup: BeautifulSoup | None = None) -> list[BlockScore]:
    """Split the document into text blocks at block-level elements and score each."""
    soup = soup if soup is not None else _soup(html)
    blocks: list[BlockScore] = []
    builder = _BlockBuilder()

    def flush() -> None:
        block = builder.take()
        if block is not None:
            blocks.append(block)

    # iterative walk: deep nesting in real pages overflows recursion
    stack: list[tuple[object, bool, bool]] = [(soup, False, False)]
    while stack:
        node, closing, in_link = stack.pop()
        if isinstance(node, NavigableString):
            if not isinstance(node, _NON_TEXT):
                builder.add(str(node), in_link)
            continue
        if not isinstance(node, Tag):
            continue
        name = (node.name or "").lower()
        if name in BODY_SKIP_TAGS:
            continue
        is_block = name in BLOCK_TAGS
        if closing:
            if is_block:
                flush()
            continue
        if is_block:
            flush()
        stack.append((node, True, in_link))
        child_link = in_link or name == "a"
        for child in reversed(node.contents):
            stack.append((child, False, child_link))
    flush()
    return blocks


def best_cluster(blocks: list[BlockScore]) -> tuple[list[BlockScore], float]:
    best: list[BlockScore] = []
    best_total = 0.0
    run: list[BlockScore] = []
    total = 0.0
    for block in blocks + [None]:  # sentinel closes the last run
        if block is not None and block.score > BLOCK_MIN_SCORE:
            run.append(block)
            total += block.score
            continue
        if run and total > best_total:
            best, best_total = run, total
        run, total = [], 0.0
    return best, best_total


def extract_body(html: bytes | str, soup: BeautifulSoup | None = None) -> str:
    cluster, total = best_cluster(score_blocks(html, soup))
    if total < CLUSTER_MIN_SCORE:
        return ""
    return " ".join(b.block_text for b in cluster)


def _parse_date(text: str) -> date | None:
    text = (text or "").strip()
    if not text:
        return None
    m = _ISO_DATE.match(text)
    if m:
        try:
            return date(int(m[1]), int(m[2]), int(m[3]))
        except ValueError:
            return None
    try:
        return parsedate_to_datetime(text).date()
    except (TypeError, ValueError, IndexError):
        return None


def _find_key(obj, key: str):
    if isinstance(obj, dict):
        if key in obj and isinstance(obj[key], str):
            yield obj[key]
        for value in obj.values():
            yield from _find_key(value, key)
    elif isinstance(obj, list):
        for item in obj:
            yield from _find_key(item, key)


def _meta_dates(soup: BeautifulSoup):
    for attr in ("property", "name"):
        for meta in soup.find_all("meta", attrs={attr: "article:published_time"}):
            yield meta.get("content") or ""


def _jsonld_dates(soup: BeautifulSoup):
    for script in soup.find_all("script", attrs={"type": "application/ld+json"}):
        try:
            data = json.loads(script.string or script.get_text() or "")
        except ValueError:
            continue
        yield from _find_key(data, "datePublished")


def _time_dates(soup: BeautifulSoup):
    for el in soup.find_all("time", attrs={"datetime": True}):
        yield el["datetime"]


def extract_publish_date(html: bytes | str, url: str, soup: BeautifulSoup | None = None) -> date | None:
    soup = soup if soup is not None else _soup(html)
    for source in (_meta_dates, _jsonld_dates, _time_dates):
        for candidate in source(soup):
            parsed = _parse_date(candidate)
            if parsed is not None:
                return parsed
    try:
        path = urlsplit(url).path
    except ValueError:
        return None
    m = _URL_DATE.search(path)
    if m:
        try:
            return date(int(m[1]), int(m[2]), int(m[3]))
        except ValueError:
            return None
    return None


def extract_page(html: bytes | str, page_url: str, host: str) -> ExtractionResult:
    """All derived fields for one page; parse failures degrade to empty fields."""
    try:
        soup = _soup(html)
    except Exception:  # noqa: BLE001 - tag soup parsers fail in odd ways on binary junk
        return ExtractionResult("", "", (), extract_publish_date(b"", page_url, _soup(b"")))
    return ExtractionResult(
        title=extract_title(html, soup),
        body=extract_body(html, soup),
        links=tuple(extract_links(html, page_url, host, soup)),
        publish_date=extract_publish_date(html, page_url, soup),
    )


def truncate_body(body: str, limit: int = BODY_CHAR_LIMIT) -> str:
    return body[:limit]
