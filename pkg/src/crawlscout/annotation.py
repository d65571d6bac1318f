"""Gold page-type labels from content listing pages (sitemaps or HTML archives).

Every URL a listing page links to is a content page; every other crawled
page is an index page.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import gzip
import logging
import random
import re
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import httpx
from bs4 import BeautifulSoup
from lxml import etree

from .errors import CrawlScoutError, EmptyListing
from .extraction import extract_links, normalize_url, registered_host
from .fetch import Response
from .snapshot import PageType, SiteSnapshot

log = logging.getLogger(__name__)

REVIEW_BAND = (0.05, 0.70)
_NEXT_TEXT = re.compile(r"^\s*(next(\s+page)?|older(\s+(posts|entries|stories))?)\s*[»›>→]*\s*$", re.I)

Fetch = Callable[[str], Response]


class ListingKind(str, enum.Enum):
    XML_SITEMAP = "xml-sitemap"
    HTML_LISTING = "html-listing"


@dataclass(frozen=True)
class ListingSource:
    url: str
    kind: ListingKind
    url_include_pattern: str | None = None
    max_listing_pages: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ListingKind(self.kind))
        if self.max_listing_pages < 1:
            raise ValueError("max_listing_pages must be >= 1")
        if self.url_include_pattern is not None:
            re.compile(self.url_include_pattern)  # fail early on a bad pattern

    def keep(self, url: str) -> bool:
        return self.url_include_pattern is None or re.search(self.url_include_pattern, url) is not None


@dataclass(frozen=True)
class GoldLabeling:
    site_id: str
    listed_urls: frozenset[str]
    labels: dict[str, PageType]
    coverage_stats: dict[str, int]

    @property
    def index_ratio(self) -> float:
        return self.coverage_stats["index"] / len(self.labels) if self.labels else 0.0


def load_sources(path: str | Path, base_url: str | None = None) -> list[ListingSource]:
    """Read an INI file with one section per listing source.

    Keys: ``url`` (may be relative to ``base_url``), ``kind``
    (xml-sitemap | html-listing), optional ``pattern`` and ``max_listing_pages``.
    """
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise CrawlScoutError(f"cannot read sources file {path}")
    sources = []
    for name in parser.sections():
        sec = parser[name]
        raw_url = sec.get("url")
        if not raw_url:
            raise ValueError(f"source [{name}] has no url")
        url = normalize_url(raw_url, base_url or raw_url)
        if url is None:
            raise ValueError(f"source [{name}] has an unusable url {raw_url!r}")
        sources.append(ListingSource(
            url=url,
            kind=ListingKind(sec.get("kind", ListingKind.XML_SITEMAP.value)),
            url_include_pattern=sec.get("pattern") or None,
            max_listing_pages=sec.getint("max_listing_pages", 100),
        ))
    if not sources:
        raise ValueError(f"{path} defines no sources")
    return sources


def _body(fetch: Fetch, url: str) -> bytes | None:
    try:
        resp = fetch(url)
    except (httpx.HTTPError, OSError) as exc:
        log.warning("listing %s unreachable: %s", url, exc)
        return None
    if resp.status != 200:
        log.warning("listing %s returned HTTP %d", url, resp.status)
        return None
    data = resp.body
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except OSError:
            log.warning("listing %s: bad gzip payload", url)
            return None
    return data


def _local(tag) -> str:
    return etree.QName(tag).localname if isinstance(tag, str) else ""


def _sitemap_urls(source: ListingSource, fetch: Fetch) -> list[str]:
    parser = etree.XMLParser(resolve_entities=False, no_network=True, recover=True, huge_tree=False)
    queue = deque([source.url])
    visited: set[str] = set()
    found: list[str] = []
    while queue and len(visited) < source.max_listing_pages:
        doc_url = queue.popleft()
        if doc_url in visited:
            continue
        visited.add(doc_url)
        data = _body(fetch, doc_url)
        if not data:
            continue
        try:
            root = etree.fromstring(data, parser)
        except etree.XMLSyntaxError as exc:
            log.warning("sitemap %s unparseable: %s", doc_url, exc)
            continue
        if root is None:
            continue
        kind = _local(root.tag)
        child = {"sitemapindex": "sitemap", "urlset": "url"}.get(kind)
        if child is None:
            log.warning("sitemap %s has unexpected root <%s>", doc_url, kind)
            continue
        for entry in root:
            if _local(entry.tag) != child:
                continue
            for loc in entry:
                if _local(loc.tag) == "loc" and loc.text:
                    url = normalize_url(loc.text.strip(), doc_url)
                    if url is None:
                        continue
                    if kind == "sitemapindex":
                        queue.append(url)
                    else:
                        found.append(url)
    if queue:
        log.warning("sitemap %s: stopped after %d documents", source.url, len(visited))
    return found


def _next_pages(soup: BeautifulSoup, page_url: str) -> list[str]:
    out = []
    for tag in soup.find_all(["link", "a"], href=True):
        rel = [r.lower() for r in (tag.get("rel") or [])]
        if "next" in rel or (tag.name == "a" and _NEXT_TEXT.match(tag.get_text(" "))):
            url = normalize_url(tag["href"], page_url)
            if url is not None and url not in out:
                out.append(url)
    return out


def _html_listing_urls(source: ListingSource, fetch: Fetch) -> list[str]:
    host = registered_host(source.url)
    queue = deque([source.url])
    visited: set[str] = set()
    pagination: set[str] = {source.url}
    found: list[str] = []
    while queue and len(visited) < source.max_listing_pages:
        page_url = queue.popleft()
        if page_url in visited:
            continue
        visited.add(page_url)
        data = _body(fetch, page_url)
        if not data:
            continue
        soup = BeautifulSoup(data, "lxml")
        nxt = _next_pages(soup, page_url)
        pagination.update(nxt)
        queue.extend(u for u in nxt if u not in visited)
        found.extend(extract_links(data, page_url, host, soup))
    return [u for u in found if u not in pagination]


def collect_listed_urls(sources: Iterable[ListingSource], fetch: Fetch) -> set[str]:
    listed: set[str] = set()
    for source in sources:
        if source.kind is ListingKind.XML_SITEMAP:
            urls = _sitemap_urls(source, fetch)
        else:
            urls = _html_listing_urls(source, fetch)
        kept = [u for u in urls if source.keep(u)]
        log.info("source %s: %d URLs (%d after pattern)", source.url, len(urls), len(kept))
        listed.update(kept)
    if not listed:
        raise EmptyListing("empty listing: no content URLs collected from any source")
    return listed


def annotate_snapshot(snapshot: SiteSnapshot, listed: Iterable[str]) -> GoldLabeling:
    normalized = frozenset(filter(None, (normalize_url(u, u) for u in listed)))
    if not normalized:
        raise ValueError("listed URL set is empty")
    urls = snapshot.urls()
    labels = {u: PageType.CONTENT if u in normalized else PageType.INDEX for u in urls}
    present = sum(1 for u in normalized if u in snapshot.by_url)
    content = sum(1 for t in labels.values() if t is PageType.CONTENT)
    stats = {
        "listed": len(normalized),
        "listed_in_snapshot": present,
        "listed_absent": len(normalized) - present,
        "index": len(labels) - content,
        "content": content,
    }
    return GoldLabeling(snapshot.site_id, normalized, labels, stats)


def apply_labels(snapshot: SiteSnapshot, labeling: GoldLabeling) -> SiteSnapshot:
    return snapshot.with_pages(
        dataclasses.replace(p, gold_type=labeling.labels[p.url]) for p in snapshot.pages
    )


def needs_review(labeling: GoldLabeling) -> bool:
    lo, hi = REVIEW_BAND
    return not lo <= labeling.index_ratio <= hi


def quality_report(labeling: GoldLabeling, sample_size: int = 5, seed: int = 0) -> str:
    """Human-readable evidence for the manual accept/reject decision."""
    stats = labeling.coverage_stats
    rng = random.Random(seed)
    lines = [
        f"site: {labeling.site_id}",
        f"pages: {len(labeling.labels)}  index: {stats['index']}  content: {stats['content']}",
        f"index ratio: {labeling.index_ratio:.3f}",
        f"listed URLs: {stats['listed']}  in snapshot: {stats['listed_in_snapshot']}  "
        f"absent: {stats['listed_absent']}",
    ]
    if needs_review(labeling):
        lo, hi = REVIEW_BAND
        lines.append(f"FLAG: review strongly advised (index ratio outside [{lo:.2f}, {hi:.2f}])")
    for kind in (PageType.INDEX, PageType.CONTENT):
        urls = sorted(u for u, t in labeling.labels.items() if t is kind)
        picked = sorted(rng.sample(urls, min(sample_size, len(urls))))
        lines.append(f"sample {kind.value} pages:")
        lines.extend(f"  {u}" for u in picked)
    return "\n".join(lines) + "\n"
