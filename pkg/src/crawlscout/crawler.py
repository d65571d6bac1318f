"""Breadth-first, internal-only, HTML-only site crawler."""

from __future__ import annotations

import logging
import urllib.robotparser
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone

import httpx

from .errors import EmptyCrawl, OfflineViolation, SeedFetchFailed
from .extraction import extract_page, is_internal, normalize_url, registered_host
from .fetch import DEFAULT_USER_AGENT, REDIRECT_CODES, Fetcher, Response, get_with_retries
from .snapshot import DEFAULT_PAGE_CAP, PageRecord, SiteSnapshot, html_sha256

log = logging.getLogger(__name__)

HTML_MEDIA_TYPES = frozenset({"text/html", "application/xhtml+xml"})
MAX_REDIRECTS = 5

__all__ = ["CrawlConfig", "Frontier", "crawl_site", "is_internal", "should_store"]


@dataclass
class CrawlConfig:
    home_url: str
    page_cap: int = DEFAULT_PAGE_CAP
    max_concurrent_fetches: int = 4
    min_request_interval: float = 0.5  # seconds, per host
    request_timeout: float = 15.0
    user_agent: str = DEFAULT_USER_AGENT
    respect_robots: bool = True
    max_retries: int = 2
    retry_backoff: float = 0.5
    single_threaded: bool = False
    offline: bool = False
    site_id: str | None = None
    crawl_timestamp: datetime | None = None

    def __post_init__(self) -> None:
        if self.page_cap < 1:
            raise ValueError("page_cap must be >= 1")
        if self.min_request_interval < 0:
            raise ValueError("min_request_interval must be >= 0")
        if self.max_concurrent_fetches < 1:
            raise ValueError("max_concurrent_fetches must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Frontier:
    """FIFO of (url, depth); a URL is admitted at most once for the whole crawl."""

    def __init__(self) -> None:
        self.queue: deque[tuple[str, int]] = deque()
        self.seen: set[str] = set()

    def push(self, url: str, depth: int) -> bool:
        if url in self.seen:
            return False
        self.seen.add(url)
        self.queue.append((url, depth))
        return True

    def mark_seen(self, url: str) -> None:
        self.seen.add(url)

    def pop(self) -> tuple[str, int]:
        return self.queue.popleft()

    def __len__(self) -> int:
        return len(self.queue)


def should_store(content_type: str, body_bytes: int) -> bool:
    media = (content_type or "").split(";", 1)[0].strip().lower()
    return media in HTML_MEDIA_TYPES and body_bytes > 0


@dataclass
class _Fetched:
    requested: str
    final: str | None = None
    response: Response | None = None
    error: str | None = None


class _Robots:
    def __init__(self, parser: urllib.robotparser.RobotFileParser | None, user_agent: str):
        self.parser = parser
        self.user_agent = user_agent

    def allowed(self, url: str) -> bool:
        return self.parser is None or self.parser.can_fetch(self.user_agent, url)


def _load_robots(fetcher: Fetcher, home: str, config: CrawlConfig) -> _Robots:
    if not config.respect_robots:
        return _Robots(None, config.user_agent)
    robots_url = normalize_url("/robots.txt", home)
    try:
        resp = get_with_retries(fetcher.get, robots_url, config.max_retries, config.retry_backoff)
    except httpx.HTTPError as exc:
        log.warning("robots.txt unreachable (%s); crawling without restrictions", exc.__class__.__name__)
        return _Robots(None, config.user_agent)
    if resp.status != 200:
        return _Robots(None, config.user_agent)
    parser = urllib.robotparser.RobotFileParser()
    parser.parse(resp.body.decode("utf-8", errors="replace").splitlines())
    return _Robots(parser, config.user_agent)


def crawl_site(config: CrawlConfig, fetcher: Fetcher | None = None) -> SiteSnapshot:
    home = normalize_url(config.home_url, config.home_url)
    if home is None:
        raise SeedFetchFailed(f"seed fetch failed: unusable home URL {config.home_url!r}")
    host = registered_host(home)
    own_fetcher = fetcher is None
    if fetcher is None:
        fetcher = Fetcher(
            timeout=config.request_timeout,
            user_agent=config.user_agent,
            min_interval=config.min_request_interval,
            offline=config.offline,
        )
    try:
        return _crawl(config, fetcher, home, host)
    finally:
        if own_fetcher:
            fetcher.close()


def _crawl(config: CrawlConfig, fetcher: Fetcher, home: str, host: str) -> SiteSnapshot:
    robots = _load_robots(fetcher, home, config)
    frontier = Frontier()
    frontier.push(home, 0)

    def fetch_one(url: str) -> _Fetched:
        current = url
        try:
            for _ in range(MAX_REDIRECTS + 1):
                resp = get_with_retries(fetcher.get, current, config.max_retries, config.retry_backoff)
                if resp.status in REDIRECT_CODES and resp.location:
                    target = normalize_url(resp.location, current)
                    if target is None or not is_internal(target, host):
                        return _Fetched(url, error=f"redirect leaves site: {resp.location}")
                    if not robots.allowed(target):
                        return _Fetched(url, error="redirect target disallowed by robots.txt")
                    if target in frontier.seen:
                        # fetched already or queued at an equal or smaller depth
                        return _Fetched(url, final=target, error=f"redirects to known URL {target}")
                    current = target
                    continue
                return _Fetched(url, final=current, response=resp)
            return _Fetched(url, error="too many redirects")
        except OfflineViolation:
            raise
        except httpx.HTTPError as exc:
            return _Fetched(url, error=f"{exc.__class__.__name__}: {exc}")

    workers = 1 if config.single_threaded else config.max_concurrent_fetches
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    stored: list[dict] = []
    stored_urls: set[str] = set()
    blobs: dict[str, bytes] = {}
    alias: dict[str, str] = {}
    first = True
    try:
        while len(frontier) and len(stored) < config.page_cap:
            # A chunk is a prefix of the FIFO processed in order, which keeps
            # depth assignment identical to a sequential BFS.
            chunk: list[tuple[str, int]] = []
            while len(frontier) and len(chunk) < min(workers, config.page_cap - len(stored)):
                url, depth = frontier.pop()
                if url in stored_urls:
                    continue
                chunk.append((url, depth))
            if not chunk:
                continue
            urls = [u for u, _ in chunk]
            results = list(pool.map(fetch_one, urls)) if pool else [fetch_one(u) for u in urls]

            for (url, depth), res in zip(chunk, results):
                if first:
                    first = False
                    if res.response is None or not 200 <= res.response.status < 300:
                        reason = res.error or f"HTTP {res.response.status}"
                        raise SeedFetchFailed(f"seed fetch failed: {home}: {reason}")
                if res.final is not None and res.final != url:
                    alias[url] = res.final
                    frontier.mark_seen(res.final)
                if res.response is None:
                    log.info("skip %s: %s", url, res.error)
                    continue
                resp, final = res.response, res.final
                if final in stored_urls or len(stored) >= config.page_cap:
                    continue
                if not 200 <= resp.status < 300:
                    log.info("skip %s: HTTP %d", url, resp.status)
                    continue
                if not should_store(resp.content_type, len(resp.body)):
                    log.info("skip %s: non-HTML (%s)", url, resp.content_type or "no content type")
                    continue

                fields = extract_page(resp.body, final, host)
                sha = html_sha256(resp.body)
                blobs[sha] = resp.body
                stored_urls.add(final)
                stored.append(dict(url=final, depth=depth, fields=fields, sha=sha))
                for link in fields.links:
                    if robots.allowed(link):
                        frontier.push(link, depth + 1)
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    if not stored:
        raise EmptyCrawl(f"empty crawl: no HTML pages stored from {home}")

    pages = []
    for i, item in enumerate(stored):
        fields = item["fields"]
        links: list[str] = []
        for link in fields.links:
            link = alias.get(link, link)
            if link not in links:
                links.append(link)
        pages.append(
            PageRecord(
                url=item["url"],
                depth=item["depth"],
                discovery_index=i,
                title=fields.title,
                body=fields.body,
                publish_date=fields.publish_date,
                links=tuple(links),
                html_ref=item["sha"],
            )
        )
    log.info("crawled %d pages from %s (%d requests)", len(pages), home, len(fetcher.events))
    return SiteSnapshot(
        site_id=config.site_id or host,
        host=host,
        crawl_timestamp=config.crawl_timestamp or datetime.now(timezone.utc).replace(microsecond=0),
        page_cap=config.page_cap,
        pages=tuple(pages),
        home_url=home,
        blobs=blobs,
    )
