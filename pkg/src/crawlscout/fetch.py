"""HTTP fetching with per-host politeness, retries, and an offline guard."""

from __future__ import annotations

import ipaddress
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

import httpx

from .errors import OfflineViolation
from .extraction import url_host

log = logging.getLogger(__name__)

DEFAULT_USER_AGENT = "crawlscout/0.1 (+https://example.invalid/crawlscout)"
REDIRECT_CODES = frozenset({301, 302, 303, 307, 308})


@dataclass(frozen=True)
class Response:
    url: str
    status: int
    content_type: str
    body: bytes
    location: str | None = None


@dataclass(frozen=True)
class RequestEvent:
    started: float  # time.monotonic()
    url: str


class HostRateLimiter:
    """Spaces request start times to one host by at least ``interval`` seconds.

    The gap is measured between actual starts, not reserved slots: a worker
    holds the host's lock while it waits, so one that wakes late pushes the
    next start back instead of leaving it too close.
    """

    def __init__(self, interval: float, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if interval < 0:
            raise ValueError("interval must be >= 0")
        self.interval = interval
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._host_locks: dict[str, threading.Lock] = {}
        self._last: dict[str, float] = {}

    def acquire(self, host: str) -> float:
        """Block until ``host`` may be contacted; returns the recorded start time."""
        with self._lock:
            host_lock = self._host_locks.setdefault(host, threading.Lock())
        with host_lock:
            last = self._last.get(host)
            if last is not None:
                wait = last + self.interval - self._clock()
                while wait > 0:
                    self._sleep(wait)
                    wait = last + self.interval - self._clock()
            start = self._clock()
            self._last[host] = start
            return start


def is_loopback(url: str) -> bool:
    host = url_host(url) or ""
    if host == "localhost":
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


@dataclass
class Fetcher:
    """Single-request GET with politeness; redirects are *not* followed here."""

    timeout: float = 15.0
    user_agent: str = DEFAULT_USER_AGENT
    min_interval: float = 0.0
    offline: bool = False
    max_body_bytes: int = 20 * 1024 * 1024
    events: list[RequestEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.limiter = HostRateLimiter(self.min_interval)
        self._client = httpx.Client(
            timeout=self.timeout,
            follow_redirects=False,
            headers={"User-Agent": self.user_agent},
        )
        self._events_lock = threading.Lock()

    def get(self, url: str) -> Response:
        if self.offline and not is_loopback(url):
            raise OfflineViolation(f"offline mode: refusing to fetch {url}")
        started = self.limiter.acquire(url_host(url) or "")
        with self._events_lock:
            self.events.append(RequestEvent(started, url))
        log.debug("GET %s", url)
        with self._client.stream("GET", url) as resp:
            chunks = []
            size = 0
            for chunk in resp.iter_bytes():
                size += len(chunk)
                if size > self.max_body_bytes:
                    break
                chunks.append(chunk)
            return Response(
                url=url,
                status=resp.status_code,
                content_type=resp.headers.get("content-type", ""),
                body=b"".join(chunks),
                location=resp.headers.get("location"),
            )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "Fetcher":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def get_with_retries(fetch: Callable[[str], Response], url: str, max_retries: int,
                     backoff: float = 0.5, sleep: Callable[[float], None] = time.sleep) -> Response:
    """Retry 5xx responses and network errors/timeouts with exponential backoff.

    4xx and other statuses are returned as-is. The last error is re-raised
    once retries run out.
    """
    attempt = 0
    while True:
        try:
            resp = fetch(url)
        except OfflineViolation:
            raise
        except httpx.HTTPError as exc:
            if attempt >= max_retries:
                raise
            log.info("retrying %s after %s", url, exc.__class__.__name__)
        else:
            if resp.status < 500 or attempt >= max_retries:
                return resp
            log.info("retrying %s after HTTP %d", url, resp.status)
        sleep(backoff * (2 ** attempt))
        attempt += 1
