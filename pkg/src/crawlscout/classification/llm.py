"""LLM-backed page-type classification over a chat-completion HTTP API.

The transport is any callable taking the JSON request payload and returning
the model's reply text. ``HttpTransport`` talks to a live endpoint;
``RecordingTransport`` and ``ReplayTransport`` capture and replay replies
keyed by a hash of the request, so test and reproduction runs need no
network access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from ..errors import AuthConfigError, CacheWriteError, TransportError
from ..snapshot import PageRecord, PageType, SiteSnapshot
from .prompt import build_prompt, parse_response, template_sha256
from .rules import ClassifierSpec, InputMode

log = logging.getLogger(__name__)

API_KEY_ENV = "CRAWLSCOUT_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
MAX_RESPONSE_TOKENS = 8

Transport = Callable[[dict], str]


@dataclass(frozen=True)
class ApiConfig:
    endpoint: str = DEFAULT_ENDPOINT
    credential: str | None = field(default=None, repr=False)
    max_concurrent_requests: int = 4
    requests_per_minute: int = 500
    max_retries: int = 2
    temperature: float = 0.0
    timeout: float = 60.0
    retry_backoff: float = 1.0

    @classmethod
    def from_env(cls, **overrides) -> "ApiConfig":
        return cls(credential=os.environ.get(API_KEY_ENV) or None, **overrides)

    def __post_init__(self) -> None:
        if self.max_concurrent_requests < 1 or self.requests_per_minute < 1:
            raise ValueError("concurrency and requests_per_minute must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ClassificationOutcome:
    url: str
    predicted: PageType
    raw_response: str | None
    cached: bool


class TokenBucket:
    """Requests-per-minute limiter; ``capacity`` bounds the initial burst."""

    def __init__(self, per_minute: int, capacity: int = 1,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = per_minute / 60.0
        self.capacity = max(1, capacity)
        self.tokens = float(self.capacity)
        self._clock = clock
        self._sleep = sleep
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self._sleep(wait)


def request_payload(model: str, system: str, user: str, temperature: float = 0.0) -> dict:
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
        "temperature": temperature,
        "max_tokens": MAX_RESPONSE_TOKENS,
    }


def request_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class HttpTransport:
    def __init__(self, api: ApiConfig, client: httpx.Client | None = None):
        if not api.credential:
            raise AuthConfigError(f"auth config error: set {API_KEY_ENV}")
        self.api = api
        self._client = client or httpx.Client(timeout=api.timeout)

    def __call__(self, payload: dict) -> str:
        try:
            resp = self._client.post(
                self.api.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api.credential}"},
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"{exc.__class__.__name__}: {exc}", transient=True) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}", transient=True)
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", transient=False)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed API response: {exc}", transient=True) from exc


class RecordingTransport:
    """Forward to ``inner`` and persist every reply as request-hash -> text."""

    def __init__(self, inner: Transport, path: str | Path):
        self.inner = inner
        self.path = Path(path)
        self.records: dict[str, str] = json.loads(self.path.read_text()) if self.path.exists() else {}
        self._lock = threading.Lock()

    def __call__(self, payload: dict) -> str:
        raw = self.inner(payload)
        with self._lock:
            self.records[request_hash(payload)] = raw
            _atomic_write_text(self.path, json.dumps(self.records, indent=1, sort_keys=True) + "\n")
        return raw


class ReplayTransport:
    def __init__(self, path: str | Path | None = None, records: dict[str, str] | None = None):
        if records is None:
            records = json.loads(Path(path).read_text()) if path else {}
        self.records = dict(records)
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, payload: dict) -> str:
        with self._lock:
            self.calls += 1
        key = request_hash(payload)
        if key not in self.records:
            raise TransportError(f"no recorded response for request {key[:12]}", transient=False)
        return self.records[key]


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


class PredictionCache:
    """One JSON file per cache key under ``root``; writes are serialized."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            data = json.loads(self._path(key).read_text(encoding="utf-8"))
        except (OSError, ValueError):  # unreadable entries count as misses
            return None
        return data if isinstance(data, dict) and data.get("predicted") in ("index", "content") else None

    def put(self, key: str, predicted: PageType, raw: str | None) -> None:
        entry = {"predicted": predicted.value, "raw_response": raw}
        with self._lock:
            try:
                _atomic_write_text(self._path(key), json.dumps(entry, sort_keys=True) + "\n")
            except OSError as exc:
                raise CacheWriteError(f"cache write failed for {key}: {exc}") from exc


def cache_key(model: str, input_mode: InputMode, page: PageRecord) -> str:
    parts = [template_sha256(), model, input_mode.value, hashlib.sha256(page.title.encode()).hexdigest()]
    if input_mode is InputMode.TITLE_AND_BODY:
        parts.append(hashlib.sha256(page.body.encode()).hexdigest())
    return hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest()


def classify_llm_outcomes(
    snapshot: SiteSnapshot,
    spec: ClassifierSpec,
    api: ApiConfig,
    cache: PredictionCache,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> list[ClassificationOutcome]:
    """Classify every page, consulting the cache first.

    Identical prompts are sent once per run. Answers that cannot be parsed,
    and transient transport errors, are retried up to ``api.max_retries``
    times; a page that still has no answer is labeled Content and is not
    cached, so a rerun asks again.
    """
    if spec.model_name is None:
        raise ValueError(f"{spec.classifier_id} is not an LLM classifier")
    if transport is None:
        transport = HttpTransport(api)  # raises AuthConfigError before any request

    keys = {p.url: cache_key(spec.model_name, spec.input_mode, p) for p in snapshot.pages}
    results: dict[str, tuple[PageType, str | None, bool]] = {}
    pending: dict[str, PageRecord] = {}
    for page in snapshot.pages:
        key = keys[page.url]
        if key in results or key in pending:
            continue
        hit = cache.get(key)
        if hit is not None:
            results[key] = (PageType(hit["predicted"]), hit.get("raw_response"), True)
        else:
            pending[key] = page

    bucket = TokenBucket(api.requests_per_minute, capacity=api.max_concurrent_requests, sleep=sleep)

    def ask(key: str) -> tuple[str, PageType, str | None]:
        page = pending[key]
        system, user = build_prompt(page, spec.input_mode)
        payload = request_payload(spec.model_name, system, user, api.temperature)
        raw = None
        for attempt in range(api.max_retries + 1):
            if attempt:
                sleep(api.retry_backoff * 2 ** (attempt - 1))
            bucket.acquire()
            try:
                raw = transport(payload)
            except TransportError as exc:
                if not exc.transient:
                    raise
                log.info("transient API error for %s: %s", page.url, exc)
                continue
            predicted = parse_response(raw)
            if predicted is not None:
                cache.put(key, predicted, raw)
                return key, predicted, raw
            log.info("unparseable answer for %s: %r", page.url, raw)
        log.warning("no usable answer for %s after %d attempts; labeling it content",
                    page.url, api.max_retries + 1)
        return key, PageType.CONTENT, raw

    if pending:
        log.info("%s: %d cached, %d to request", spec.classifier_id, len(results), len(pending))
        if api.max_concurrent_requests == 1:
            answers = [ask(k) for k in pending]
        else:
            with ThreadPoolExecutor(max_workers=api.max_concurrent_requests) as pool:
                answers = list(pool.map(ask, pending))
        for key, predicted, raw in answers:
            results[key] = (predicted, raw, False)

    out = []
    for page in snapshot.pages:
        predicted, raw, cached = results[keys[page.url]]
        out.append(ClassificationOutcome(page.url, predicted, raw, cached))
    return out


def classify_llm(
    snapshot: SiteSnapshot,
    spec: ClassifierSpec,
    api: ApiConfig,
    cache: PredictionCache,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, PageType]:
    return {o.url: o.predicted for o in classify_llm_outcomes(snapshot, spec, api, cache, transport, sleep)}
