"""Page/snapshot data model and the on-disk snapshot directory format.

A snapshot directory holds::

    manifest.json     site metadata, schema_version=1
    pages.jsonl       one PageRecord per line, in discovery order
    html/<sha256>     raw HTML bytes, content addressed
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

from .errors import CorruptSnapshot, IntegrityViolation, UnsupportedVersion

SCHEMA_VERSION = 1
DEFAULT_PAGE_CAP = 10_000

MANIFEST = "manifest.json"
PAGES = "pages.jsonl"
HTML_DIR = "html"

PAGE_FIELDS = (
    "url",
    "depth",
    "discovery_index",
    "title",
    "body",
    "publish_date",
    "links",
    "html_sha256",
    "gold_type",
    "predictions",
)

REVIEW_STATUSES = ("accepted", "rejected", "pending")


class PageType(str, enum.Enum):
    INDEX = "index"
    CONTENT = "content"

    def flipped(self) -> "PageType":
        return PageType.CONTENT if self is PageType.INDEX else PageType.INDEX


@dataclass(frozen=True)
class PageRecord:
    url: str
    depth: int
    discovery_index: int
    title: str = ""
    body: str = ""
    publish_date: date | None = None
    links: tuple[str, ...] = ()
    html_ref: str = ""
    gold_type: PageType | None = None
    predictions: Mapping[str, PageType] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "url": self.url,
            "depth": self.depth,
            "discovery_index": self.discovery_index,
            "title": self.title,
            "body": self.body,
            "publish_date": self.publish_date.isoformat() if self.publish_date else None,
            "links": list(self.links),
            "html_sha256": self.html_ref,
            "gold_type": self.gold_type.value if self.gold_type else None,
            "predictions": {k: self.predictions[k].value for k in sorted(self.predictions)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PageRecord":
        if not isinstance(obj, dict) or set(obj) != set(PAGE_FIELDS):
            got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
            raise CorruptSnapshot(f"page record fields mismatch: {got}")
        try:
            pd = obj["publish_date"]
            gold = obj["gold_type"]
            preds = obj["predictions"]
            if not isinstance(preds, dict):
                raise TypeError("predictions must be an object")
            rec = cls(
                url=_expect(obj["url"], str),
                depth=_expect(obj["depth"], int),
                discovery_index=_expect(obj["discovery_index"], int),
                title=_expect(obj["title"], str),
                body=_expect(obj["body"], str),
                publish_date=date.fromisoformat(pd) if pd is not None else None,
                links=tuple(_expect(x, str) for x in obj["links"]),
                html_ref=_expect(obj["html_sha256"], str),
                gold_type=PageType(gold) if gold is not None else None,
                predictions={k: PageType(v) for k, v in preds.items()},
            )
        except (TypeError, ValueError) as exc:
            raise CorruptSnapshot(f"bad page record {obj.get('url')!r}: {exc}") from exc
        if rec.depth < 0 or rec.discovery_index < 0:
            raise CorruptSnapshot(f"negative depth/discovery_index for {rec.url}")
        return rec


def _expect(value, typ):
    if typ is int and isinstance(value, bool):
        raise TypeError(f"expected int, got bool")
    if not isinstance(value, typ):
        raise TypeError(f"expected {typ.__name__}, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class LinkGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {n: [] for n in self.nodes}
        for src, dst in self.edges:
            out[src].append(dst)
        return {k: tuple(v) for k, v in out.items()}


@dataclass(frozen=True)
class SiteSnapshot:
    site_id: str
    host: str
    crawl_timestamp: datetime
    page_cap: int = DEFAULT_PAGE_CAP
    pages: tuple[PageRecord, ...] = ()
    home_url: str | None = None
    review_status: str | None = None
    # raw HTML not yet written to disk (fresh crawls) and/or the directory it came from
    blobs: Mapping[str, bytes] = field(default_factory=dict, repr=False, compare=False)
    root: Path | None = field(default=None, repr=False, compare=False)

    @property
    def latest_date(self) -> date | None:
        dates = [p.publish_date for p in self.pages if p.publish_date is not None]
        return max(dates) if dates else None

    @cached_property
    def by_url(self) -> dict[str, PageRecord]:
        return {p.url: p for p in self.pages}

    def urls(self) -> list[str]:
        return [p.url for p in self.pages]

    def read_html(self, page: PageRecord) -> bytes:
        if page.html_ref in self.blobs:
            return self.blobs[page.html_ref]
        if self.root is None:
            raise KeyError(f"no HTML stored for {page.url}")
        return (self.root / HTML_DIR / page.html_ref).read_bytes()

    def with_pages(self, pages: Iterable[PageRecord], **changes) -> "SiteSnapshot":
        return dataclasses.replace(self, pages=tuple(pages), **changes)

    def gold_labels(self) -> dict[str, PageType] | None:
        """Gold map for the whole site, or None when any page is unlabeled."""
        if not self.pages or any(p.gold_type is None for p in self.pages):
            return None
        return {p.url: p.gold_type for p in self.pages}

    def predictions_for(self, classifier_id: str) -> dict[str, PageType] | None:
        if any(classifier_id not in p.predictions for p in self.pages):
            return None
        return {p.url: p.predictions[classifier_id] for p in self.pages}

    def classifier_ids(self) -> list[str]:
        ids: set[str] = set()
        for p in self.pages:
            ids.update(p.predictions)
        return sorted(ids)


def html_sha256(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def validate(snapshot: SiteSnapshot) -> None:
    """Raise IntegrityViolation unless the snapshot satisfies the model invariants."""
    if snapshot.page_cap < 1:
        raise IntegrityViolation("integrity violation: page_cap must be positive")
    if len(snapshot.pages) > snapshot.page_cap:
        raise IntegrityViolation(f"integrity violation: {len(snapshot.pages)} pages exceed page_cap {snapshot.page_cap}")
    seen: set[str] = set()
    for i, page in enumerate(snapshot.pages):
        if page.url in seen:
            raise IntegrityViolation(f"integrity violation: duplicate URL {page.url}")
        seen.add(page.url)
        if page.discovery_index != i:
            raise IntegrityViolation(
                f"integrity violation: discovery_index {page.discovery_index} at position {i} (must be dense and ordered)"
            )
        if i and page.depth < snapshot.pages[i - 1].depth:
            raise IntegrityViolation(f"integrity violation: depth decreases at {page.url}")
    if snapshot.pages and snapshot.pages[0].depth != 0:
        raise IntegrityViolation("integrity violation: first page must be the home page at depth 0")


def save_snapshot(snapshot: SiteSnapshot, path: str | os.PathLike) -> Path:
    root = Path(path)
    validate(snapshot)
    (root / HTML_DIR).mkdir(parents=True, exist_ok=True)
    for page in snapshot.pages:
        if not page.html_ref:
            continue
        target = root / HTML_DIR / page.html_ref
        if target.exists():
            continue
        _atomic_write(target, snapshot.read_html(page))

    manifest = {
        "site_id": snapshot.site_id,
        "host": snapshot.host,
        "crawl_timestamp": format_timestamp(snapshot.crawl_timestamp),
        "page_cap": snapshot.page_cap,
        "schema_version": SCHEMA_VERSION,
    }
    if snapshot.home_url is not None:
        manifest["home_url"] = snapshot.home_url
    if snapshot.review_status is not None:
        manifest["review_status"] = snapshot.review_status
    lines = [json.dumps(p.to_json(), ensure_ascii=False) + "\n" for p in snapshot.pages]
    _atomic_write(root / PAGES, "".join(lines).encode("utf-8"))
    _atomic_write(root / MANIFEST, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"))
    return root


def load_snapshot(path: str | os.PathLike) -> SiteSnapshot:
    root = Path(path)
    try:
        manifest = json.loads((root / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CorruptSnapshot(f"corrupt snapshot: missing {MANIFEST} in {root}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"corrupt snapshot: unreadable manifest: {exc}") from exc
    if not isinstance(manifest, dict):
        raise CorruptSnapshot("corrupt snapshot: manifest is not an object")
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise UnsupportedVersion(f"unsupported version: {manifest.get('schema_version')!r}")
    try:
        site_id = _expect(manifest["site_id"], str)
        host = _expect(manifest["host"], str)
        ts = parse_timestamp(_expect(manifest["crawl_timestamp"], str))
        cap = _expect(manifest["page_cap"], int)
        home_url = manifest.get("home_url")
        review = manifest.get("review_status")
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptSnapshot(f"corrupt snapshot: bad manifest field: {exc}") from exc
    if review is not None and review not in REVIEW_STATUSES:
        raise CorruptSnapshot(f"corrupt snapshot: bad review_status {review!r}")

    pages_path = root / PAGES
    if not pages_path.exists():
        raise CorruptSnapshot(f"corrupt snapshot: missing {PAGES}")
    pages = []
    with pages_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptSnapshot(f"{PAGES}:{lineno}: {exc}") from exc
            pages.append(PageRecord.from_json(obj))

    snap = SiteSnapshot(
        site_id=site_id,
        host=host,
        crawl_timestamp=ts,
        page_cap=cap,
        pages=tuple(pages),
        home_url=home_url,
        review_status=review,
        root=root,
    )
    validate(snap)
    return snap


def build_link_graph(snapshot: SiteSnapshot) -> LinkGraph:
    nodes = tuple(p.url for p in snapshot.pages)
    members = set(nodes)
    edges = []
    for page in snapshot.pages:
        for target in page.links:
            if target in members:
                edges.append((page.url, target))
    return LinkGraph(nodes=nodes, edges=tuple(edges))


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
