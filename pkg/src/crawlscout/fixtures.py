"""Synthetic news-site fixtures and a local server for offline pipeline runs.

A generated site directory contains static files plus two machine-readable
companions:

``expectations.json``
    gold labels, depths, new-page sets, and coverage/metrics for each
    method and budget, enumerated directly from the construction without
    going through the crawler or the evaluation module.
``sources.ini``
    an annotation sources file pointing at the site's sitemap.

Text files may contain the ``__ORIGIN__`` placeholder, which the fixture
server replaces with its own ``http://host:port`` when serving.
"""

from __future__ import annotations

import json
import math
import mimetypes
import random
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

ORIGIN_PLACEHOLDER = "__ORIGIN__"
EXPECTATIONS = "expectations.json"
REDIRECTS = "_redirects.json"
EXTERNAL_URL = "https://partner.example.org/story"
WINDOWS = (1, 30)

_WORDS = (
    "space launch orbit rover climate forest rain ocean market startup funding chip "
    "robot vaccine study river city council election budget court ruling satellite "
    "telescope galaxy species habitat drought harvest energy solar wind battery grid "
    "policy report survey data model network signal mission crew probe comet"
).split()
_SECTIONS = ("world", "science", "business", "tech", "health", "culture", "sports", "opinion", "travel")


@dataclass
class FixtureSpec:
    hubs: int = 3
    articles_per_hub: int = 20
    days: int = 40
    seed: int = 0
    end_date: str = "2025-01-31"
    home_latest: int = 5
    related: int = 2
    hub_link_fraction: float = 1.0
    short_title_fraction: float = 0.2
    hub_page_size: int = 0  # 0 = one unpaginated page per hub
    home_articles_first: bool = False
    budgets: list[int] = field(default_factory=lambda: [1, 2, 4, 10, 30, 100])

    def validate(self) -> None:
        if not 1 <= self.hubs <= len(_SECTIONS):
            raise ValueError(f"hubs must be in 1..{len(_SECTIONS)}")
        if self.articles_per_hub < 1 or self.days < 1:
            raise ValueError("articles_per_hub and days must be positive")
        if self.home_latest < 0 or self.related < 0:
            raise ValueError("home_latest and related must be >= 0")
        if not 0.0 <= self.hub_link_fraction <= 1.0 or not 0.0 <= self.short_title_fraction <= 1.0:
            raise ValueError("fractions must lie in [0, 1]")
        if self.hub_page_size < 0:
            raise ValueError("hub_page_size must be >= 0")
        if not self.budgets or any(k < 1 for k in self.budgets):
            raise ValueError("budgets must be positive")
        date.fromisoformat(self.end_date)


@dataclass
class _Page:
    path: str
    kind: str  # home | hub | article
    title: str
    links: list[str]
    published: date | None = None
    body: str = ""
    date_source: str = ""


def _title(rng: random.Random, lo: int, hi: int) -> str:
    words = [rng.choice(_WORDS) for _ in range(rng.randint(lo, hi))]
    return " ".join(words).capitalize()


def _build_site(spec: FixtureSpec) -> tuple[list[_Page], dict[str, str]]:
    rng = random.Random(spec.seed)
    end = date.fromisoformat(spec.end_date)
    sections = _SECTIONS[: spec.hubs]
    hub_paths = [f"/section/{s}" for s in sections]

    articles: list[_Page] = []
    for h, section in enumerate(sections):
        for j in range(spec.articles_per_hub):
            published = end - timedelta(days=rng.randrange(spec.days))
            short = rng.random() < spec.short_title_fraction
            title = _title(rng, 3, 9) if short else _title(rng, 10, 16)
            slug = f"{section}-story-{j}"
            path = f"/{published:%Y/%m/%d}/{slug}"
            body = " ".join(
                _title(rng, 12, 20) + "." for _ in range(rng.randint(4, 8))
            )
            articles.append(_Page(path, "article", title, [], published, body,
                                  ("meta", "jsonld", "time", "url")[len(articles) % 4]))
    by_hub = {hp: [a for a in articles if a.path.split("/")[-1].startswith(hp.split("/")[-1] + "-")]
              for hp in hub_paths}
    newest_first = sorted(articles, key=lambda a: (a.published, a.path), reverse=True)

    for a in articles:
        hub = hub_paths[sections.index(a.path.split("/")[-1].rsplit("-story-", 1)[0])]
        others = [b.path for b in articles if b is not a]
        related = rng.sample(others, min(spec.related, len(others)))
        a.links = ["/", hub] + related

    hubs = []
    for hp, section in zip(hub_paths, sections):
        listed = sorted(by_hub[hp], key=lambda a: (a.published, a.path), reverse=True)
        listed = listed[: math.ceil(len(listed) * spec.hub_link_fraction)]
        size = spec.hub_page_size or max(1, len(listed))
        chunks = [listed[i : i + size] for i in range(0, len(listed), size)] or [[]]
        page_paths = [hp] + [f"{hp}/page/{n}" for n in range(2, len(chunks) + 1)]
        for n, (path, chunk) in enumerate(zip(page_paths, chunks)):
            links = ["/"] + [p for p in hub_paths if p != hp] + [a.path for a in chunk]
            if n:
                links.append(page_paths[n - 1])
            if n + 1 < len(page_paths):
                links.append(page_paths[n + 1])
            title = f"{section.capitalize()} news" + (f" - page {n + 1}" if n else "")
            hubs.append(_Page(path, "hub", title, links))

    latest = [a.path for a in newest_first[: spec.home_latest]]
    home_links = latest + list(hub_paths) if spec.home_articles_first else list(hub_paths) + latest
    home_links += ["/latest", "/partner", "/files/report.pdf", "/private/admin", EXTERNAL_URL]
    home = _Page("/", "home", "Fixture Daily", home_links)
    redirects = {"/latest": hub_paths[0], "/partner": EXTERNAL_URL}
    return [home] + hubs + articles, redirects


def _render(page: _Page) -> str:
    head = [f"<title>{page.title} | Fixture Daily</title>" if page.kind == "article"
            else f"<title>{page.title}</title>"]
    if page.kind == "article":
        head.append(f'<meta property="og:title" content="{page.title}">')
    if page.date_source == "meta":
        head.append(f'<meta property="article:published_time" content="{page.published}T08:00:00Z">')
    elif page.date_source == "jsonld":
        ld = {"@context": "https://schema.org", "@type": "NewsArticle",
              "headline": page.title, "datePublished": f"{page.published}T08:00:00+00:00"}
        head.append(f'<script type="application/ld+json">{json.dumps(ld)}</script>')
    nav = "".join(
        f'<li><a href="{l}">{"Next page" if "/page/" in l and l > page.path else l}</a></li>' for l in page.links
    )
    main = ""
    if page.kind == "article":
        stamp = f'<time datetime="{page.published}">{page.published:%B %d, %Y}</time>' \
            if page.date_source == "time" else ""
        main = f"<article><h1>{page.title}</h1>{stamp}<div class=\"story\"><p>{page.body}</p></div></article>"
    else:
        main = f"<h1>{page.title}</h1>"
    return (
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">"
        + "".join(head)
        + f"</head><body><nav><ul>{nav}</ul></nav><main>{main}</main>"
        + "<footer><a href=\"mailto:desk@fixture.test\">contact</a></footer></body></html>\n"
    )


def _file_for(path: str) -> str:
    return "index.html" if path == "/" else path.lstrip("/") + ".html"


def _sitemaps(articles: list[_Page]) -> dict[str, str]:
    half = (len(articles) + 1) // 2
    parts = [articles[:half], articles[half:]]
    files = {}
    index_entries = []
    for i, part in enumerate(parts, 1):
        name = f"sitemaps/articles-{i}.xml"
        urls = "".join(f"<url><loc>{ORIGIN_PLACEHOLDER}{a.path}</loc><lastmod>{a.published}</lastmod></url>"
                       for a in part)
        files[name] = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                       f'<urlset xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">{urls}</urlset>\n')
        index_entries.append(f"<sitemap><loc>{ORIGIN_PLACEHOLDER}/{name}</loc></sitemap>")
    files["sitemap.xml"] = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                            '<sitemapindex xmlns="http://www.sitemaps.org/schemas/sitemap/0.9">'
                            + "".join(index_entries) + "</sitemapindex>\n")
    return files


# --------------------------------------------------------------------------- expectations
#
# Deliberately naive enumeration over the construction, sharing no code with
# the crawler or evaluation modules.


def _expectations(spec: FixtureSpec, pages: list[_Page], redirects: dict[str, str]) -> dict:
    html_paths = [p.path for p in pages]
    known = set(html_paths)
    links: dict[str, list[str]] = {}
    for p in pages:
        out: list[str] = []
        for l in p.links:
            l = redirects.get(l, l)
            if l in known and l not in out:
                out.append(l)
        links[p.path] = out

    # depth by relaxation to a fixpoint
    inf = 10 ** 9
    depth = {p: inf for p in html_paths}
    depth["/"] = 0
    changed = True
    while changed:
        changed = False
        for src in html_paths:
            for dst in links[src]:
                if depth[src] + 1 < depth[dst]:
                    depth[dst] = depth[src] + 1
                    changed = True

    order = ["/"]
    for src in order:
        for dst in links[src]:
            if dst not in order:
                order.append(dst)
    # orphaned articles (hub_link_fraction < 1) may be unreachable from home
    pages = [p for p in pages if depth[p.path] < inf]
    html_paths = [p.path for p in pages]
    shallow = sorted(order, key=lambda p: (depth[p], order.index(p)))

    gold = {p.path: ("content" if p.kind == "article" else "index") for p in pages}
    rule = {p.path: ("index" if len(p.title.split()) <= 9 else "content") for p in pages}
    predictions = {"gold": gold, "all-pages": {p: "index" for p in html_paths}, "rule-title-words": rule}

    published = {p.path: p.published for p in pages if p.published}
    latest = max(published.values())
    new_sets = {str(w): sorted(p for p, d in published.items() if (latest - d).days < w) for w in WINDOWS}

    def seeds_for(pred: dict[str, str], k: int, hybrid: bool) -> list[str]:
        index_first = [p for p in shallow if pred[p] == "index"]
        if hybrid:
            chosen = index_first[: (k + 1) // 2]
            for p in shallow:
                if len(chosen) >= k:
                    break
                if p not in chosen:
                    chosen.append(p)
            return chosen
        chosen = index_first[:k]
        chosen += [p for p in shallow if pred[p] == "content"][: k - len(chosen)]
        return chosen

    def coverage(seeds: list[str], new: list[str]) -> tuple[int, float]:
        reached: set[str] = set()
        grew = True
        while grew:
            grew = False
            for n in new:
                if n in reached:
                    continue
                if n in seeds or any(n in links[s] for s in seeds) or any(n in links[r] for r in reached):
                    reached.add(n)
                    grew = True
        return len(reached), len(reached) / len(new)

    methods = {
        "gold": (gold, False),
        "all-pages": (predictions["all-pages"], False),
        "rule-title-words": (rule, False),
        "gold+all-pages": (gold, True),
        "rule-title-words+all-pages": (rule, True),
    }
    cov = {}
    for name, (pred, hybrid) in methods.items():
        for w in WINDOWS:
            new = new_sets[str(w)]
            for k in spec.budgets:
                seeds = seeds_for(pred, k, hybrid)
                reached, value = coverage(seeds, new)
                cov[f"{name}|{w}|{k}"] = {"seeds": seeds, "new_count": len(new),
                                          "reached_count": reached, "coverage": value}

    metrics = {}
    for name in ("all-pages", "rule-title-words", "gold"):
        pred = predictions[name]
        tp = sum(1 for p in html_paths if pred[p] == "index" and gold[p] == "index")
        fp = sum(1 for p in html_paths if pred[p] == "index" and gold[p] == "content")
        fn = sum(1 for p in html_paths if pred[p] == "content" and gold[p] == "index")
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        metrics[name] = {"precision": prec, "recall": rec, "f1": f1}

    return {
        "spec": asdict(spec),
        "page_count": len(html_paths),
        "pages": {p.path: {"kind": p.kind, "title": p.title, "depth": depth[p.path],
                           "order": order.index(p.path),
                           "publish_date": p.published.isoformat() if p.published else None}
                  for p in pages},
        "gold": gold,
        "predictions": predictions,
        "latest_date": latest.isoformat(),
        "new_pages": new_sets,
        "coverage": cov,
        "metrics": metrics,
        "excluded": {"external": [EXTERNAL_URL], "non_html": ["/files/report.pdf"],
                     "robots_disallowed": ["/private/admin"]},
    }


def gen_fixture(spec: FixtureSpec, out_dir: str | Path) -> Path:
    """Write a static fixture site plus its expectations file into ``out_dir``."""
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pages, redirects = _build_site(spec)

    def write(rel: str, data: str | bytes) -> None:
        target = out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data.encode("utf-8") if isinstance(data, str) else data)

    for page in pages:
        write(_file_for(page.path), _render(page))
    for rel, text in _sitemaps([p for p in pages if p.kind == "article"]).items():
        write(rel, text)
    write("files/report.pdf", b"%PDF-1.4\n% fixture\n1 0 obj << >> endobj\ntrailer << >>\n%%EOF\n")
    write("private/admin.html", "<html><head><title>Admin</title></head><body>staff only</body></html>\n")
    write("robots.txt", "User-agent: *\nDisallow: /private/\n")
    write(REDIRECTS, json.dumps(redirects, indent=2, sort_keys=True) + "\n")
    write("sources.ini", "[sitemap]\nkind = xml-sitemap\nurl = /sitemap.xml\nmax_listing_pages = 50\n")
    write(EXPECTATIONS, json.dumps(_expectations(spec, pages, redirects), indent=2, sort_keys=True) + "\n")
    return out


# --------------------------------------------------------------------------- server


@dataclass(frozen=True)
class ServedRequest:
    started: float  # time.monotonic() when the request line was parsed
    path: str
    host: str


class _Handler(BaseHTTPRequestHandler):
    server: "_FixtureHTTPServer"
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True

    def do_GET(self) -> None:  # noqa: N802 - http.server naming
        srv = self.server
        srv.record(ServedRequest(time.monotonic(), self.path, self.headers.get("Host", "")))
        path = self.path.split("?", 1)[0].split("#", 1)[0]
        if path in srv.redirects:
            target = srv.redirects[path]
            self._reply(301, b"", "text/plain", {"Location": target})
            return
        file = srv.resolve(path)
        if file is None:
            self._reply(404, b"not found\n", "text/plain")
            return
        data = file.read_bytes()
        ctype = srv.content_type(file)
        if ctype.startswith(("text/", "application/xml")):
            data = data.replace(ORIGIN_PLACEHOLDER.encode(), srv.origin.encode())
        self._reply(200, data, ctype)

    def _reply(self, status: int, body: bytes, ctype: str, extra: dict | None = None) -> None:
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, format, *args) -> None:  # noqa: A002
        pass


class _FixtureHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, root: Path, host: str, port: int):
        super().__init__((host, port), _Handler)
        self.root = root.resolve()
        self.requests: list[ServedRequest] = []
        self._lock = threading.Lock()
        redirects_file = self.root / REDIRECTS
        self.redirects = json.loads(redirects_file.read_text()) if redirects_file.exists() else {}

    @property
    def origin(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def record(self, req: ServedRequest) -> None:
        with self._lock:
            self.requests.append(req)

    def resolve(self, path: str) -> Path | None:
        rel = "index.html" if path in ("", "/") else path.lstrip("/")
        for cand in (rel, rel + ".html"):
            target = (self.root / cand).resolve()
            if self.root in target.parents and target.is_file() and not target.name.startswith("_"):
                return target
        return None

    @staticmethod
    def content_type(file: Path) -> str:
        if file.suffix == ".html":
            return "text/html; charset=utf-8"
        if file.suffix == ".xml":
            return "application/xml"
        return mimetypes.guess_type(file.name)[0] or "application/octet-stream"


class FixtureServer:
    """Serve a fixture directory on the loopback interface from a background thread.

    >>> with FixtureServer(site_dir) as srv:   # doctest: +SKIP
    ...     crawl_site(CrawlConfig(home_url=srv.origin + "/"))
    """

    def __init__(self, root: str | Path, host: str = "127.0.0.1", port: int = 0):
        self._server = _FixtureHTTPServer(Path(root), host, port)
        self._thread: threading.Thread | None = None

    @property
    def origin(self) -> str:
        return self._server.origin

    @property
    def requests(self) -> list[ServedRequest]:
        return list(self._server.requests)

    def start(self) -> "FixtureServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def __enter__(self) -> "FixtureServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def load_expectations(site_dir: str | Path) -> dict:
    return json.loads((Path(site_dir) / EXPECTATIONS).read_text())
