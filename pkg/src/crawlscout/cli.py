"""Command-line entry point: ``crawlscout <subcommand> [options]``.

Option values resolve in order: command line, environment
(``CRAWLSCOUT_<OPTION>``, e.g. ``CRAWLSCOUT_DELAY_MS``), the config file
section named after the subcommand, built-in default. The config file is
``--config`` or ``$CRAWLSCOUT_CONFIG``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .annotation import annotate_snapshot, apply_labels, collect_listed_urls, load_sources, quality_report
from .classification import (
    ApiConfig,
    ClassifierSpec,
    InputMode,
    PredictionCache,
    RecordingTransport,
    ReplayTransport,
    classify,
    with_predictions,
)
from .classification.llm import DEFAULT_ENDPOINT, HttpTransport
from .crawler import CrawlConfig, crawl_site
from .errors import CrawlScoutError, OfflineViolation
from .evaluation import DEFAULT_BUDGETS, DEFAULT_WINDOWS, run_experiment
from .extraction import extract_page
from .fetch import Fetcher, get_with_retries, is_loopback
from .fixtures import FixtureServer, FixtureSpec, gen_fixture
from .report import read_report, render_tables, write_report, TABLES_MD
from .snapshot import load_snapshot, parse_timestamp, save_snapshot

log = logging.getLogger("crawlscout")

ENV_PREFIX = "CRAWLSCOUT_"
CONFIG_ENV = "CRAWLSCOUT_CONFIG"
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

DEFAULTS: dict[str, dict[str, object]] = {
    "crawl": dict(max_pages=10_000, concurrency=4, delay_ms=500, timeout_ms=15_000, no_robots=False,
                  single_threaded=False, max_retries=2, user_agent=None, site_id=None, crawl_timestamp=None),
    "extract": dict(re_run=False),
    "annotate": dict(delay_ms=500, timeout_ms=15_000, max_retries=2, accept=False, reject=False),
    "classify": dict(method=None, model=None, input="title", cache=None, seed=0, error_rate=0.0,
                     max_title_words=9, endpoint=DEFAULT_ENDPOINT, rpm=500, concurrency=4,
                     max_retries=2, record=None, replay=None),
    "evaluate": dict(windows=",".join(map(str, DEFAULT_WINDOWS)), budgets=",".join(map(str, DEFAULT_BUDGETS))),
    "report": dict(),
    "gen-fixture": dict(hubs=3, articles_per_hub=20, days=40, seed=0, end_date="2025-01-31", home_latest=5,
                        related=2, hub_link_fraction=1.0, short_title_fraction=0.2, hub_page_size=0,
                        home_articles_first=False, budgets="1,2,4,10,30,100"),
    "serve-fixture": dict(host="127.0.0.1", port=8000),
}
GLOBAL_DEFAULTS = dict(log_level="INFO", deterministic=False, offline=False, config=None)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)
    log_level: str = "INFO"
    deterministic: bool = False
    offline: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------- parsing


def _common(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they don't overwrite values given before the subcommand
    unset = argparse.SUPPRESS if suppress else None
    p = _Parser(add_help=False)
    p.add_argument("--config", default=unset, help="INI config file (sections per subcommand)")
    p.add_argument("--log-level", default=unset, choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--deterministic", action="store_true", default=unset,
                   help="single-threaded, fixed ordering and timestamps")
    p.add_argument("--offline", action="store_true", default=unset,
                   help="refuse network access except to loopback hosts")
    return p


def build_parser() -> _Parser:
    common = _common(suppress=True)
    parser = _Parser(prog="crawlscout", description="Index/content page classification for crawl seeding.",
                     parents=[_common()])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("crawl", parents=[common], help="breadth-first snapshot of one site")
    p.add_argument("--home", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-pages", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--delay-ms", type=int)
    p.add_argument("--timeout-ms", type=int)
    p.add_argument("--no-robots", action="store_true", default=None)
    p.add_argument("--single-threaded", action="store_true", default=None)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--user-agent")
    p.add_argument("--site-id")
    p.add_argument("--crawl-timestamp", help="override the recorded crawl time (ISO-8601 UTC)")

    p = sub.add_parser("extract", parents=[common], help="recompute derived page fields from stored HTML")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--re-run", action="store_true", default=None,
                   help="recompute title, body and date; stored links are kept")

    p = sub.add_parser("annotate", parents=[common], help="gold labels from content listing pages")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--sources", required=True)
    p.add_argument("--delay-ms", type=int)
    p.add_argument("--timeout-ms", type=int)
    p.add_argument("--max-retries", type=int)
    review = p.add_mutually_exclusive_group()
    review.add_argument("--accept", action="store_true", default=None)
    review.add_argument("--reject", action="store_true", default=None)

    p = sub.add_parser("classify", parents=[common], help="predict page types into the snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--method", choices=["all-pages", "rule", "llm", "mock"])
    p.add_argument("--model")
    p.add_argument("--input", choices=[m.value for m in InputMode])
    p.add_argument("--cache")
    p.add_argument("--seed", type=int)
    p.add_argument("--error-rate", type=float)
    p.add_argument("--max-title-words", type=int)
    p.add_argument("--endpoint")
    p.add_argument("--rpm", type=int)
    p.add_argument("--concurrency", type=int)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--record", help="append live responses to this replay file")
    p.add_argument("--replay", help="answer requests from this replay file only")

    p = sub.add_parser("evaluate", parents=[common], help="metrics and coverage report")
    p.add_argument("--snapshots", required=True, help="comma-separated snapshot directories")
    p.add_argument("--methods", required=True, help="comma-separated method ids")
    p.add_argument("--windows")
    p.add_argument("--budgets")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", parents=[common], help="re-render tables.md from a report directory")
    p.add_argument("--in", dest="in_dir", required=True)

    p = sub.add_parser("gen-fixture", parents=[common], help="write a synthetic site with expectations")
    p.add_argument("--out", required=True)
    p.add_argument("--hubs", type=int)
    p.add_argument("--articles-per-hub", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--end-date")
    p.add_argument("--home-latest", type=int)
    p.add_argument("--related", type=int)
    p.add_argument("--hub-link-fraction", type=float)
    p.add_argument("--short-title-fraction", type=float)
    p.add_argument("--hub-page-size", type=int, help="paginate hubs at this many links (0 = no pagination)")
    p.add_argument("--home-articles-first", action="store_true", default=None)
    p.add_argument("--budgets")

    p = sub.add_parser("serve-fixture", parents=[common], help="serve a fixture site on loopback")
    p.add_argument("--site", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    return parser


def _to_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _coerce(raw: str, default: object) -> object:
    if isinstance(default, bool):
        return _to_bool(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def resolve(ns: argparse.Namespace, environ: dict[str, str] | None = None) -> RunConfig:
    environ = dict(os.environ if environ is None else environ)
    config_path = ns.config or environ.get(CONFIG_ENV)
    file_cfg = configparser.ConfigParser(interpolation=None)
    if config_path:
        if not file_cfg.read(config_path, encoding="utf-8"):
            raise UsageError(f"cannot read config file {config_path}")

    def layered(section: str, key: str, cli_value, default):
        if cli_value is not None:
            return cli_value
        env_key = ENV_PREFIX + key.upper()
        try:
            if env_key in environ:
                return _coerce(environ[env_key], default)
            for sec in (section, "global"):
                if file_cfg.has_section(sec):
                    for name in (key, key.replace("_", "-")):
                        if file_cfg.has_option(sec, name):
                            return _coerce(file_cfg.get(sec, name), default)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from exc
        return default

    command = ns.command
    options = {}
    for key, default in DEFAULTS[command].items():
        options[key] = layered(command, key, getattr(ns, key, None), default)
    for key, value in vars(ns).items():
        if key not in options and key not in GLOBAL_DEFAULTS and key != "command":
            options[key] = value
    g = {k: layered(command, k, getattr(ns, k, None), d) for k, d in GLOBAL_DEFAULTS.items() if k != "config"}
    return RunConfig(command=command, options=options, log_level=str(g["log_level"]).upper(),
                     deterministic=bool(g["deterministic"]), offline=bool(g["offline"]))


# --------------------------------------------------------------------------- logging


class _UTCFormatter(logging.Formatter):
    converter = time.gmtime

    def formatTime(self, record, datefmt=None):  # noqa: N802 - logging API
        ts = time.strftime("%Y-%m-%dT%H:%M:%S", self.converter(record.created))
        return f"{ts}.{int(record.msecs):03d}Z"


def setup_logging(level: str, tag: str, stream=None) -> logging.Handler:
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(_UTCFormatter(f"%(asctime)s %(levelname)s {tag} %(name)s: %(message)s"))
    root = logging.getLogger()
    for old in list(root.handlers):
        if getattr(old, "_crawlscout", False):
            root.removeHandler(old)
    handler._crawlscout = True  # type: ignore[attr-defined]
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))
    logging.getLogger("httpx").setLevel(logging.WARNING)
    logging.getLogger("httpcore").setLevel(logging.WARNING)
    return handler


# --------------------------------------------------------------------------- subcommands


def _split(text: str, conv=str) -> list:
    try:
        return [conv(x.strip()) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"bad list value {text!r}: {exc}") from exc


def cmd_crawl(cfg: RunConfig) -> int:
    o = cfg.options
    ts = parse_timestamp(o["crawl_timestamp"]) if o["crawl_timestamp"] else (EPOCH if cfg.deterministic else None)
    try:
        config = CrawlConfig(
            home_url=o["home"],
            page_cap=o["max_pages"],
            max_concurrent_fetches=o["concurrency"],
            min_request_interval=o["delay_ms"] / 1000.0,
            request_timeout=o["timeout_ms"] / 1000.0,
            respect_robots=not o["no_robots"],
            max_retries=o["max_retries"],
            single_threaded=o["single_threaded"] or cfg.deterministic,
            offline=cfg.offline,
            site_id=o["site_id"],
            crawl_timestamp=ts,
            **({"user_agent": o["user_agent"]} if o["user_agent"] else {}),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    snap = crawl_site(config)
    save_snapshot(snap, o["out"])
    log.info("wrote %d pages to %s", len(snap.pages), o["out"])
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    snap = load_snapshot(cfg.options["snapshot"])
    if not cfg.options["re_run"]:
        dated = sum(1 for p in snap.pages if p.publish_date)
        titled = sum(1 for p in snap.pages if p.title)
        print(f"{snap.site_id}: {len(snap.pages)} pages, {titled} titled, {dated} dated; "
              f"pass --re-run to recompute fields")
        return 0
    # links stay as crawled: they carry redirect aliases that the HTML alone cannot reproduce
    pages = []
    for p in snap.pages:
        fields = extract_page(snap.read_html(p), p.url, snap.host)
        pages.append(dataclasses.replace(p, title=fields.title, body=fields.body, publish_date=fields.publish_date))
    save_snapshot(snap.with_pages(pages), cfg.options["snapshot"])
    log.info("re-extracted %d pages", len(pages))
    return 0


def cmd_annotate(cfg: RunConfig) -> int:
    o = cfg.options
    snap = load_snapshot(o["snapshot"])
    sources = load_sources(o["sources"], base_url=snap.home_url)
    with Fetcher(timeout=o["timeout_ms"] / 1000.0, min_interval=o["delay_ms"] / 1000.0,
                 offline=cfg.offline) as fetcher:
        listed = collect_listed_urls(sources, lambda u: get_with_retries(fetcher.get, u, o["max_retries"]))
    labeling = annotate_snapshot(snap, listed)
    status = "accepted" if o["accept"] else "rejected" if o["reject"] else (snap.review_status or "pending")
    labeled = apply_labels(snap, labeling)
    save_snapshot(labeled.with_pages(labeled.pages, review_status=status), o["snapshot"])
    sys.stdout.write(quality_report(labeling))
    sys.stdout.write(f"review_status: {status}\n")
    return 0


def cmd_classify(cfg: RunConfig) -> int:
    o = cfg.options
    method = o["method"]
    if method is None:
        raise UsageError("classify: --method is required")
    if method == "all-pages":
        spec = ClassifierSpec.all_pages()
    elif method == "rule":
        spec = ClassifierSpec.rule(o["max_title_words"])
    elif method == "mock":
        try:
            spec = ClassifierSpec.mock(o["seed"], o["error_rate"])
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        if not o["model"] or not o["cache"]:
            raise UsageError("classify --method llm needs --model and --cache")
        spec = ClassifierSpec.llm(o["model"], o["input"])

    snap = load_snapshot(o["snapshot"])
    api = cache = transport = None
    if method == "llm":
        api = ApiConfig.from_env(
            endpoint=o["endpoint"],
            requests_per_minute=o["rpm"],
            max_concurrent_requests=1 if cfg.deterministic else o["concurrency"],
            max_retries=o["max_retries"],
        )
        cache = PredictionCache(o["cache"])
        if o["replay"]:
            transport = ReplayTransport(o["replay"])
        else:
            if cfg.offline and not is_loopback(api.endpoint):
                raise OfflineViolation("offline mode: LLM classification needs --replay or a loopback endpoint")
            transport = HttpTransport(api)
            if o["record"]:
                transport = RecordingTransport(transport, o["record"])
    labels = classify(snap, spec, api=api, cache=cache, transport=transport)
    save_snapshot(with_predictions(snap, spec.classifier_id, labels), o["snapshot"])
    n_index = sum(1 for t in labels.values() if t.value == "index")
    log.info("%s: %d index / %d content", spec.classifier_id, n_index, len(labels) - n_index)
    print(spec.classifier_id)
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    o = cfg.options
    paths = _split(o["snapshots"])
    methods = _split(o["methods"])
    windows = _split(o["windows"], int)
    budgets = _split(o["budgets"], int)
    if not paths or not methods or not windows or not budgets:
        raise UsageError("evaluate needs at least one snapshot, method, window, and budget")
    if any(w < 1 for w in windows) or any(k < 1 for k in budgets):
        raise UsageError("windows and budgets must be positive")
    snaps = [load_snapshot(p) for p in paths]
    report = run_experiment(snaps, methods, windows, budgets)
    write_report(report, o["out"], run_config=cfg.to_dict())
    log.info("wrote %d metric rows and %d coverage rows to %s", len(report.metrics), len(report.coverage), o["out"])
    return 0


def cmd_report(cfg: RunConfig) -> int:
    root = Path(cfg.options["in_dir"])
    text = render_tables(read_report(root))
    (root / TABLES_MD).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_gen_fixture(cfg: RunConfig) -> int:
    o = cfg.options
    spec = FixtureSpec(hubs=o["hubs"], articles_per_hub=o["articles_per_hub"], days=o["days"], seed=o["seed"],
                       end_date=o["end_date"], home_latest=o["home_latest"], related=o["related"],
                       hub_link_fraction=o["hub_link_fraction"], short_title_fraction=o["short_title_fraction"],
                       hub_page_size=o["hub_page_size"], home_articles_first=o["home_articles_first"],
                       budgets=_split(o["budgets"], int))
    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(f"invalid fixture spec: {exc}") from exc
    gen_fixture(spec, o["out"])
    log.info("fixture written to %s", o["out"])
    return 0


def cmd_serve_fixture(cfg: RunConfig) -> int:
    o = cfg.options
    server = FixtureServer(o["site"], host=o["host"], port=o["port"])
    print(server.origin, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


COMMANDS = {
    "crawl": cmd_crawl,
    "extract": cmd_extract,
    "annotate": cmd_annotate,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "gen-fixture": cmd_gen_fixture,
    "serve-fixture": cmd_serve_fixture,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            parser.print_usage(sys.stderr)
            print("crawlscout: error: a subcommand is required", file=sys.stderr)
            return 1
        cfg = resolve(ns)
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1

    handler = setup_logging(cfg.log_level, cfg.command)
    try:
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"crawlscout {cfg.command}: error: {exc}", file=sys.stderr)
        return 1
    except (CrawlScoutError, OSError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s: %s", exc.__class__.__name__, exc)
        return 2
    finally:
        logging.getLogger().removeHandler(handler)


def main() -> None:
    sys.exit(dispatch())
