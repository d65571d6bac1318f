"""Classification metrics and new-page coverage from budgeted seed sets."""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from statistics import fmean
from typing import Iterable, Mapping, Sequence, TypeVar

from .errors import EvaluationError, NoDatedPages, NoNewPages
from .snapshot import LinkGraph, PageType, SiteSnapshot, build_link_graph

log = logging.getLogger(__name__)

DEFAULT_WINDOWS = (1, 30)
DEFAULT_BUDGETS = (10, 30, 100, 300, 1000)
GOLD_METHOD = "gold"
HYBRID_SUFFIX = "+all-pages"


@dataclass(frozen=True)
class RecencyWindow:
    window_days: int

    def __post_init__(self) -> None:
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")


class SeedMethod(str, enum.Enum):
    TYPE_FILTERED = "type-filtered"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class SeedSelection:
    method_id: str
    budget_k: int
    seeds: tuple[str, ...]
    padded_count: int = 0


@dataclass(frozen=True)
class MetricsRow:
    site_id: str
    precision: float
    recall: float
    f1: float
    method_id: str = ""


@dataclass(frozen=True)
class CoverageRow:
    site_id: str
    method_id: str
    window_days: int
    budget_k: int
    new_count: int
    reached_count: int
    coverage: float
    padded_count: int = 0


Row = TypeVar("Row", MetricsRow, CoverageRow)


def label_new_pages(snapshot: SiteSnapshot, window: RecencyWindow | int) -> set[str]:
    days = window.window_days if isinstance(window, RecencyWindow) else RecencyWindow(window).window_days
    latest = snapshot.latest_date
    if latest is None:
        raise NoDatedPages(f"no dated pages in {snapshot.site_id}")
    return {
        p.url for p in snapshot.pages
        if p.publish_date is not None and (latest - p.publish_date).days < days
    }


def shallow_order(snapshot: SiteSnapshot) -> list[str]:
    return [p.url for p in sorted(snapshot.pages, key=lambda p: (p.depth, p.discovery_index))]


def select_seeds(
    snapshot: SiteSnapshot,
    predictions: Mapping[str, PageType],
    budget_k: int,
    method: SeedMethod | str = SeedMethod.TYPE_FILTERED,
    method_id: str = "",
) -> SeedSelection:
    """Pick up to ``budget_k`` shallow seed pages guided by predicted types.

    Type-filtered takes predicted index pages shallowest first, padding with
    the shallowest predicted content pages when index pages run out. Hybrid
    takes ceil(k/2) predicted index pages and fills the rest with the
    shallowest pages of any type.
    """
    if budget_k < 1:
        raise EvaluationError("budget_k must be >= 1")
    method = SeedMethod(method)
    order = shallow_order(snapshot)
    missing = [u for u in order if u not in predictions]
    if missing:
        raise EvaluationError(f"predictions do not cover {len(missing)} pages, e.g. {missing[0]}")
    index_pages = [u for u in order if predictions[u] is PageType.INDEX]

    if method is SeedMethod.TYPE_FILTERED:
        seeds = index_pages[:budget_k]
        padding = [u for u in order if predictions[u] is PageType.CONTENT][: budget_k - len(seeds)]
        return SeedSelection(method_id, budget_k, tuple(seeds + padding), len(padding))

    seeds = index_pages[: math.ceil(budget_k / 2)]
    chosen = set(seeds)
    for url in order:
        if len(seeds) >= budget_k:
            break
        if url not in chosen:
            seeds.append(url)
            chosen.add(url)
    return SeedSelection(method_id, budget_k, tuple(seeds), 0)


def reached_new_pages(graph: LinkGraph, seeds: Iterable[str], new_pages: set[str]) -> set[str]:
    """New pages a crawler collects starting from ``seeds``.

    Seeds that are new count as collected. Beyond the seeds' own links,
    expansion only continues through pages that are themselves new.
    """
    succ = graph.successors
    reached: set[str] = set()
    queue: deque[str] = deque()

    def visit(url: str) -> None:
        if url in new_pages and url not in reached:
            reached.add(url)
            queue.append(url)

    for seed in seeds:
        visit(seed)
        for target in succ.get(seed, ()):
            visit(target)
    while queue:
        for target in succ.get(queue.popleft(), ()):
            visit(target)
    return reached


def compute_coverage(
    snapshot: SiteSnapshot,
    seeds: SeedSelection,
    new_pages: set[str],
    window_days: int = 0,
    graph: LinkGraph | None = None,
) -> CoverageRow:
    if not new_pages:
        raise NoNewPages(f"no new pages in {snapshot.site_id}")
    graph = graph or build_link_graph(snapshot)
    reached = reached_new_pages(graph, seeds.seeds, new_pages)
    return CoverageRow(
        site_id=snapshot.site_id,
        method_id=seeds.method_id,
        window_days=window_days,
        budget_k=seeds.budget_k,
        new_count=len(new_pages),
        reached_count=len(reached),
        coverage=len(reached) / len(new_pages),
        padded_count=seeds.padded_count,
    )


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def classification_metrics(
    gold: Mapping[str, PageType],
    predicted: Mapping[str, PageType],
    site_id: str = "",
    method_id: str = "",
) -> MetricsRow:
    """Precision/recall/F1 with index pages as the positive class."""
    if set(gold) != set(predicted):
        raise EvaluationError("gold and predicted label maps cover different URLs")
    tp = fp = fn = 0
    for url, truth in gold.items():
        guess = predicted[url]
        if guess is PageType.INDEX:
            if truth is PageType.INDEX:
                tp += 1
            else:
                fp += 1
        elif truth is PageType.INDEX:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return MetricsRow(site_id, precision, recall, f1_score(precision, recall), method_id)


def macro_average(rows: Sequence[Row]) -> Row:
    """Unweighted mean of every numeric field; identifying fields are kept only if shared."""
    if not rows:
        raise EvaluationError("cannot average an empty list of rows")
    first = rows[0]
    values = {}
    for f in fields(first):
        column = [getattr(r, f.name) for r in rows]
        if all(v == column[0] for v in column):
            values[f.name] = column[0]
        elif isinstance(column[0], str):
            values[f.name] = "average"
        else:
            values[f.name] = fmean(column)
    return replace(first, **values)


# --------------------------------------------------------------------------- experiment grid


def parse_method(method_id: str) -> tuple[str, SeedMethod]:
    """Split an evaluation method id into (label source, seed method).

    ``gold`` uses the snapshot's gold labels; ``<id>+all-pages`` is the hybrid
    of classifier ``<id>`` with shallow pages of any type.
    """
    if method_id.endswith(HYBRID_SUFFIX) and len(method_id) > len(HYBRID_SUFFIX):
        return method_id[: -len(HYBRID_SUFFIX)], SeedMethod.HYBRID
    return method_id, SeedMethod.TYPE_FILTERED


def labels_for(snapshot: SiteSnapshot, source: str) -> dict[str, PageType] | None:
    if source == GOLD_METHOD:
        return snapshot.gold_labels()
    return snapshot.predictions_for(source)


@dataclass
class EvalReport:
    metrics: list[MetricsRow] = field(default_factory=list)
    coverage: list[CoverageRow] = field(default_factory=list)
    missing: list[tuple[str, str]] = field(default_factory=list)  # (site_id, method_id)
    excluded: list[tuple[str, int, str]] = field(default_factory=list)  # (site_id, window, reason)
    methods: list[str] = field(default_factory=list)
    windows: list[int] = field(default_factory=list)
    budgets: list[int] = field(default_factory=list)

    def metric_averages(self) -> dict[str, MetricsRow]:
        out = {}
        for method in self.methods:
            rows = [r for r in self.metrics if r.method_id == method]
            if rows:
                out[method] = macro_average(rows)
        return out

    def coverage_cells(self) -> dict[tuple[str, int, int], float]:
        """Mean coverage over sites for every (method, window, budget) cell that has data."""
        cells = {}
        for method in self.methods:
            for w in self.windows:
                for k in self.budgets:
                    rows = [r for r in self.coverage
                            if r.method_id == method and r.window_days == w and r.budget_k == k]
                    if rows:
                        cells[(method, w, k)] = macro_average(rows).coverage
        return cells

    def coverage_grand_average(self) -> dict[str, float]:
        """Per method, the mean of its cell means (not of the raw site values)."""
        cells = self.coverage_cells()
        out = {}
        for method in self.methods:
            vals = [v for (m, _, _), v in cells.items() if m == method]
            if vals:
                out[method] = fmean(vals)
        return out


def run_experiment(
    snapshots: Sequence[SiteSnapshot],
    methods: Sequence[str],
    windows: Sequence[int] = DEFAULT_WINDOWS,
    budgets: Sequence[int] = DEFAULT_BUDGETS,
) -> EvalReport:
    report = EvalReport(methods=list(methods), windows=list(windows), budgets=list(budgets))
    for snap in sorted(snapshots, key=lambda s: s.site_id):
        graph = build_link_graph(snap)
        gold = snap.gold_labels()
        new_sets: dict[int, set[str]] = {}
        for w in windows:
            try:
                new = label_new_pages(snap, RecencyWindow(w))
            except NoDatedPages:
                report.excluded.append((snap.site_id, w, "no dated pages"))
                continue
            if not new:
                report.excluded.append((snap.site_id, w, "no new pages"))
                continue
            new_sets[w] = new

        for method in methods:
            source, seed_method = parse_method(method)
            labels = labels_for(snap, source)
            if labels is None:
                log.warning("%s: no complete labels for %s; skipped", snap.site_id, method)
                report.missing.append((snap.site_id, method))
                continue
            # metrics only for plain classifiers on sites with gold labels
            if gold is not None and seed_method is SeedMethod.TYPE_FILTERED and source != GOLD_METHOD:
                report.metrics.append(classification_metrics(gold, labels, snap.site_id, method))
            for w, new in new_sets.items():
                for k in budgets:
                    seeds = select_seeds(snap, labels, k, seed_method, method)
                    report.coverage.append(compute_coverage(snap, seeds, new, w, graph))

    report.metrics.sort(key=lambda r: (r.site_id, r.method_id))
    report.coverage.sort(key=lambda r: (r.site_id, r.method_id, r.window_days, r.budget_k))
    return report
