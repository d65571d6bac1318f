"""Report files: per-site CSVs, a run description, and markdown tables.

``tables.md`` follows the layout of the published result tables: methods as
rows, one column per (recency window, seed budget) pair, and a trailing
average over those columns.
"""

from __future__ import annotations

import csv
import io
import json
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .evaluation import CoverageRow, EvalReport, MetricsRow

METRICS_CSV = "metrics.csv"
COVERAGE_CSV = "coverage.csv"
TABLES_MD = "tables.md"
RUN_JSON = "run.json"

METRIC_FIELDS = ["site_id", "method_id", "precision", "recall", "f1"]
COVERAGE_FIELDS = ["site_id", "method_id", "window_days", "budget_k", "new_count",
                   "reached_count", "coverage", "padded_count"]


def round3(value: float) -> str:
    """Half-up rounding to three decimals, applied to the shortest repr of ``value``."""
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


def window_label(days: int) -> str:
    return "Latest 1 Day" if days == 1 else f"Latest {days} Days"


def budget_label(k: int) -> str:
    return f"{k:,}P"


def _csv_text(fieldnames: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def render_tables(report: EvalReport) -> str:
    out = ["# Evaluation report", ""]
    averages = report.metric_averages()
    out += ["## Page type classification (index pages positive, macro-averaged over sites)", ""]
    if averages:
        out += ["| Method | Precision | Recall | F1 | Sites |", "|---|---|---|---|---|"]
        for method, row in averages.items():
            sites = sum(1 for r in report.metrics if r.method_id == method)
            out.append(f"| {method} | {round3(row.precision)} | {round3(row.recall)} | {round3(row.f1)} | {sites} |")
    else:
        out.append("No labeled sites or no classifier methods; classification metrics skipped.")
    out.append("")

    cells = report.coverage_cells()
    grand = report.coverage_grand_average()
    out += ["## New-page coverage (mean over sites per cell; Average = mean of the cell means)", ""]
    if cells:
        cols = [(w, k) for w in report.windows for k in report.budgets]
        header = ["Method"] + [f"{window_label(w)} {budget_label(k)}" for w, k in cols] + ["Average"]
        out.append("| " + " | ".join(header) + " |")
        out.append("|" + "---|" * len(header))
        for method in report.methods:
            if method not in grand:
                continue
            vals = [round3(cells[(method, w, k)]) if (method, w, k) in cells else "-" for w, k in cols]
            out.append(f"| {method} | " + " | ".join(vals) + f" | {round3(grand[method])} |")
    else:
        out.append("No coverage rows (no site had new pages under any window).")
    out.append("")

    if report.missing or report.excluded:
        out += ["## Notes", ""]
        for site, method in report.missing:
            out.append(f"- {site}: method `{method}` missing (no complete labels)")
        for site, w, reason in report.excluded:
            out.append(f"- {site}: excluded from {window_label(w)} ({reason})")
        out.append("")
    return "\n".join(out)


def write_report(report: EvalReport, out_dir: str | Path, run_config: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / METRICS_CSV).write_text(
        _csv_text(METRIC_FIELDS, [
            {"site_id": r.site_id, "method_id": r.method_id, "precision": r.precision,
             "recall": r.recall, "f1": r.f1} for r in report.metrics
        ]), encoding="utf-8")
    (out / COVERAGE_CSV).write_text(
        _csv_text(COVERAGE_FIELDS, [{f: getattr(r, f) for f in COVERAGE_FIELDS} for r in report.coverage]),
        encoding="utf-8")
    run = {
        "methods": report.methods,
        "windows": report.windows,
        "budgets": report.budgets,
        "missing": [list(x) for x in report.missing],
        "excluded": [list(x) for x in report.excluded],
        "config": run_config or {},
    }
    (out / RUN_JSON).write_text(json.dumps(run, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / TABLES_MD).write_text(render_tables(report), encoding="utf-8")
    return out


def read_report(out_dir: str | Path) -> EvalReport:
    root = Path(out_dir)
    run = json.loads((root / RUN_JSON).read_text(encoding="utf-8"))
    with (root / METRICS_CSV).open(encoding="utf-8", newline="") as fh:
        metrics = [MetricsRow(r["site_id"], float(r["precision"]), float(r["recall"]), float(r["f1"]),
                              r["method_id"]) for r in csv.DictReader(fh)]
    with (root / COVERAGE_CSV).open(encoding="utf-8", newline="") as fh:
        coverage = [CoverageRow(r["site_id"], r["method_id"], int(r["window_days"]), int(r["budget_k"]),
                                int(r["new_count"]), int(r["reached_count"]), float(r["coverage"]),
                                int(r["padded_count"])) for r in csv.DictReader(fh)]
    return EvalReport(
        metrics=metrics,
        coverage=coverage,
        missing=[tuple(x) for x in run["missing"]],
        excluded=[tuple(x) for x in run["excluded"]],
        methods=run["methods"],
        windows=run["windows"],
        budgets=run["budgets"],
    )
