"""Live-site protocol run, skipped unless pytest is given ``--live``.

Required environment:
    CRAWLSCOUT_LIVE_HOME     home page URL of a site you are allowed to crawl
    CRAWLSCOUT_LIVE_SOURCES  annotation sources INI for that site
Optional:
    CRAWLSCOUT_LIVE_MODEL    model name; with CRAWLSCOUT_API_KEY set, adds LLM classifiers
    CRAWLSCOUT_LIVE_PAGES    page cap (default 300)
    CRAWLSCOUT_LIVE_OUT      keep snapshot and report here instead of a temp dir
"""

from __future__ import annotations

import csv
import os
from pathlib import Path

import pytest

from crawlscout.cli import dispatch

pytestmark = pytest.mark.live


@pytest.mark.criterion(9, "live protocol run on a user-supplied site (numbers not compared)")
def test_live_protocol(tmp_path, capsys):
    home = os.environ.get("CRAWLSCOUT_LIVE_HOME")
    sources = os.environ.get("CRAWLSCOUT_LIVE_SOURCES")
    if not home or not sources:
        pytest.fail("set CRAWLSCOUT_LIVE_HOME and CRAWLSCOUT_LIVE_SOURCES for --live")
    root = Path(os.environ.get("CRAWLSCOUT_LIVE_OUT") or tmp_path)
    snap, out = root / "snapshot", root / "report"
    pages = os.environ.get("CRAWLSCOUT_LIVE_PAGES", "300")

    assert dispatch(["crawl", "--home", home, "--out", str(snap), "--max-pages", pages]) == 0
    assert dispatch(["annotate", "--snapshot", str(snap), "--sources", sources]) == 0
    methods = ["gold", "all-pages", "rule-title-words", "gold+all-pages", "rule-title-words+all-pages"]
    for method in ("all-pages", "rule"):
        assert dispatch(["classify", "--snapshot", str(snap), "--method", method]) == 0

    model = os.environ.get("CRAWLSCOUT_LIVE_MODEL")
    if model and os.environ.get("CRAWLSCOUT_API_KEY"):
        for mode in ("title", "title-body"):
            capsys.readouterr()
            assert dispatch(["classify", "--snapshot", str(snap), "--method", "llm", "--model", model,
                             "--input", mode, "--cache", str(root / "llm-cache")]) == 0
            cid = capsys.readouterr().out.strip()
            methods += [cid, f"{cid}+all-pages"]

    assert dispatch(["evaluate", "--snapshots", str(snap), "--methods", ",".join(methods),
                     "--windows", "1,30", "--budgets", "10,30,100", "--out", str(out)]) == 0
    with (out / "coverage.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(0.0 <= float(r["coverage"]) <= 1.0 for r in rows)
    assert (out / "tables.md").is_file()
