"""Page-type classifiers: all-pages, rule-based, LLM-backed, and a seeded mock."""

from __future__ import annotations

import dataclasses

from ..snapshot import PageType, SiteSnapshot
from .llm import (
    API_KEY_ENV,
    ApiConfig,
    ClassificationOutcome,
    HttpTransport,
    PredictionCache,
    RecordingTransport,
    ReplayTransport,
    TokenBucket,
    classify_llm,
    classify_llm_outcomes,
)
from .prompt import build_prompt, parse_response
from .rules import (
    ClassifierSpec,
    InputMode,
    classify_all_pages,
    classify_mock,
    classify_rule_based,
    title_word_count,
)

__all__ = [
    "API_KEY_ENV", "ApiConfig", "ClassificationOutcome", "ClassifierSpec", "HttpTransport",
    "InputMode", "PredictionCache", "RecordingTransport", "ReplayTransport", "TokenBucket",
    "build_prompt", "classify", "classify_all_pages", "classify_llm", "classify_llm_outcomes",
    "classify_mock", "classify_rule_based", "parse_response", "title_word_count", "with_predictions",
]


def classify(snapshot: SiteSnapshot, spec: ClassifierSpec, *, api: ApiConfig | None = None,
             cache: PredictionCache | None = None, transport=None) -> dict[str, PageType]:
    """Dispatch on the classifier family named by ``spec``."""
    method = spec.method
    if method == "all-pages":
        return classify_all_pages(snapshot)
    if method == "rule-title-words":
        return classify_rule_based(snapshot, spec.max_title_words)
    if method == "mock":
        return classify_mock(snapshot, spec.seed, spec.error_rate)
    if method == "llm":
        if cache is None:
            raise ValueError("LLM classification requires a cache directory")
        return classify_llm(snapshot, spec, api or ApiConfig.from_env(), cache, transport)
    raise ValueError(f"unknown classifier {spec.classifier_id!r}")


def with_predictions(snapshot: SiteSnapshot, classifier_id: str, labels: dict[str, PageType]) -> SiteSnapshot:
    missing = [p.url for p in snapshot.pages if p.url not in labels]
    if missing:
        raise ValueError(f"{len(missing)} pages lack a prediction, e.g. {missing[0]}")
    pages = []
    for p in snapshot.pages:
        preds = dict(p.predictions)
        preds[classifier_id] = labels[p.url]
        pages.append(dataclasses.replace(p, predictions=preds))
    return snapshot.with_pages(pages)

