"""Classifier identities and the non-LLM classifiers."""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass

from ..errors import MissingLabels
from ..snapshot import PageType, SiteSnapshot

DEFAULT_MAX_TITLE_WORDS = 9


class InputMode(str, enum.Enum):
    TITLE_ONLY = "title"
    TITLE_AND_BODY = "title-body"


@dataclass(frozen=True)
class ClassifierSpec:
    classifier_id: str
    input_mode: InputMode = InputMode.TITLE_ONLY
    model_name: str | None = None
    max_title_words: int = DEFAULT_MAX_TITLE_WORDS
    seed: int = 0
    error_rate: float = 0.0

    @property
    def method(self) -> str:
        return self.classifier_id.split(":", 1)[0]

    @classmethod
    def all_pages(cls) -> "ClassifierSpec":
        return cls("all-pages")

    @classmethod
    def rule(cls, max_title_words: int = DEFAULT_MAX_TITLE_WORDS) -> "ClassifierSpec":
        cid = "rule-title-words"
        if max_title_words != DEFAULT_MAX_TITLE_WORDS:
            cid += f":{max_title_words}"
        return cls(cid, max_title_words=max_title_words)

    @classmethod
    def llm(cls, model: str, input_mode: InputMode | str = InputMode.TITLE_ONLY) -> "ClassifierSpec":
        mode = InputMode(input_mode)
        return cls(f"llm:{model}:{mode.value}", input_mode=mode, model_name=model)

    @classmethod
    def mock(cls, seed: int, error_rate: float = 0.0) -> "ClassifierSpec":
        if not 0.0 <= error_rate <= 1.0:
            raise ValueError("error_rate must lie in [0, 1]")
        cid = f"mock:{seed}" if error_rate == 0 else f"mock:{seed}:{error_rate:g}"
        return cls(cid, seed=seed, error_rate=error_rate)

    @classmethod
    def parse(cls, classifier_id: str) -> "ClassifierSpec":
        """Inverse of the factory methods above."""
        head, _, rest = classifier_id.partition(":")
        try:
            if head == "all-pages" and not rest:
                return cls.all_pages()
            if head == "rule-title-words":
                return cls.rule(int(rest) if rest else DEFAULT_MAX_TITLE_WORDS)
            if head == "llm":
                model, _, mode = rest.rpartition(":")
                if model:
                    return cls.llm(model, mode)
            if head == "mock" and rest:
                seed, _, rate = rest.partition(":")
                return cls.mock(int(seed), float(rate) if rate else 0.0)
        except ValueError:
            pass
        raise ValueError(f"unrecognised classifier id {classifier_id!r}")


def title_word_count(title: str) -> int:
    return len(title.split())


def classify_all_pages(snapshot: SiteSnapshot) -> dict[str, PageType]:
    return {p.url: PageType.INDEX for p in snapshot.pages}


def classify_rule_based(snapshot: SiteSnapshot, max_title_words: int = DEFAULT_MAX_TITLE_WORDS) -> dict[str, PageType]:
    """Short titles mark index pages: Index iff the title has at most ``max_title_words`` words."""
    return {
        p.url: PageType.INDEX if title_word_count(p.title) <= max_title_words else PageType.CONTENT
        for p in snapshot.pages
    }


def _page_rng(seed: int, url: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}\x00{url}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def classify_mock(snapshot: SiteSnapshot, seed: int, error_rate: float = 0.0) -> dict[str, PageType]:
    """Gold labels with each one flipped independently with probability ``error_rate``."""
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError("error_rate must lie in [0, 1]")
    out = {}
    for p in snapshot.pages:
        if p.gold_type is None:
            raise MissingLabels(f"mock classifier needs gold labels; {p.url} has none")
        flip = _page_rng(seed, p.url).random() < error_rate
        out[p.url] = p.gold_type.flipped() if flip else p.gold_type
    return out
