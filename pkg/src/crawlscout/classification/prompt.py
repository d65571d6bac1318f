"""Prompt construction from the versioned template, and answer parsing."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from importlib import resources

from ..extraction import BODY_CHAR_LIMIT, truncate_body
from ..snapshot import PageRecord, PageType
from .rules import InputMode

TEMPLATE_NAME = "page_type_v1.txt"
_SECTION = re.compile(r"^\[(\w+)\]\s*$")
_EDGE_PUNCT = "\"'`.,;:!?()[]{}<>*_-“”‘’"


@lru_cache(maxsize=None)
def _template_bytes(name: str = TEMPLATE_NAME) -> bytes:
    return resources.files(__package__).joinpath("prompts", name).read_bytes()


@lru_cache(maxsize=None)
def load_template(name: str = TEMPLATE_NAME) -> dict[str, str]:
    sections: dict[str, list[str]] = {}
    current = None
    for line in _template_bytes(name).decode("utf-8").splitlines():
        m = _SECTION.match(line)
        if m:
            current = sections.setdefault(m.group(1), [])
        elif current is not None:
            current.append(line)
        # lines before the first section are comments
    missing = {"system", "user", "body"} - set(sections)
    if missing:
        raise ValueError(f"prompt template {name} lacks sections {sorted(missing)}")
    return {k: "\n".join(v).strip("\n") for k, v in sections.items()}


def template_sha256(name: str = TEMPLATE_NAME) -> str:
    return hashlib.sha256(_template_bytes(name)).hexdigest()


def build_prompt(page: PageRecord, input_mode: InputMode | str) -> tuple[str, str]:
    """Return the (system, user) message pair for one page."""
    mode = InputMode(input_mode)
    tpl = load_template()
    user = tpl["user"].format(title=page.title)
    if mode is InputMode.TITLE_AND_BODY:
        user += "\n" + tpl["body"].format(body=truncate_body(page.body, BODY_CHAR_LIMIT))
    return tpl["system"], user


def parse_response(raw: str | None) -> PageType | None:
    """Map a model answer to a page type; None means the answer was unusable.

    A bare one-word answer is taken at face value. Longer answers count only
    if exactly one of the two type names appears in them.
    """
    text = (raw or "").strip().lower()
    if not text:
        return None
    tokens = text.split()
    if len(tokens) == 1:
        word = tokens[0].strip(_EDGE_PUNCT)
        if word == "index":
            return PageType.INDEX
        if word == "content":
            return PageType.CONTENT
    has_index = "index" in text
    has_content = "content" in text
    if has_index != has_content:
        return PageType.INDEX if has_index else PageType.CONTENT
    return None
