"""Header-based sectioning of clinical notes and whitespace-token budgeting."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

# A header is a line whose leading prefix of letters, spaces, and slashes
# (at most 6 words) ends with a colon, e.g. "past medical history:".
_HEADER_RE = re.compile(r"[ \t]*([A-Za-z][A-Za-z /]*):")
_MAX_HEADER_WORDS = 6

_TOKEN_RE = re.compile(r"\S+")

DEFAULT_TOKEN_BUDGET = 8192
DEFAULT_DROPPABLE = (
    "social history",
    "family history",
    "medication on admission",
    "discharge instructions",
)


@dataclass(frozen=True)
class Section:
    """One section of a note.

    ``body`` is the raw slice ``text[start:end]`` including the header line,
    so concatenating section bodies in order reproduces the note exactly.
    ``header`` is the normalized header name, or "" for preamble text that
    precedes the first header.
    """

    header: str
    body: str
    start: int
    end: int


def normalize_header(name: str) -> str:
    """Lowercase and collapse internal whitespace of a header name."""
    return " ".join(name.split()).lower()


def _header_name(line: str) -> str | None:
    m = _HEADER_RE.match(line)
    if m is None:
        return None
    name = normalize_header(m.group(1))
    if not name or len(name.split()) > _MAX_HEADER_WORDS:
        return None
    return name


def segment(text: str) -> list[Section]:
    """Split a note into header-delimited sections.

    Every character of the input lands in exactly one section; text before
    the first header becomes a preamble section with an empty header name.
    """
    if not text:
        return []
    starts: list[tuple[int, str]] = []
    offset = 0
    for line in text.splitlines(keepends=True):
        name = _header_name(line)
        if name is not None:
            starts.append((offset, name))
        offset += len(line)
    sections: list[Section] = []
    if not starts or starts[0][0] > 0:
        end = starts[0][0] if starts else len(text)
        sections.append(Section(header="", body=text[:end], start=0, end=end))
    for i, (start, name) in enumerate(starts):
        end = starts[i + 1][0] if i + 1 < len(starts) else len(text)
        sections.append(Section(header=name, body=text[start:end], start=start, end=end))
    return sections


def token_count(text: str) -> int:
    """Number of whitespace-delimited tokens."""
    return len(text.split())


def reduce_to_budget(
    sections: Sequence[Section],
    budget: int = DEFAULT_TOKEN_BUDGET,
    droppable: Sequence[str] = DEFAULT_DROPPABLE,
) -> str:
    """Fit a sectioned note into a whitespace-token budget.

    Sections whose header appears in ``droppable`` are removed in the given
    priority order, one at a time, but only while the note still exceeds the
    budget. If the remainder is still too long it is hard-truncated at the
    budget-th token. A note that already fits is returned unchanged.
    """
    if budget <= 0:
        raise ValueError("budget must be > 0")
    kept = list(sections)
    counts = [token_count(s.body) for s in kept]
    total = sum(counts)
    drop_order = [normalize_header(name) for name in droppable]
    for name in drop_order:
        if total <= budget:
            break
        i = 0
        while i < len(kept) and total > budget:
            if kept[i].header == name:
                total -= counts[i]
                del kept[i]
                del counts[i]
            else:
                i += 1
    text = "".join(s.body for s in kept)
    if total <= budget:
        return text
    return _truncate_tokens(text, budget)


def _truncate_tokens(text: str, budget: int) -> str:
    for i, m in enumerate(_TOKEN_RE.finditer(text)):
        if i == budget - 1:
            return text[: m.end()]
    return text
