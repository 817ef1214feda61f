"""Acronym expansion of note sections via a chat-completions endpoint.

Three modes share one code path: ``live`` calls the endpoint (responses are
cached on disk keyed by model and prompt), ``cache-only`` serves exclusively
from that cache, and ``mock`` applies an offline dictionary substitution so
pipelines stay runnable and deterministic without any network access.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import requests

from .corpus import Note
from .segment import Section, token_count

SYSTEM_MESSAGE = "You are a helpful assistant."
USER_PROMPT_PREFIX = (
    "Expand all acronyms to their full forms while preserving all the details "
    "in the following paragraph, do not mention the acronyms again. Paragraph: "
)
ASSISTANT_PREFIX = "Here is the paragraph with all acronyms expanded to their full forms:"

SOURCE_LLM = "llm"
SOURCE_MOCK = "mock"
SOURCE_CACHE = "cache"

MODE_LIVE = "live"
MODE_MOCK = "mock"
MODE_CACHE_ONLY = "cache-only"

_SENTENCE_END_RE = re.compile(r"[.?!](?=\s)")


class ExpanderError(RuntimeError):
    """Raised when a section cannot be expanded in the configured mode."""


@dataclass
class ExpanderConfig:
    endpoint_url: str = ""
    model_name: str = ""
    max_inflight: int = 1
    temperature: float = 0.0
    cache_dir: str | Path | None = None
    mode: str = MODE_MOCK
    max_retries: int = 3
    timeout_seconds: float = 60.0
    max_response_tokens: int | None = None
    request_token_budget: int = 1000

    def __post_init__(self) -> None:
        if self.mode not in (MODE_LIVE, MODE_MOCK, MODE_CACHE_ONLY):
            raise ValueError(f"unknown expander mode {self.mode!r}")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        if self.request_token_budget < 1:
            raise ValueError("request_token_budget must be >= 1")
        if self.mode == MODE_LIVE and not self.endpoint_url:
            raise ValueError("live mode requires endpoint_url")
        if self.mode in (MODE_LIVE, MODE_CACHE_ONLY) and self.cache_dir is None:
            raise ValueError(f"{self.mode} mode requires cache_dir")


@dataclass(frozen=True)
class SectionExpansion:
    """Provenance entry for one section: what went in, what came out, and how."""

    original: str
    expanded: str
    source: str


@dataclass(frozen=True)
class ExpandedNote:
    note_id: str
    expanded_text: str
    sections: tuple[SectionExpansion, ...]

    def __post_init__(self) -> None:
        joined = "".join(s.expanded for s in self.sections)
        if self.expanded_text != joined:
            raise ValueError(
                f"note {self.note_id!r}: expanded_text does not equal the join "
                "of its section expansions"
            )

    @classmethod
    def from_sections(cls, note_id: str, sections: Sequence[SectionExpansion]) -> "ExpandedNote":
        return cls(
            note_id=note_id,
            expanded_text="".join(s.expanded for s in sections),
            sections=tuple(sections),
        )


def load_mock_dictionary(path: str | Path) -> dict[str, str]:
    """Read abbreviation -> full-form pairs, one tab-separated pair per line."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected abbreviation<TAB>full form")
            key = parts[0].lower()
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate abbreviation {parts[0]!r}")
            out[key] = parts[1]
    return out


def mock_expand(text: str, dictionary: Mapping[str, str]) -> str:
    """Dictionary-substitute every standalone occurrence of a known abbreviation.

    Matching is case-insensitive, requires that the occurrence not be embedded
    in a longer alphanumeric token, and prefers the longest key when keys
    overlap. A single pass never rescans its own replacements.
    """
    if not dictionary:
        return text
    lowered: dict[str, str] = {}
    for key, value in dictionary.items():
        if not key:
            raise ValueError("dictionary keys must be non-empty")
        lowered[key.lower()] = value
    alternation = "|".join(re.escape(k) for k in sorted(lowered, key=len, reverse=True))
    pattern = re.compile(
        r"(?<![A-Za-z0-9])(?:" + alternation + r")(?![A-Za-z0-9])", re.IGNORECASE
    )
    return pattern.sub(lambda m: lowered[m.group(0).lower()], text)


def build_user_message(section_text: str) -> str:
    return USER_PROMPT_PREFIX + section_text


def clean_response(text: str) -> str:
    """Strip echoes of the seeded assistant prefix from a model response."""
    cleaned = text.lstrip()
    prefix = ASSISTANT_PREFIX.lower()
    while cleaned.lower().startswith(prefix):
        cleaned = cleaned[len(ASSISTANT_PREFIX):].lstrip()
    return cleaned


def split_for_request(text: str, budget: int) -> list[str]:
    """Split an oversized section at sentence ends into budget-sized chunks.

    A sentence end is '.', '?', or '!' followed by whitespace. Chunks
    concatenate back to the input exactly; a single overlong sentence is
    left whole.
    """
    if token_count(text) <= budget:
        return [text]
    bounds = [0]
    for m in _SENTENCE_END_RE.finditer(text):
        if m.end() > bounds[-1]:
            bounds.append(m.end())
    if bounds[-1] < len(text):
        bounds.append(len(text))
    pieces = [text[s:e] for s, e in zip(bounds, bounds[1:])]
    chunks: list[str] = []
    current = ""
    current_tokens = 0
    for piece in pieces:
        piece_tokens = token_count(piece)
        # a tokenless piece (trailing whitespace) always rides along
        if current and piece_tokens and current_tokens + piece_tokens > budget:
            chunks.append(current)
            current = piece
            current_tokens = piece_tokens
        else:
            current += piece
            current_tokens += piece_tokens
    if current:
        chunks.append(current)
    return chunks


# The endpoint credential deliberately never appears in config files or
# flags; it is read from the environment at call time only.
API_KEY_ENV_VAR = "ACROCODE_API_KEY"


def _default_post(url: str, payload: dict, timeout: float) -> dict:
    headers = {}
    api_key = os.environ.get(API_KEY_ENV_VAR)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    response = requests.post(url, json=payload, timeout=timeout, headers=headers)
    response.raise_for_status()
    return response.json()


class Expander:
    """Expands the sections of a note according to the configured mode."""

    def __init__(
        self,
        config: ExpanderConfig,
        dictionary: Mapping[str, str] | None = None,
        post_fn: Callable[[str, dict, float], dict] | None = None,
    ) -> None:
        if config.mode == MODE_MOCK and dictionary is None:
            raise ValueError("mock mode requires a dictionary")
        self.config = config
        self.dictionary = dict(dictionary) if dictionary else {}
        self._post = post_fn or _default_post

    def expand_note(self, note: Note, sections: Sequence[Section]) -> ExpandedNote:
        results: list[SectionExpansion] = []
        for index, section in enumerate(sections):
            try:
                expanded, source = self._expand_body(section.body)
            except ExpanderError as exc:
                raise ExpanderError(
                    f"note {note.id!r} section {index}: {exc}"
                ) from exc
            results.append(
                SectionExpansion(original=section.body, expanded=expanded, source=source)
            )
        return ExpandedNote.from_sections(note.id, results)

    def _expand_body(self, body: str) -> tuple[str, str]:
        if self.config.mode == MODE_MOCK:
            return mock_expand(body, self.dictionary), SOURCE_MOCK
        chunks = split_for_request(body, self.config.request_token_budget)
        outputs: list[str] = []
        sources: list[str] = []
        for chunk in chunks:
            text, source = self._expand_chunk(chunk)
            outputs.append(text)
            sources.append(source)
        merged = "".join(
            _reattach_whitespace(chunk, out) for chunk, out in zip(chunks, outputs)
        )
        source = SOURCE_LLM if SOURCE_LLM in sources else SOURCE_CACHE
        return merged, source

    def _expand_chunk(self, chunk: str) -> tuple[str, str]:
        prompt = build_user_message(chunk)
        key = _cache_key(self.config.model_name, prompt)
        cached = self._cache_read(key)
        if cached is not None:
            return clean_response(cached), SOURCE_CACHE
        if self.config.mode == MODE_CACHE_ONLY:
            raise ExpanderError(f"cache miss for key {key} in cache-only mode")
        raw = self._call_endpoint(prompt)
        self._cache_write(key, raw)
        return clean_response(raw), SOURCE_LLM

    def _call_endpoint(self, prompt: str) -> str:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": SYSTEM_MESSAGE},
                {"role": "user", "content": prompt},
                {"role": "assistant", "content": ASSISTANT_PREFIX},
            ],
            "temperature": self.config.temperature,
        }
        if self.config.max_response_tokens is not None:
            payload["max_tokens"] = self.config.max_response_tokens
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(min(2.0 ** (attempt - 1), 8.0))
            try:
                data = self._post(
                    self.config.endpoint_url, payload, self.config.timeout_seconds
                )
                return data["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retriable here
                last_error = exc
        raise ExpanderError(
            f"endpoint failed after {self.config.max_retries + 1} attempts: {last_error}"
        )

    def _cache_path(self, key: str) -> Path:
        assert self.config.cache_dir is not None
        return Path(self.config.cache_dir) / key[:2] / f"{key}.txt"

    def _cache_read(self, key: str) -> str | None:
        if self.config.cache_dir is None:
            return None
        path = self._cache_path(key)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def _cache_write(self, key: str, text: str) -> None:
        if self.config.cache_dir is None:
            return
        path = self._cache_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


def expand_notes(
    notes: Sequence[Note],
    sections_by_note: Mapping[str, Sequence[Section]],
    expander: Expander,
) -> list[ExpandedNote]:
    """Expand many notes, fanning out across notes up to ``max_inflight``."""
    workers = expander.config.max_inflight
    if workers <= 1 or expander.config.mode == MODE_MOCK:
        return [expander.expand_note(n, sections_by_note[n.id]) for n in notes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(expander.expand_note, n, sections_by_note[n.id]) for n in notes
        ]
        return [f.result() for f in futures]


def _cache_key(model_name: str, prompt: str) -> str:
    material = model_name.encode("utf-8") + b"\x00" + prompt.encode("utf-8")
    return hashlib.sha256(material).hexdigest()


def _reattach_whitespace(original: str, expanded: str) -> str:
    """Give an endpoint response the same outer whitespace as the source text.

    Keeps section boundaries intact when responses drop the trailing newline.
    """
    core = expanded.strip()
    lead = original[: len(original) - len(original.lstrip())]
    trail = original[len(original.rstrip()):]
    if not core:
        return expanded
    return lead + core + trail
