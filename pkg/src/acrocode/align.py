"""Alignment of a note against its rewritten form and expansion-pair extraction.

Matching runs are found at the whitespace-token level (robust to rewrites that
reflow whitespace) and then mapped back to character offsets, so downstream
consumers can slice either text directly.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from difflib import SequenceMatcher

# Guards for occurrence counting: a phrase occurrence must not be embedded in
# a longer alphanumeric token, e.g. "co" must not match inside "course".
_BOUNDARY_BEFORE = r"(?<![A-Za-z0-9])"
_BOUNDARY_AFTER = r"(?![A-Za-z0-9])"

_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class AlignmentBlock:
    """A run of identical characters shared by text A and text B."""

    a_start: int
    b_start: int
    length: int


@dataclass(frozen=True)
class ExpansionPair:
    """One (abbreviation, expansion) extracted from an aligned text pair.

    Spans are half-open [start, end) character ranges: ``a_span`` into the
    original text, ``b_span`` into the expanded text. ``occurrence_index``
    counts earlier standalone occurrences of the same abbreviation in the
    original text, so the pair can be matched against per-occurrence gold.
    """

    abbreviation: str
    expansion: str
    a_span: tuple[int, int]
    b_span: tuple[int, int]
    occurrence_index: int


def _token_spans(text: str) -> list[tuple[int, int, str]]:
    return [(m.start(), m.end(), m.group()) for m in _TOKEN_RE.finditer(text)]


def match_blocks(a: str, b: str) -> list[AlignmentBlock]:
    """Maximal runs of identical text shared by ``a`` and ``b``.

    Tokens are matched with a recursive longest-common-run strategy (no junk
    heuristic), then adjacent matched tokens are merged into one block when
    the text between them, whitespace included, is identical on both sides.
    Blocks never overlap and appear in strictly increasing offset order on
    both sides; each block's slice of ``a`` equals its slice of ``b``.
    """
    if a == b:
        return [AlignmentBlock(a_start=0, b_start=0, length=len(a))] if a else []
    a_spans = _token_spans(a)
    b_spans = _token_spans(b)
    matcher = SequenceMatcher(
        None, [t for _, _, t in a_spans], [t for _, _, t in b_spans], autojunk=False
    )
    pairs: list[tuple[int, int, int, int]] = []
    for i, j, n in matcher.get_matching_blocks():
        for k in range(n):
            sa, ea, _ = a_spans[i + k]
            sb, eb, _ = b_spans[j + k]
            pairs.append((sa, ea, sb, eb))
    merged: list[list[int]] = []
    for sa, ea, sb, eb in pairs:
        if merged:
            psa, pea, psb, peb = merged[-1]
            if a[pea:sa] == b[peb:sb]:
                merged[-1][1] = ea
                merged[-1][3] = eb
                continue
        merged.append([sa, ea, sb, eb])
    if merged:
        # Absorb identical flanking whitespace. Never absorb letter runs:
        # "with sob" vs "with shortness" must not pull the shared "s" out of
        # the differing tokens.
        first = merged[0]
        while (
            first[0] > 0
            and first[2] > 0
            and a[first[0] - 1] == b[first[2] - 1]
            and a[first[0] - 1].isspace()
        ):
            first[0] -= 1
            first[2] -= 1
        last = merged[-1]
        while (
            last[1] < len(a)
            and last[3] < len(b)
            and a[last[1]] == b[last[3]]
            and a[last[1]].isspace()
        ):
            last[1] += 1
            last[3] += 1
    return [AlignmentBlock(a_start=sa, b_start=sb, length=ea - sa) for sa, ea, sb, eb in merged]


def count_occurrences(text: str, phrase: str) -> int:
    """Standalone occurrences of ``phrase`` in ``text``, case-insensitive.

    An occurrence must not extend a longer alphanumeric token on either side.
    """
    if not phrase:
        raise ValueError("phrase must be non-empty")
    pattern = re.compile(
        _BOUNDARY_BEFORE + re.escape(phrase) + _BOUNDARY_AFTER, re.IGNORECASE
    )
    return sum(1 for _ in pattern.finditer(text))


def _trim(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


def _shed_shared_affixes(
    original: str, expanded: str, ta_s: int, ta_e: int, tb_s: int, tb_e: int
) -> tuple[int, int, int, int]:
    # Whitespace is trimmed per side; punctuation is shed only when the same
    # character flanks both sides ("cp." vs "chest pain." keeps cp / chest
    # pain). Alphanumeric affixes stay: trimming them would distort real
    # substitutions that happen to share letters.
    changed = True
    while changed:
        changed = False
        na_s, na_e = _trim(original, ta_s, ta_e)
        nb_s, nb_e = _trim(expanded, tb_s, tb_e)
        if (na_s, na_e, nb_s, nb_e) != (ta_s, ta_e, tb_s, tb_e):
            ta_s, ta_e, tb_s, tb_e = na_s, na_e, nb_s, nb_e
            changed = True
        while (
            ta_s < ta_e
            and tb_s < tb_e
            and original[ta_s] == expanded[tb_s]
            and not original[ta_s].isalnum()
        ):
            ta_s += 1
            tb_s += 1
            changed = True
        while (
            ta_s < ta_e
            and tb_s < tb_e
            and original[ta_e - 1] == expanded[tb_e - 1]
            and not original[ta_e - 1].isalnum()
        ):
            ta_e -= 1
            tb_e -= 1
            changed = True
    return ta_s, ta_e, tb_s, tb_e


def extract_pairs(original: str, expanded: str) -> list[ExpansionPair]:
    """Extract (abbreviation, expansion) pairs from an aligned text pair.

    Each gap between consecutive matching blocks that is non-empty on both
    sides after trimming yields one pair; pure insertions and deletions are
    skipped. Trimming removes surrounding whitespace and any punctuation
    shared by both sides, so a trailing period or comma never sticks to the
    extracted pair. Identical inputs yield no pairs. Adjacent rewrites with
    no matching token between them come back as one combined pair.
    """
    blocks = match_blocks(original, expanded)
    gaps: list[tuple[int, int, int, int]] = []
    prev_a = prev_b = 0
    for blk in blocks:
        gaps.append((prev_a, blk.a_start, prev_b, blk.b_start))
        prev_a = blk.a_start + blk.length
        prev_b = blk.b_start + blk.length
    gaps.append((prev_a, len(original), prev_b, len(expanded)))
    pairs: list[ExpansionPair] = []
    for ga_s, ga_e, gb_s, gb_e in gaps:
        ta_s, ta_e, tb_s, tb_e = _shed_shared_affixes(
            original, expanded, ga_s, ga_e, gb_s, gb_e
        )
        if ta_s == ta_e or tb_s == tb_e:
            continue
        abbreviation = original[ta_s:ta_e]
        expansion = expanded[tb_s:tb_e]
        occurrence = count_occurrences(original[:ta_s], abbreviation)
        pairs.append(
            ExpansionPair(
                abbreviation=abbreviation,
                expansion=expansion,
                a_span=(ta_s, ta_e),
                b_span=(tb_s, tb_e),
                occurrence_index=occurrence,
            )
        )
    return pairs


def substitute_back(expanded: str, pairs: Sequence[ExpansionPair]) -> str:
    """Rebuild the original-side text by putting the abbreviations back.

    Replaces each pair's expanded-side span with its abbreviation. Faithful
    whenever the text outside the pair spans is identical on both sides,
    which holds for whitespace-preserving substitution rewrites.
    """
    ordered = sorted(pairs, key=lambda p: p.b_span[0])
    pieces: list[str] = []
    prev = 0
    for pair in ordered:
        start, end = pair.b_span
        if start < prev:
            raise ValueError("pair spans overlap on the expanded side")
        pieces.append(expanded[prev:start])
        pieces.append(pair.abbreviation)
        prev = end
    pieces.append(expanded[prev:])
    return "".join(pieces)


def levenshtein(a: str, b: str) -> int:
    """Edit distance between two strings: unit-cost insert, delete, substitute."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (ca != cb),
            )
        prev = cur
    return prev[len(b)]
