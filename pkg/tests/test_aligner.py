"""Alignment tests.

The reference implementations here are written independently of the library:
edit distance as a memoized recursion and token alignment as a quadratic
longest-common-subsequence table. Generated cases stick to the supported
rewrite shape (token substitutions with intact context) where the correct
answer is known exactly.
"""

import functools
import random

import pytest

from acrocode import align
from acrocode.expand import mock_expand


def lcs_len(a: list, b: list) -> int:
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def edit_distance_reference(a: str, b: str) -> int:
    @functools.lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return go(i + 1, j + 1)
        return 1 + min(go(i + 1, j), go(i, j + 1), go(i + 1, j + 1))

    return go(0, 0)


# --- match_blocks ---


def test_identical_texts_one_block():
    assert align.match_blocks("abc def", "abc def") == [
        align.AlignmentBlock(a_start=0, b_start=0, length=7)
    ]
    assert align.match_blocks("", "") == []


def test_block_slices_are_equal_and_ordered():
    rng = random.Random(11)
    vocab = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot"]
    for _ in range(200):
        a = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        b = " ".join(rng.choices(vocab, k=rng.randint(0, 12)))
        prev_a = prev_b = -1
        for blk in align.match_blocks(a, b):
            assert blk.length > 0
            assert a[blk.a_start : blk.a_start + blk.length] == (
                b[blk.b_start : blk.b_start + blk.length]
            )
            assert blk.a_start > prev_a and blk.b_start > prev_b
            prev_a = blk.a_start + blk.length - 1
            prev_b = blk.b_start + blk.length - 1


def test_matched_tokens_never_exceed_lcs():
    rng = random.Random(12)
    vocab = ["aa", "bb", "cc", "dd"]
    for _ in range(300):
        ta = rng.choices(vocab, k=rng.randint(0, 10))
        tb = rng.choices(vocab, k=rng.randint(0, 10))
        a, b = " ".join(ta), " ".join(tb)
        matched = 0
        for blk in align.match_blocks(a, b):
            matched += len(a[blk.a_start : blk.a_start + blk.length].split())
        assert matched <= lcs_len(ta, tb) or a == b


# --- occurrence counting ---


def test_count_occurrences_boundaries():
    assert align.count_occurrences("co course co-op respond", "co") == 2
    assert align.count_occurrences("HR hr (hr)", "hr") == 3
    assert align.count_occurrences("chr hrs", "hr") == 0
    assert align.count_occurrences("", "hr") == 0


def test_count_occurrences_rejects_empty_phrase():
    with pytest.raises(ValueError):
        align.count_occurrences("text", "")


# --- extract_pairs on known rewrites ---


def test_single_substitution():
    pairs = align.extract_pairs("pt has sob today", "pt has shortness of breath today")
    assert len(pairs) == 1
    p = pairs[0]
    assert (p.abbreviation, p.expansion, p.occurrence_index) == (
        "sob",
        "shortness of breath",
        0,
    )
    assert "pt has sob today"[p.a_span[0] : p.a_span[1]] == "sob"


def test_punctuation_is_shed_from_both_sides():
    pairs = align.extract_pairs("he denies cp.", "he denies chest pain.")
    assert [(p.abbreviation, p.expansion) for p in pairs] == [("cp", "chest pain")]
    pairs = align.extract_pairs("prior hx (chf) noted", "prior hx (heart failure) noted")
    assert [(p.abbreviation, p.expansion) for p in pairs] == [("chf", "heart failure")]


def test_adjacent_rewrites_merge():
    pairs = align.extract_pairs("pt c/o pain", "patient complains of pain")
    assert [(p.abbreviation, p.expansion) for p in pairs] == [
        ("pt c/o", "patient complains of")
    ]


def test_pure_insertion_and_deletion_skipped():
    assert align.extract_pairs("a b c", "a b c d") == []
    assert align.extract_pairs("a b c d", "a b c") == []


def test_identical_texts_no_pairs():
    assert align.extract_pairs("same text", "same text") == []


def test_occurrence_indexes_count_prior_standalone_uses():
    original = "pt stable. pt ambulating. PT discharged."
    expanded = "patient stable. patient ambulating. patient discharged."
    pairs = align.extract_pairs(original, expanded)
    assert [(p.abbreviation.lower(), p.occurrence_index) for p in pairs] == [
        ("pt", 0),
        ("pt", 1),
        ("pt", 2),
    ]


def _random_rewrite_case(rng: random.Random):
    fillers = ["alpha", "bravo", "charlie", "delta", "zulu", "kilo", "lima"]
    mapping = {
        "aa1": "golf hotel",
        "bb2": "india juliet victor",
        "cc3": "mike",
        "dd4": "november oscar",
    }
    tokens: list[str] = []
    expected: list[tuple[str, int]] = []
    counts = {abbr: 0 for abbr in mapping}
    last_was_abbr = False
    for _ in range(rng.randint(1, 25)):
        if not last_was_abbr and rng.random() < 0.35:
            abbr = rng.choice(sorted(mapping))
            expected.append((abbr, counts[abbr]))
            counts[abbr] += 1
            token = abbr
            last_was_abbr = True
        else:
            token = rng.choice(fillers)
            last_was_abbr = False
        if rng.random() < 0.2:
            token += rng.choice([".", ","])
        tokens.append(token)
    original = " ".join(tokens)
    return original, mock_expand(original, mapping), mapping, expected


def test_random_substitution_rewrites_recovered_exactly():
    rng = random.Random(99)
    for _ in range(300):
        original, expanded, mapping, expected = _random_rewrite_case(rng)
        pairs = align.extract_pairs(original, expanded)
        got = [(p.abbreviation, p.occurrence_index) for p in pairs]
        assert got == expected
        for p in pairs:
            assert p.expansion == mapping[p.abbreviation]
            assert original[p.a_span[0] : p.a_span[1]] == p.abbreviation
            assert expanded[p.b_span[0] : p.b_span[1]] == p.expansion


def test_substitute_back_roundtrip_random():
    rng = random.Random(7)
    for _ in range(300):
        original, expanded, _, _ = _random_rewrite_case(rng)
        pairs = align.extract_pairs(original, expanded)
        assert align.substitute_back(expanded, pairs) == original


def test_substitute_back_rejects_overlap():
    pairs = [
        align.ExpansionPair("x", "yy", (0, 1), (0, 2), 0),
        align.ExpansionPair("z", "y", (2, 3), (1, 2), 0),
    ]
    with pytest.raises(ValueError):
        align.substitute_back("yyy", pairs)


# --- levenshtein ---


def test_levenshtein_known_values():
    assert align.levenshtein("kitten", "sitting") == 3
    assert align.levenshtein("saturday", "sunday") == 3
    assert align.levenshtein("flaw", "lawn") == 2
    assert align.levenshtein("", "abc") == 3
    assert align.levenshtein("abc", "") == 3
    assert align.levenshtein("abc", "abc") == 0
    assert align.levenshtein("ab", "ba") == 2


def test_levenshtein_matches_reference():
    rng = random.Random(3)
    alphabet = "abcd "
    for _ in range(250):
        a = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        b = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        assert align.levenshtein(a, b) == edit_distance_reference(a, b)


def test_levenshtein_metric_properties():
    rng = random.Random(4)
    words = ["".join(rng.choices("xyz", k=rng.randint(0, 6))) for _ in range(12)]
    for a in words:
        for b in words:
            d = align.levenshtein(a, b)
            assert d == align.levenshtein(b, a)
            assert (d == 0) == (a == b)
            assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
            for c in words[:6]:
                assert d <= align.levenshtein(a, c) + align.levenshtein(c, b)
