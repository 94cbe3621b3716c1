"""Symbolic similarity metrics between an original text and its rewrite.

All string metrics operate on unicode code points, never bytes, so a
multi-byte character counts as a single edit unit.  Token-level metrics
share one tokenizer whose behaviour is pinned by ``TOKENIZER_ID``; any
change to the tokenizer must change that identifier.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass

# Identifier of the tokenization scheme, mixed into feature schema
# fingerprints so models cannot silently consume differently tokenized
# features.
TOKENIZER_ID = "ws-lower-punct-v1"


def levenshtein_distance(a: str, b: str) -> int:
    """Minimum number of single-character insertions, deletions, and
    substitutions turning ``a`` into ``b``.

    >>> levenshtein_distance("kitten", "sitting")
    3
    >>> levenshtein_distance("", "abc")
    3
    """
    # Keep the shorter string on the inner axis: two rows of len(b)+1.
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    current = [0] * (len(b) + 1)
    for i, ca in enumerate(a, start=1):
        current[0] = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(
                previous[j] + 1,        # delete from a
                current[j - 1] + 1,     # insert into a
                previous[j - 1] + cost, # substitute
            )
        previous, current = current, previous
    return previous[-1]


def levenshtein_similarity(original: str, rewritten: str) -> float:
    """Normalized edit similarity in [0, 1]; 1 means identical.

    Defined as ``1 - distance / max(len(original), len(rewritten))``.
    Two empty strings are identical by convention.

    >>> levenshtein_similarity("kitten", "sitting")
    0.5714285714285714
    >>> levenshtein_similarity("", "")
    1.0
    """
    if not original and not rewritten:
        return 1.0
    longest = max(len(original), len(rewritten))
    return 1.0 - levenshtein_distance(original, rewritten) / longest


@dataclass(frozen=True)
class TokenSequence:
    """Tokenized view of a text plus the code-point length of its source."""

    tokens: tuple[str, ...]
    source_length_chars: int

    def __len__(self) -> int:
        return len(self.tokens)


def _strip_punctuation(token: str) -> str:
    """Drop leading and trailing punctuation code points (categories P*)."""
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> TokenSequence:
    """Lowercase, split on unicode whitespace runs, strip edge punctuation.

    Tokens that become empty after stripping are dropped, so the result
    never contains the empty string.

    >>> tokenize("Help me, polish this.").tokens
    ('help', 'me', 'polish', 'this')
    """
    tokens = []
    for raw in text.lower().split():
        token = _strip_punctuation(raw)
        if token:
            tokens.append(token)
    return TokenSequence(tokens=tuple(tokens), source_length_chars=len(text))


def _ngram_counts(tokens: tuple[str, ...], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bag_of_ngrams_overlap(
    original: TokenSequence, rewritten: TokenSequence, n: int = 1
) -> float:
    """Fraction of the original's contiguous n-grams preserved in the rewrite.

    Multiset semantics: a repeated n-gram must be repeated in the rewrite
    to count twice.  The denominator is the original's n-gram count, so
    the score reads "how much of the original survived" and is not
    symmetric.  When the original is too short to form a single n-gram
    the score is 1.0 if the rewrite is equally short, else 0.0.

    >>> bag_of_ngrams_overlap(tokenize("a b c"), tokenize("a b d"))
    0.6666666666666666
    """
    if n < 1:
        raise ValueError(f"n-gram size must be >= 1, got {n}")
    original_counts = _ngram_counts(original.tokens, n)
    rewritten_counts = _ngram_counts(rewritten.tokens, n)
    total = sum(original_counts.values())
    if total == 0:
        return 1.0 if sum(rewritten_counts.values()) == 0 else 0.0
    preserved = sum(
        min(count, rewritten_counts[gram]) for gram, count in original_counts.items()
    )
    return min(1.0, max(0.0, preserved / max(1, total)))
