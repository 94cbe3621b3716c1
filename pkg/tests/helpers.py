"""Shared test utilities.

The oracles here are deliberately independent of the production code:
the Levenshtein oracle is a memoized top-down recursion (the production
function is a bottom-up two-row loop), and the F1 oracle counts by
explicit enumeration.
"""

from __future__ import annotations

import functools

# Acceptance-criterion result lines, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def recursive_levenshtein(a: str, b: str) -> int:
    """Top-down recursion on the textbook recurrence, memoized."""

    @functools.lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        cost = 0 if a[i - 1] == b[j - 1] else 1
        return min(
            go(i - 1, j) + 1,
            go(i, j - 1) + 1,
            go(i - 1, j - 1) + cost,
        )

    result = go(len(a), len(b))
    go.cache_clear()
    return result


def brute_force_counts(predicted: list[str], actual: list[str]):
    """Confusion counts by explicit enumeration."""
    tp = sum(1 for p, a in zip(predicted, actual) if p == "machine" and a == "machine")
    fp = sum(1 for p, a in zip(predicted, actual) if p == "machine" and a == "human")
    fn = sum(1 for p, a in zip(predicted, actual) if p == "human" and a == "machine")
    tn = sum(1 for p, a in zip(predicted, actual) if p == "human" and a == "human")
    return tp, fp, fn, tn


def brute_force_f1(predicted: list[str], actual: list[str]) -> float:
    tp, fp, fn, _ = brute_force_counts(predicted, actual)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
