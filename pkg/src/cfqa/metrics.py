"""Token-level answer metrics: exact match and bag-of-token F1."""

from __future__ import annotations

from collections import Counter


def token_f1(pred: list[int], gold: list[int]) -> float:
    """Harmonic mean of precision/recall over the token multiset overlap."""
    if not pred or not gold:
        return 0.0
    common = Counter(pred) & Counter(gold)
    n_same = sum(common.values())
    if n_same == 0:
        return 0.0
    precision = n_same / len(pred)
    recall = n_same / len(gold)
    return 2 * precision * recall / (precision + recall)


def best_f1(pred: list[int], golds: list[list[int]]) -> float:
    return max(token_f1(pred, g) for g in golds)


def exact_match(pred: list[int], golds: list[list[int]]) -> int:
    return int(any(pred == g for g in golds))
