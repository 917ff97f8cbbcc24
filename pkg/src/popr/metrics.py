"""Ranking quality: Spearman rank correlation and NDCG between two orderings."""

from __future__ import annotations

import math
from typing import Sequence

from .errors import ValidationError


def _ranks(predicted: Sequence[str], truth: Sequence[str]) -> tuple[dict[str, int], dict[str, int]]:
    pred, true = list(predicted), list(truth)
    if len(set(pred)) != len(pred) or len(set(true)) != len(true):
        raise ValidationError("orderings must not contain duplicates")
    if set(pred) != set(true):
        missing = sorted(set(true) ^ set(pred))
        raise ValidationError(f"orderings cover different items: {missing}")
    if len(pred) < 2:
        raise ValidationError("need at least two items to compare orderings")
    return {p: i + 1 for i, p in enumerate(pred)}, {p: i + 1 for i, p in enumerate(true)}


def srcc(predicted: Sequence[str], truth: Sequence[str]) -> float:
    """Spearman's rho for two best-first orderings of the same distinct items."""
    rp, rt = _ranks(predicted, truth)
    n = len(rp)
    d2 = sum((rp[k] - rt[k]) ** 2 for k in rp)
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))


def dcg(relevances: Sequence[float]) -> float:
    return sum((2.0 ** rel - 1.0) / math.log2(i + 2) for i, rel in enumerate(relevances))


def ndcg(predicted: Sequence[str], truth: Sequence[str]) -> float:
    """NDCG with relevance ``n`` for the true best item down to ``1`` for the worst."""
    rp, rt = _ranks(predicted, truth)
    n = len(rt)
    rel = {k: n - rt[k] + 1 for k in rt}
    ideal = dcg([rel[k] for k in truth])
    return dcg([rel[k] for k in predicted]) / ideal
