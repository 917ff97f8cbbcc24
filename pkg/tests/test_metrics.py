import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from popr.errors import ValidationError
from popr.metrics import dcg, ndcg, srcc

# frozen from the oracle module
NDCG_SWAPPED_PAIR = 0.7967075809905066


def test_identity():
    order = ["a", "b", "c", "d"]
    assert srcc(order, order) == 1.0
    assert ndcg(order, order) == 1.0


def test_reversal_three():
    assert srcc(["c", "b", "a"], ["a", "b", "c"]) == -1.0


def test_adjacent_swap_three():
    assert srcc(["a", "c", "b"], ["a", "b", "c"]) == 0.5


def test_ndcg_swapped_pair():
    assert ndcg(["b", "a"], ["a", "b"]) == pytest.approx(NDCG_SWAPPED_PAIR, abs=1e-12)
    L = math.log2(3)
    assert NDCG_SWAPPED_PAIR == pytest.approx((1 + 3 / L) / (3 + 1 / L), abs=1e-15)


def test_dcg_formula():
    assert dcg([3, 2, 1]) == pytest.approx(7 + 3 / 1.5849625007211562 + 1 / 2)


def test_errors():
    with pytest.raises(ValidationError):
        srcc(["a", "b"], ["a", "c"])
    with pytest.raises(ValidationError):
        ndcg(["a", "a"], ["a", "b"])
    with pytest.raises(ValidationError):
        srcc(["a"], ["a"])


perms = st.integers(2, 7).flatmap(lambda n: st.permutations([f"p{i}" for i in range(n)]))


@given(perms)
def test_against_oracles(pred):
    truth = sorted(pred)
    assert srcc(pred, truth) == pytest.approx(oracles.spearman(pred, truth), abs=1e-12)
    assert ndcg(pred, truth) == pytest.approx(oracles.ndcg(pred, truth), abs=1e-12)


@given(perms)
def test_ranges(pred):
    truth = sorted(pred)
    assert -1.0 <= srcc(pred, truth) <= 1.0
    assert 0.0 < ndcg(pred, truth) <= 1.0 + 1e-12


def test_ndcg_maximised_only_by_truth():
    truth = ["a", "b", "c", "d"]
    scores = {p: ndcg(list(p), truth) for p in itertools.permutations(truth)}
    assert max(scores, key=scores.get) == tuple(truth)
    assert sorted(scores.values())[-2] < 1.0
