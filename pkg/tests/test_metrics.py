from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metagdn.metrics import (
    auc_pr,
    auc_roc,
    evaluate,
    precision_at_k,
    random_baseline,
    read_scores,
    write_scores,
)


def pairwise_auc(s, y):
    pos = [a for a, t in zip(s, y) if t == 1]
    neg = [b for b, t in zip(s, y) if t == 0]
    credit = sum(Fraction(1) if a > b else Fraction(1, 2) if a == b else Fraction(0) for a in pos for b in neg)
    return float(credit / (len(pos) * len(neg)))


def sweep_order(s):
    return sorted(range(len(s)), key=lambda i: (-s[i], i))


def sweep_ap(s, y):
    hits, total = 0, Fraction(0)
    for rank, i in enumerate(sweep_order(s), start=1):
        if y[i]:
            hits += 1
            total += Fraction(hits, rank)
    return float(total / sum(y))


def sweep_precision(s, y, k):
    return sum(y[i] for i in sweep_order(s)[:k]) / k


FOUR = ([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])


def test_four_node_example():
    s, y = FOUR
    assert auc_roc(s, y) == 0.75
    assert auc_pr(s, y) == pytest.approx(5 / 6, abs=0)
    assert precision_at_k(s, y, 2) == 0.5


def test_perfect_and_tied():
    assert auc_roc([3, 2, 1, 0], [1, 1, 0, 0]) == 1.0
    assert auc_roc([1, 1, 1, 1], [1, 0, 1, 0]) == 0.5
    assert auc_pr([4, 3, 2, 1], [1, 1, 0, 0]) == 1.0
    assert precision_at_k([4, 3, 2, 1], [1, 1, 0, 0], 2) == 1.0
    assert precision_at_k([4, 3, 2, 1], [1, 0, 1, 0], 4) == 0.5


def test_single_positive_last():
    for m in range(1, 12):
        y = [0] * (m - 1) + [1]
        assert auc_pr(list(range(m, 0, -1)), y) == 1 / m


def test_errors():
    with pytest.raises(ValueError):
        auc_roc([1, 2], [1, 1])
    with pytest.raises(ValueError):
        auc_pr([1, 2], [0, 0])
    with pytest.raises(ValueError):
        auc_roc([1, np.nan], [1, 0])
    with pytest.raises(ValueError):
        precision_at_k([1, 2], [1, 0], 3)
    with pytest.raises(ValueError):
        auc_roc([1, 2], [1, 2])


def test_evaluate_skips_large_k():
    r = evaluate([0.9, 0.1, 0.5], [1, 0, 0], ks=(1, 2, 5))
    assert set(r.precision_at_k) == {1, 2}


instances = st.integers(2, 200).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 6).map(lambda v: v / 2), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@settings(max_examples=100, deadline=None)
@given(inst=instances)
def test_metrics_match_brute_force(inst):
    s, y = inst
    assert auc_roc(s, y) == pairwise_auc(s, y)
    assert auc_pr(s, y) == sweep_ap(s, y)
    for k in (1, len(s) // 2 or 1, len(s)):
        assert precision_at_k(s, y, k) == sweep_precision(s, y, k)


@settings(max_examples=50, deadline=None)
@given(inst=instances)
def test_auc_monotone_invariance_and_label_swap(inst):
    s, y = np.array(inst[0]), np.array(inst[1])
    assert auc_roc(np.exp(3 * s) - 2, y) == auc_roc(s, y)
    assert auc_roc(s, 1 - y) == pytest.approx(1 - auc_roc(s, y), abs=1e-15)


def test_random_baseline_null_statistics():
    rng = np.random.default_rng(0)
    y = np.zeros(400, dtype=int)
    y[:40] = 1
    r = random_baseline(y, rng, repeats=100, ks=(50,))
    n_pos, n_neg = 40, 360
    se_auc = np.sqrt((n_pos + n_neg + 1) / (12 * n_pos * n_neg)) / np.sqrt(100)
    assert abs(r.auc_roc - 0.5) <= 3 * se_auc
    prev = 0.1
    se_p = np.sqrt(prev * (1 - prev) / 50) / np.sqrt(100)
    assert abs(r.precision_at_k[50] - prev) <= 3 * se_p
    again = random_baseline(y, np.random.default_rng(0), repeats=100, ks=(50,))
    assert again == r


def test_scores_file_round_trip(tmp_path):
    vals = np.random.default_rng(1).standard_normal(20)
    path = tmp_path / "scores.csv"
    write_scores(path, np.arange(20) * 3, vals)
    ids, back = read_scores(path)
    assert ids.tolist() == list(range(0, 60, 3))
    assert back.tobytes() == vals.tobytes()
