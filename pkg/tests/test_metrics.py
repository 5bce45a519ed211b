import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ref_gains
from proxml.metrics import (
    PROPENSITY_PRESETS,
    EvalReport,
    coverage_at_k,
    evaluate,
    ideal_ranking,
    ndcg_at_k,
    normalized_gain,
    precision_at_k,
    propensities,
    psndcg_at_k,
    psp_at_k,
)


def test_propensity_examples():
    t = propensities([1], 0.55, 1.5, n_train=15539)
    assert t.p[0] == pytest.approx(1.0 / math.log(15539), rel=1e-12)
    assert t.p[0] == pytest.approx(0.10362, abs=1e-5)
    assert propensities([1e9], 0.55, 1.5, n_train=15539).p[0] >= 0.99
    p = propensities([1, 100], 0.55, 1.5, n_train=1000).p
    assert p[0] < p[1]


def test_propensity_edge_cases():
    assert np.all(propensities([0, 5], 0.55, 1.5, n_train=2).p == 1.0)
    with pytest.raises(ValueError):
        propensities([0, 3], 0.5, 0.0, n_train=100)
    with pytest.raises(ValueError):
        propensities([1], 0.0, 1.5, n_train=100)
    assert PROPENSITY_PRESETS["wikipedia"] == (0.5, 0.4)


def test_psp_examples():
    p = np.ones(5)
    assert psp_at_k([0, 1, 2], {0, 1, 2, 3}, p, 3) == 1.0
    assert psp_at_k([2], {2}, np.array([1, 1, 0.25]), 1) == 4.0
    assert psp_at_k([0, 1], {3}, p, 2) == 0.0


def test_psndcg_hand_case():
    p = np.array([1.0, 0.5, 0.25])
    value = psndcg_at_k([2, 0, 1], {1, 2}, p, 3)
    # hits at ranks 1 (1/p=4) and 3 (1/p=2): 4/1 + 2/2 = 5, over 1 + 1/log2(3)
    assert value == pytest.approx(5.0 / (1.0 + 1.0 / math.log2(3)), rel=1e-14)
    assert value == pytest.approx(3.065736, abs=1e-6)


def test_psndcg_perfect_with_unit_p():
    assert psndcg_at_k([0, 1, 2], {0, 1, 2, 3}, np.ones(4), 3) == pytest.approx(1.0, abs=1e-15)


def test_coverage_examples():
    p = np.array([1.0, 0.5])
    assert coverage_at_k([[0, 1]], [{0}], p, 1) == 1.0
    assert coverage_at_k([[1]], [{0}], p, 1) == 0.0
    assert coverage_at_k([[0], [0]], [{0}, {1}], p, 1) == pytest.approx(1.0 / 3.0, rel=1e-15)


def test_normalized_gain_examples():
    assert normalized_gain([1.0, 2.0], [1.0, 2.0]) == 100.0
    assert normalized_gain([0.0], [0.0]) is None
    with pytest.raises(ValueError):
        normalized_gain([1.0], [1.0, 2.0])


def test_empty_truth_handling():
    rep = evaluate([[0], [1]], [set(), {1}], np.ones(2), ks=(1,))
    assert rep.n_empty_truth == 1
    assert rep.precision[1] == 50.0
    assert rep.ndcg[1] == 100.0


def test_all_empty_truth_gives_none():
    rep = evaluate([[0]], [set()], np.ones(2), ks=(1,))
    assert rep.psp[1] is None and rep.ndcg[1] is None


@st.composite
def cases(draw, max_labels=5):
    L = draw(st.integers(1, max_labels))
    y = np.array(draw(st.lists(st.booleans(), min_size=L, max_size=L)), dtype=int)
    p = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=L, max_size=L)))
    k = draw(st.integers(1, L))
    return L, y, p, k


def check_against_enumeration(L, y, p, k):
    inv = 1.0 / p
    truth = set(np.flatnonzero(y).tolist())
    orders = list(permutations(range(L)))
    refs = np.array([ref_gains(o, y, inv, k) for o in orders])
    best = refs.max(axis=0)
    for order, ref in zip(orders, refs):
        got = (precision_at_k(order, truth, k), psp_at_k(order, truth, p, k),
               ndcg_at_k(order, truth, k), psndcg_at_k(order, truth, p, k))
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-15)
        if truth:
            rep = evaluate([order], [truth], p, ks=(k,))
            np.testing.assert_allclose([rep.psp[k], rep.psndcg[k]],
                                       [100 * ref[1] / best[1], 100 * ref[3] / best[3]], rtol=1e-12)
    ideal = ideal_ranking(truth, p) + [l for l in range(L) if l not in truth]
    np.testing.assert_allclose(ref_gains(ideal, y, inv, k), best, rtol=1e-12, atol=1e-15)


@given(cases())
def test_metrics_match_enumeration(case):
    check_against_enumeration(*case)


@given(cases(max_labels=6), st.integers(0, 2**32 - 1))
def test_unit_propensity_collapse(case, seed):
    L, y, _, k = case
    order = np.random.default_rng(seed).permutation(L).tolist()
    truth = set(np.flatnonzero(y).tolist())
    one = np.ones(L)
    assert psp_at_k(order, truth, one, k) == precision_at_k(order, truth, k)
    assert psndcg_at_k(order, truth, one, k) == ndcg_at_k(order, truth, k)
    assert ndcg_at_k(order, truth, k) <= 1.0 + 1e-15
    assert precision_at_k(order, truth, k) <= 1.0


@given(cases(max_labels=6), st.integers(0, 2**32 - 1))
def test_psp1_equals_psndcg1(case, seed):
    L, y, p, _ = case
    order = np.random.default_rng(seed).permutation(L).tolist()
    truth = set(np.flatnonzero(y).tolist())
    if truth:
        assert psp_at_k(order, truth, p, 1) == pytest.approx(psndcg_at_k(order, truth, p, 1), rel=1e-15)


@given(cases(max_labels=6), st.integers(0, 2**32 - 1))
def test_permuting_below_k_changes_nothing(case, seed):
    L, y, p, k = case
    rng = np.random.default_rng(seed)
    order = rng.permutation(L).tolist()
    shuffled = order[:k] + rng.permutation(order[k:]).tolist()
    truth = set(np.flatnonzero(y).tolist())
    for f in (precision_at_k, ndcg_at_k):
        assert f(order, truth, k) == f(shuffled, truth, k)
    for f in (psp_at_k, psndcg_at_k):
        assert f(order, truth, p, k) == f(shuffled, truth, p, k)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_duplication_invariance(seed, copies):
    rng = np.random.default_rng(seed)
    L, M = 8, 6
    truths = [set(np.flatnonzero(rng.random(L) < 0.3).tolist()) for _ in range(M)]
    ranked = [rng.permutation(L).tolist() for _ in range(M)]
    p = rng.uniform(0.1, 1.0, L)
    a = evaluate(ranked, truths, p, ks=(1, 3, 5))
    b = evaluate(ranked * (copies + 1), truths * (copies + 1), p, ks=(1, 3, 5))
    for (_, _, va), (_, _, vb) in zip(a.rows(True), b.rows(True)):
        assert (va is None and vb is None) or va == pytest.approx(vb, rel=1e-12)


def test_report_csv_has_twelve_rows():
    import io
    rep = evaluate([[0, 1, 2, 3, 4]], [{0, 3}], np.full(5, 0.5), ks=(1, 3, 5))
    buf = io.StringIO()
    rep.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "metric,k,value" and len(lines) == 13
    assert isinstance(rep, EvalReport) and "propensity" in rep.table()
