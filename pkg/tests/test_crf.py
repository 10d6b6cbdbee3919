import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from censurv import (ExplanationSet, Outcome, PairwisePotentials, TimeGrid, brute_force_distribution,
                     grad_log_prob, log_prob_censored, log_prob_event, outcome_distribution,
                     outcome_scores, predicted_event_time, survival_curve)
from censurv.crf import explanation_csv, pair_counts, survival_curve_csv
from censurv.errors import DimMismatch, IndexOutOfRange, OracleScaleExceeded

E1 = math.exp(-1.0)


def two_interval():
    return np.array([1.0, 0.0]), ExplanationSet([[1.0, 0.0], [-1.0, 0.0]])


def three_interval_pairwise():
    pw = PairwisePotentials(0.1, -0.1, 0.2, enabled=True)
    return np.array([1.0]), ExplanationSet([[0.5], [-0.2], [0.3]], pw)


def random_instance(rng, m, d_x, pairwise, scale=1.0):
    th = rng.normal(size=(m, d_x)) * scale
    pw = PairwisePotentials(*rng.normal(size=3), enabled=True) if pairwise else PairwisePotentials()
    return rng.normal(size=d_x), ExplanationSet(th, pw)


def test_zero_theta_scores():
    e = ExplanationSet(np.zeros((2, 3)))
    np.testing.assert_array_equal(outcome_scores(np.ones(3), e), [0, 0, 0])


def test_single_interval_scores():
    e = ExplanationSet([[0.7]])
    np.testing.assert_allclose(outcome_scores([2.0], e), [1.4, 0.0])


def test_pairwise_scores_by_hand():
    x, e = three_interval_pairwise()
    # y = 111, 011, 001, 000 scored term by term
    hand = [0.6 + 2 * 0.2, 0.1 - 0.1 + 0.2, 0.3 + 0.1 - 0.1, 2 * 0.1]
    np.testing.assert_allclose(outcome_scores(x, e), hand, atol=1e-12)
    d = outcome_distribution(x, e)
    np.testing.assert_allclose(d.log_probs, brute_force_distribution(x, e).log_probs, atol=1e-12)


def test_pair_counts_hand_enumeration():
    np.testing.assert_array_equal(pair_counts(3), [[0, 0, 2], [0, 1, 1], [1, 1, 0], [2, 0, 0]])


def test_uniform_distribution():
    d = outcome_distribution(np.ones(2), ExplanationSet(np.zeros((4, 2))))
    np.testing.assert_allclose(d.probs, np.full(5, 0.2), atol=1e-15)


def test_logistic_case():
    d = outcome_distribution([1.0], ExplanationSet([[0.0]]))
    assert d.probs[0] == pytest.approx(0.5, abs=1e-15)
    a = 0.83
    assert log_prob_event([1.0], ExplanationSet([[a]]), 0) == pytest.approx(math.log(expit(a)), abs=1e-12)


def test_two_interval_instance():
    x, e = two_interval()
    np.testing.assert_allclose(outcome_scores(x, e), [0.0, -1.0, 0.0])
    p0 = 1.0 / (2.0 + E1)
    assert p0 == pytest.approx(0.42232, abs=5e-6)
    assert outcome_distribution(x, e).probs[0] == pytest.approx(p0, abs=1e-12)
    assert log_prob_event(x, e, 0) == pytest.approx(math.log(p0), abs=1e-12)
    assert log_prob_censored(x, e, 0) == pytest.approx(math.log((E1 + 1) / (2 + E1)), abs=1e-12)


def test_uniform_log_probs():
    x, e = np.ones(2), ExplanationSet(np.zeros((4, 2)))
    for k in range(4):
        assert log_prob_event(x, e, k) == pytest.approx(math.log(1 / 5), abs=1e-12)
    assert log_prob_censored(x, e, 1) == pytest.approx(math.log(3 / 5), abs=1e-12)
    assert log_prob_censored(x, e, 0) == pytest.approx(math.log(4 / 5), abs=1e-12)


def test_index_checks():
    x, e = two_interval()
    with pytest.raises(IndexOutOfRange):
        log_prob_event(x, e, 2)
    with pytest.raises(IndexOutOfRange):
        log_prob_censored(x, e, 2)
    with pytest.raises(IndexOutOfRange):
        grad_log_prob(x, e, Outcome(k=-1))
    with pytest.raises(DimMismatch):
        outcome_scores(np.ones(3), e)


def test_survival_curves():
    S = survival_curve(np.ones(2), ExplanationSet(np.zeros((4, 2))))
    np.testing.assert_allclose(S, [1, 0.8, 0.6, 0.4, 0.2], atol=1e-15)
    a = -0.4
    np.testing.assert_allclose(survival_curve([1.0], ExplanationSet([[a]])), [1, 1 - expit(a)], atol=1e-15)
    x, e = two_interval()
    p = brute_force_distribution(x, e).probs
    np.testing.assert_allclose(survival_curve(x, e), [1.0, p[1] + p[2], p[2]], atol=1e-12)


def test_uniform_gradient_closed_form():
    m, x = 4, np.array([1.0, 2.0])
    e = ExplanationSet(np.zeros((m, 2)))
    for k in range(m):
        _, g, _ = grad_log_prob(x, e, Outcome(k=k))
        t = np.arange(1, m + 1)
        np.testing.assert_allclose(g, np.outer((t > k) - t / (m + 1), x), atol=1e-12)
    # only k = m feasible: P(K < t | K = m) = 0 for t <= m
    _, g, _ = grad_log_prob(x, e, Outcome(censored_at=m - 1))
    t = np.arange(1, m + 1)
    np.testing.assert_allclose(g, np.outer(-t / (m + 1), x), atol=1e-12)


def _fd_check(x, e, outcome, h=1e-6):
    logp, g_th, g_w = grad_log_prob(x, e, outcome)

    def f(th, w):
        pw = PairwisePotentials(*w, enabled=True) if e.pairwise.enabled else PairwisePotentials()
        ee = ExplanationSet(th, pw)
        lo, hi = outcome.feasible(e.m)
        s = outcome_distribution(x, ee).log_probs
        return float(np.logaddexp.reduce(s[lo:hi + 1]))

    th0, w0 = np.array(e.thetas), e.pairwise.vector()
    assert f(th0, w0) == pytest.approx(logp, abs=1e-12)
    num = np.zeros_like(th0)
    for idx in np.ndindex(*th0.shape):
        a, b = th0.copy(), th0.copy()
        a[idx] += h
        b[idx] -= h
        num[idx] = (f(a, w0) - f(b, w0)) / (2 * h)
    rel = np.abs(num - g_th) / np.maximum(np.maximum(np.abs(num), np.abs(g_th)), 1e-4)
    assert rel.max() <= 1e-5
    if e.pairwise.enabled:
        numw = np.array([(f(th0, w0 + h * np.eye(3)[i]) - f(th0, w0 - h * np.eye(3)[i])) / (2 * h)
                         for i in range(3)])
        relw = np.abs(numw - g_w) / np.maximum(np.maximum(np.abs(numw), np.abs(g_w)), 1e-4)
        assert relw.max() <= 1e-5


@pytest.mark.parametrize("pairwise", [False, True])
def test_gradient_finite_differences(pairwise):
    rng = np.random.default_rng(5)
    x, e = random_instance(rng, 5, 3, pairwise)
    for outcome in [Outcome(k=0), Outcome(k=3), Outcome(k=4), Outcome(censored_at=0),
                    Outcome(censored_at=2), Outcome(censored_at=4)]:
        _fd_check(x, e, outcome)


@pytest.mark.parametrize("m", [1, 2, 5, 12])
def test_closed_form_matches_enumeration(m):
    rng = np.random.default_rng(m)
    for pairwise in (False, True):
        x, e = random_instance(rng, m, 3, pairwise)
        np.testing.assert_allclose(outcome_distribution(x, e).probs,
                                   brute_force_distribution(x, e).probs, atol=1e-10, rtol=0)


def test_oracle_uniform_and_guard():
    np.testing.assert_allclose(brute_force_distribution([1.0], ExplanationSet(np.zeros((6, 1)))).probs,
                               np.full(7, 1 / 7), atol=1e-14)
    with pytest.raises(OracleScaleExceeded):
        brute_force_distribution([1.0], ExplanationSet(np.zeros((21, 1))))


@settings(max_examples=60, deadline=None)
@given(m=st.integers(1, 200), seed=st.integers(0, 2**31 - 1), scale=st.floats(0.0, 10.0),
       pairwise=st.booleans())
def test_normalization(m, seed, scale, pairwise):
    rng = np.random.default_rng(seed)
    x, e = random_instance(rng, m, 4, pairwise)
    th = e.thetas / np.maximum(np.linalg.norm(e.thetas, axis=1, keepdims=True), 1e-12) * scale
    d = outcome_distribution(x, ExplanationSet(th, e.pairwise))
    assert abs(d.probs.sum() - 1.0) <= 1e-9
    S = survival_curve(x, ExplanationSet(th, e.pairwise))
    assert S[0] == 1.0 and np.all(np.diff(S) <= 0) and np.all(S >= 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), shift=st.floats(-5, 5), m=st.integers(1, 30))
def test_common_pairwise_shift_is_invisible(seed, shift, m):
    # every outcome has exactly m-1 adjacent pairs, so a common offset cancels
    rng = np.random.default_rng(seed)
    x, e = random_instance(rng, m, 2, True)
    moved = ExplanationSet(e.thetas, PairwisePotentials(*(e.pairwise.vector() + shift), enabled=True))
    np.testing.assert_allclose(outcome_distribution(x, moved).log_probs,
                               outcome_distribution(x, e).log_probs, atol=1e-9)


def test_censored_probability_is_feasible_sum():
    rng = np.random.default_rng(3)
    x, e = random_instance(rng, 7, 3, True)
    p = outcome_distribution(x, e).probs
    for j in range(7):
        assert math.exp(log_prob_censored(x, e, j)) == pytest.approx(p[j + 1:].sum(), abs=1e-12)


def test_predicted_event_time():
    assert predicted_event_time([1.0, 0.4], TimeGrid.uniform(1, 7.0)) == 3.5
    assert predicted_event_time(np.full(157, 0.9), TimeGrid.uniform(156, 7.0)) == 1088.5
    S = [1, 0.8, 0.6, 0.49, 0.3, 0.1]
    assert predicted_event_time(S, TimeGrid.uniform(5, 7.0)) == 17.5


def test_pairwise_disabled_rejects_weights():
    with pytest.raises(ValueError):
        PairwisePotentials(0.1, 0.0, 0.0, enabled=False)


def test_csv_formats():
    e = ExplanationSet([[0.5, -1.0], [0.25, 2.0]])
    text = explanation_csv(e, ["bias", "age"])
    lines = text.strip().split("\n")
    assert lines[0] == "feature,interval_1,interval_2"
    assert lines[2] == "age,-1.0,2.0"
    curve = survival_curve_csv([1.0, 0.5, 0.25], TimeGrid.uniform(2, 7.0)).strip().split("\n")
    assert curve == ["time_days,survival_prob", "0.0,1.0", "7.0,0.5", "14.0,0.25"]
