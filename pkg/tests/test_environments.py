from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robustq.environments import (BinomialSpec, MarketModelSpec, ReturnSeries, binomial_pmf,
                                  build_coin_problem, build_market_problem,
                                  build_wasserstein_proxy, coin_reward, empirical_frequencies,
                                  encode_market_states, market_probabilities, signs_from_prices,
                                  smooth_probabilities, wasserstein1_binomial, wasserstein_grid)
from robustq.mdp import StructureError

from oracles import (binomial_pmf_exact, binomial_pmf_scipy, coin_reward_ref, w1_scipy,
                     window_counts_bruteforce)

GRID = [round(0.05 * i, 2) for i in range(21)]


# --- binomial ---------------------------------------------------------------

def test_binomial_p0_point_mass():
    assert binomial_pmf(BinomialSpec(10, 0.0)).probs.tolist() == [1.0] + [0.0] * 10


def test_binomial_half_at_5():
    assert binomial_pmf(BinomialSpec(10, 0.5)).probs[5] == pytest.approx(252 / 1024, abs=1e-15)


def test_binomial_mean():
    p = binomial_pmf(BinomialSpec(10, 0.3)).probs
    assert np.arange(11) @ p == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("p", GRID)
def test_binomial_matches_exact_fractions(p):
    exact = [float(v) for v in binomial_pmf_exact(10, Fraction(p).limit_denominator(100))]
    np.testing.assert_allclose(binomial_pmf(BinomialSpec(10, p)).probs, exact, atol=1e-15)
    np.testing.assert_allclose(binomial_pmf(BinomialSpec(10, p)).probs,
                               binomial_pmf_scipy(10, p), atol=1e-14)


def test_binomial_spec_validation():
    with pytest.raises(StructureError):
        BinomialSpec(0, 0.5)
    with pytest.raises(StructureError):
        BinomialSpec(10, 1.5)


# --- coin toss ----------------------------------------------------------------

@pytest.mark.parametrize("x,a,y,expected", [(3, 1, 5, 1), (3, 1, 3, -1), (7, 0, 2, 0),
                                            (7, -1, 2, 1), (2, -1, 2, -1)])
def test_coin_reward(x, a, y, expected):
    assert coin_reward(x, a, y) == expected


def test_coin_reward_matches_formula_everywhere():
    for x in range(11):
        for a in (-1, 0, 1):
            for y in range(11):
                assert coin_reward(x, a, y) == coin_reward_ref(x, a, y)


@pytest.mark.parametrize("params", [[0.5, 0.6], [0.5, 0.3], [0.5]])
def test_build_coin_problem(params):
    prob = build_coin_problem(params)
    assert prob.n_kernels == len(params)
    assert prob.n_states == 11 and prob.actions.values().tolist() == [-1, 0, 1]
    for k, p in enumerate(params):
        np.testing.assert_allclose(prob.kernels[:, :, k], np.broadcast_to(
            binomial_pmf_scipy(10, p), (11, 3, 11)), atol=1e-14)
    # kernels are identical at every (x, a)
    assert np.all(prob.kernels == prob.kernels[0, 0])


def test_build_coin_problem_empty():
    with pytest.raises(StructureError):
        build_coin_problem([])


# --- Wasserstein --------------------------------------------------------------

def test_w1_identity():
    assert wasserstein1_binomial(0.37, 0.37) == 0.0


@pytest.mark.parametrize("q,expected", [(0.6, 1.0), (0.3, 2.0)])
def test_w1_reference_radii(q, expected):
    assert wasserstein1_binomial(0.5, q) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("p", GRID)
@pytest.mark.parametrize("q", GRID)
def test_w1_equals_mean_difference_on_grid(p, q):
    w = wasserstein1_binomial(p, q)
    assert w == pytest.approx(10 * abs(p - q), abs=1e-10)


@given(st.integers(0, 1000).map(lambda i: i / 1000), st.integers(0, 1000).map(lambda i: i / 1000))
def test_w1_matches_scipy(p, q):
    assert wasserstein1_binomial(p, q) == pytest.approx(w1_scipy(p, q), abs=1e-9)


def test_proxy_radius_zero():
    prob = build_wasserstein_proxy(0.5, 0.0)
    assert prob.n_kernels == 1
    np.testing.assert_allclose(prob.kernels[0, 0, 0], binomial_pmf_scipy(10, 0.5), atol=1e-14)


@pytest.mark.parametrize("radius,lo,hi", [(1, 0.40, 0.60), (2, 0.30, 0.70)])
def test_proxy_grid_members(radius, lo, hi):
    # brute force: every grid point with 10|p - 0.5| <= radius
    expected = [p for p in GRID if 10 * abs(p - 0.5) <= radius + 1e-9]
    got = wasserstein_grid(0.5, radius, 0.05)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got[0] == pytest.approx(lo) and got[-1] == pytest.approx(hi)
    assert build_wasserstein_proxy(0.5, radius).n_kernels == len(expected)


def test_proxy_symmetric_about_center():
    got = np.array(wasserstein_grid(0.5, 2, 0.05))
    np.testing.assert_allclose(np.sort(1.0 - got), got, atol=1e-12)


# --- market model -------------------------------------------------------------

def test_encode_states_small():
    assert list(encode_market_states(1)) == [(-1,), (1,)]
    assert list(encode_market_states(2)) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert len(encode_market_states(5)) == 32


def test_frequencies_constant_up_series():
    counts = empirical_frequencies(ReturnSeries([1, 1, 1]), 2)
    states = encode_market_states(2)
    for i, x in enumerate(states):
        if x[1:] == (1,):
            assert counts[i].tolist() == [0, 2]
        else:
            assert counts[i].tolist() == [0, 0]


def _check_against_bruteforce(signs, h):
    counts = empirical_frequencies(ReturnSeries(signs), h)
    brute = window_counts_bruteforce(signs, h)
    for i, x in enumerate(encode_market_states(h)):
        for j, nxt in enumerate((-1, 1)):
            assert counts[i, j] == brute.get(x[1:] + (nxt,), 0)
    # every state sharing pi(x) sees the same counts; each window is counted once per prefix
    assert counts.sum() == 2 * (len(signs) - h + 1)


def test_frequencies_alternating_series():
    signs = [(-1) ** j for j in range(11)]
    _check_against_bruteforce(signs, 5)
    brute = window_counts_bruteforce(signs, 5)
    assert brute == {(1, -1, 1, -1, 1): 4, (-1, 1, -1, 1, -1): 3}


@given(st.lists(st.sampled_from([-1, 1]), min_size=3, max_size=60), st.integers(1, 3))
def test_frequencies_match_bruteforce(signs, h):
    _check_against_bruteforce(signs, h)


def test_frequencies_constant_series_all_mass_on_one_window():
    counts = empirical_frequencies(ReturnSeries([-1] * 20), 3)
    states = list(encode_market_states(3))
    for i, x in enumerate(states):
        assert counts[i].tolist() == ([18, 0] if x[1:] == (-1, -1) else [0, 0])


def test_frequencies_short_series():
    with pytest.raises(StructureError):
        empirical_frequencies(ReturnSeries([1, -1]), 3)


def test_smoothing_empty_row_is_half():
    p = smooth_probabilities(np.array([[0, 0], [1, 3]]), 1e-6)
    assert p[0].tolist() == [0.5, 0.5]


def test_smoothing_vanishes():
    gamma = 1e-9
    p = smooth_probabilities(np.array([[1, 3]]), gamma)
    np.testing.assert_allclose(p[0], [0.25, 0.75], atol=gamma)


def test_smoothing_rows_sum_to_one():
    signs = [(-1) ** j for j in range(11)]
    p = smooth_probabilities(empirical_frequencies(ReturnSeries(signs), 5), 1e-6)
    assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12


def test_market_kernel_structure(rng):
    h = 3
    signs = rng.choice([-1, 1], size=200)
    probs = market_probabilities(ReturnSeries(signs), MarketModelSpec(h))
    prob = build_market_problem(probs, h)
    states = list(encode_market_states(h))
    for x, lab in enumerate(states):
        for a in range(3):
            k = prob.kernels[x, a, 0]
            support = np.flatnonzero(k)
            assert len(support) <= 2
            for y in support:
                assert states[y][:-1] == lab[1:]
                assert k[y] == probs[x, 0 if states[y][-1] < 0 else 1]


def test_market_reward_uses_newest_component():
    prob = build_market_problem(np.full((4, 2), 0.5), 2)
    states = list(encode_market_states(2))
    y = states.index((1, -1))
    assert prob.rewards[0, 2, y] == -1  # a = +1, newest sign -1
    assert prob.rewards[0, 0, y] == 1
    assert prob.rewards[3, 1, y] == 0


def test_market_ambiguity_has_one_kernel_per_table(rng):
    tables = [market_probabilities(ReturnSeries(rng.choice([-1, 1], 300)), MarketModelSpec(5))
              for _ in range(4)]
    prob = build_market_problem(tables, 5)
    assert prob.n_kernels == 4 and prob.n_states == 32


def test_signs_from_prices():
    assert signs_from_prices([100, 101, 99]).signs.tolist() == [1, -1]
    assert signs_from_prices([100, 100]).signs.tolist() == [1]
    assert signs_from_prices(np.arange(1, 50)).signs.tolist() == [1] * 48
    s = signs_from_prices([1, 2, 1], dates=["d0", "d1", "d2"])
    assert s.dates == ("d1", "d2")


@pytest.mark.parametrize("prices", [[100, 0, 5], [100], [1, -2]])
def test_signs_from_prices_rejects(prices):
    with pytest.raises(StructureError):
        signs_from_prices(prices)


def test_return_series_validation():
    with pytest.raises(StructureError):
        ReturnSeries([1, 0, -1])
    with pytest.raises(StructureError):
        ReturnSeries([])
