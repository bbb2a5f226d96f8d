import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from robustq.environments import build_coin_problem
from robustq.mdp import (AmbiguitySet, Categorical, DiscountedProblem, FiniteActionSpace,
                         FiniteStateSpace, StructureError, apply_H, apply_T, expect_target,
                         greedy_policy, robust_value_iteration, value_from_Q, worst_case_index)

from conftest import TRAINED_ROWS
from oracles import classical_value_iteration, robust_T_loops


def random_problem(rng, nx=5, na=3, n=1, alpha=0.9):
    k = rng.random((nx, na, n, nx))
    k /= k.sum(axis=-1, keepdims=True)
    return DiscountedProblem(FiniteStateSpace(range(nx)), FiniteActionSpace(range(na)),
                             rng.normal(size=(nx, na, nx)), AmbiguitySet(k), alpha)


def chain_problem(reward=1.0, alpha=0.9):
    # two states, one action, 0 -> 1 -> 1 deterministically, constant reward
    k = np.zeros((2, 1, 1, 2))
    k[0, 0, 0, 1] = k[1, 0, 0, 1] = 1.0
    return DiscountedProblem(FiniteStateSpace([0, 1]), FiniteActionSpace([0]),
                             np.full((2, 1, 2), reward), AmbiguitySet(k), alpha)


# --- domain types -----------------------------------------------------------

def test_state_space_index_round_trips():
    space = FiniteStateSpace([(0, 1), (1, 0), (1, 1)])
    for i in range(len(space)):
        assert space.index(space.label(i)) == i
    assert space.dim == 2


@pytest.mark.parametrize("labels", [[], [1, 1], [(1,), (1, 2)]])
def test_state_space_rejects_bad_labels(labels):
    with pytest.raises(StructureError):
        FiniteStateSpace(labels)


def test_action_space_values():
    assert FiniteActionSpace([-1, 0, 1]).values().tolist() == [-1, 0, 1]


def test_categorical_rejects_unnormalised():
    with pytest.raises(StructureError):
        Categorical([0.5, 0.5 + 1e-9])
    with pytest.raises(StructureError):
        Categorical([1.2, -0.2])
    Categorical([0.5, 0.5 + 1e-13])


def test_ambiguity_set_same_n_everywhere():
    with pytest.raises(StructureError):
        AmbiguitySet(np.ones((2, 1, 0, 2)))
    amb = AmbiguitySet.state_independent([[1, 0], [0.5, 0.5]], 2, 3)
    assert amb.n == 2 and amb.kernels.shape == (2, 3, 2, 2)
    assert [c.probs.tolist() for c in amb.at(1, 2)] == [[1, 0], [0.5, 0.5]]


def test_problem_rejects_bad_alpha():
    with pytest.raises(StructureError):
        chain_problem(alpha=1.0)
    with pytest.raises(StructureError):
        chain_problem(alpha=0.0)


# --- expect_target / worst_case_index ------------------------------------------

def test_expect_target_constant_reward(p1, rng):
    prob = DiscountedProblem(p1.states, p1.actions, np.ones_like(p1.rewards), p1.ambiguity, 0.95)
    dist = rng.random(11)
    dist /= dist.sum()
    assert expect_target(dist, np.zeros((11, 3)), 3, 1, prob) == pytest.approx(1.0, abs=1e-15)


def test_expect_target_point_mass(p1, rng):
    q = rng.normal(size=(11, 3))
    d = Categorical.point_mass(7, 11)
    assert expect_target(d, q, 2, 0, p1) == p1.rewards[2, 0, 7] + 0.95 * q[7].max()


def test_expect_target_coin_x2_bet_up(p1):
    # Bin(10, 0.5): P(X'>2) - P(X'<2) - P(X'=2) = (968 - 11 - 45) / 1024
    dist = p1.kernels[0, 0, 0]
    assert expect_target(dist, np.zeros((11, 3)), 2, 2, p1) == pytest.approx(912 / 1024, abs=1e-14)


def test_expect_target_dimension_mismatch(p1):
    with pytest.raises(StructureError):
        expect_target(np.ones(5) / 5, np.zeros((11, 3)), 0, 0, p1)


def test_worst_case_single_kernel():
    prob = build_coin_problem([0.5])
    k, v = worst_case_index(np.zeros((11, 3)), 4, 2, prob)
    assert k == 0
    assert v == expect_target(prob.kernels[4, 2, 0], np.zeros((11, 3)), 4, 2, prob)


def test_worst_case_tie_breaks_to_smallest():
    prob = build_coin_problem([0.4, 0.4, 0.4])
    assert worst_case_index(np.zeros((11, 3)), 5, 2, prob)[0] == 0


def test_worst_case_coin_p1_x5_bet_up(p1):
    # under Bin(10, .5) the bet loses 252/1024 on average; Bin(10, .6) favours it
    zero = np.zeros((11, 3))
    brute = [expect_target(p1.kernels[5, 2, k], zero, 5, 2, p1) for k in range(2)]
    assert brute[0] == pytest.approx(-252 / 1024, abs=1e-14)
    assert brute[1] > 0
    k, v = worst_case_index(zero, 5, 2, p1)
    assert (k, v) == (0, pytest.approx(-252 / 1024, abs=1e-14))


# --- operators --------------------------------------------------------------

def test_H_single_kernel_is_bellman_backup(rng):
    prob = random_problem(rng)
    q = rng.normal(size=(5, 3))
    ref = np.einsum("xay,xay->xa", prob.kernels[:, :, 0], prob.rewards + prob.alpha * q.max(1))
    np.testing.assert_allclose(apply_H(q, prob), ref, atol=1e-13)


def test_H_constant_q_zero_reward(p1):
    prob = DiscountedProblem(p1.states, p1.actions, np.zeros_like(p1.rewards), p1.ambiguity, 0.95)
    np.testing.assert_allclose(apply_H(np.full((11, 3), 3.0), prob), 0.95 * 3.0, atol=1e-14)


def test_H_does_not_modify_input(p1, rng):
    q = rng.normal(size=(11, 3))
    before = q.copy()
    apply_H(q, p1)
    assert np.array_equal(q, before)


@settings(max_examples=200, deadline=None)
@given(arrays(float, (11, 3), elements=st.floats(-10, 10)),
       arrays(float, (11, 3), elements=st.floats(-10, 10)))
def test_H_is_alpha_contraction(q1, q2):
    prob = build_coin_problem([0.5, 0.6])
    lhs = np.max(np.abs(apply_H(q1, prob) - apply_H(q2, prob)))
    assert lhs <= 0.95 * np.max(np.abs(q1 - q2)) + 1e-12


def test_T_matches_loop_oracle(p2, rng):
    v = rng.normal(size=11)
    np.testing.assert_allclose(apply_T(v, p2), robust_T_loops(v, p2.kernels, p2.rewards, 0.95),
                               atol=1e-12)


# --- value iteration ----------------------------------------------------------

def test_vi_zero_reward_gives_zero(p1):
    prob = DiscountedProblem(p1.states, p1.actions, np.zeros_like(p1.rewards), p1.ambiguity, 0.95)
    res = robust_value_iteration(prob)
    assert res.converged and res.iterations == 0
    assert np.all(res.q == 0)


def test_vi_geometric_chain():
    res = robust_value_iteration(chain_problem(reward=2.0, alpha=0.9), tol=1e-12)
    np.testing.assert_allclose(res.q[:, 0], 2.0 / (1 - 0.9), atol=1e-10)


def test_vi_golden_p1(p1):
    res = robust_value_iteration(p1, tol=1e-10)
    golden = np.loadtxt("tests/data/qstar_p1.csv", delimiter=",")
    assert res.converged and res.residual <= 1e-10
    np.testing.assert_allclose(res.q, golden, atol=1e-9)
    np.testing.assert_allclose(apply_H(res.q, p1), res.q, atol=1e-10)


def test_vi_residual_envelope(p2):
    res = robust_value_iteration(p2, tol=1e-10)
    r = np.array(res.residuals)
    k = np.arange(len(r))
    assert np.all(r <= 0.95**k * r[0] * (1 + 1e-9) / (1 - 0.95))


def test_vi_flags_non_convergence(p1, caplog):
    res = robust_value_iteration(p1, tol=1e-10, max_iter=5)
    assert not res.converged and res.iterations == 5 and res.residual > 1e-10
    assert "stopped after" in caplog.text


def test_vi_matches_classical_when_n_is_1(rng):
    for _ in range(3):
        prob = random_problem(rng)
        ours = robust_value_iteration(prob, tol=1e-12).q
        ref = classical_value_iteration(prob.kernels[:, :, 0].tolist(), prob.rewards.tolist(),
                                        prob.alpha)
        np.testing.assert_allclose(ours, ref, atol=1e-10)


# --- policy / value helpers ---------------------------------------------------

def test_greedy_policy_dominant_column():
    q = np.zeros((4, 3))
    q[:, 1] = 1
    assert greedy_policy(q).tolist() == [1] * 4
    assert greedy_policy(np.zeros((4, 3))).tolist() == [0] * 4


def test_greedy_policy_p1_matches_trained_row(p1, qstar_p1):
    assert tuple(p1.actions.values()[greedy_policy(qstar_p1)]) == TRAINED_ROWS["P1"]


def test_value_from_q():
    assert value_from_Q(np.full((3, 2), 4.0)).tolist() == [4.0] * 3
    col = np.array([[1.0], [2.0]])
    assert value_from_Q(col).tolist() == [1.0, 2.0]


def test_value_from_qstar_is_T_fixed_point(p1, qstar_p1):
    v = value_from_Q(qstar_p1)
    np.testing.assert_allclose(robust_T_loops(v, p1.kernels, p1.rewards, 0.95), v, atol=1e-9)
