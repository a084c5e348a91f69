import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from bsr.core import ConfigError
from bsr.envs import GridMaze
from bsr.sr import (analytic_sr, analytic_sr_state_action, greedy, q_values, reward_weight_update,
                    td_update, td_update_maps)

from conftest import series_sr

finite = st.floats(-50, 50, allow_nan=False)


# ---------------------------------------------------------------- q_values

def test_q_values_dot_product():
    M = np.zeros((1, 2, 2))
    M[0, 0] = [1, 0]
    M[0, 1] = [0, 1]
    assert q_values(M, 0, np.array([10.0, 0.0])).tolist() == [10, 0]
    assert q_values(M, 0, np.zeros(2)).tolist() == [0, 0]


def test_q_values_dimension_mismatch():
    with pytest.raises(ConfigError):
        q_values(np.zeros((2, 4, 3)), 0, np.zeros(4))


def test_q_values_on_analytic_chain():
    # two-state chain, every action moves uniformly at random
    P = np.full((2, 2), 0.5)
    T = np.repeat(P[:, None, :], 4, axis=1)
    pi = np.full((2, 4), 0.25)
    gamma = 0.9
    M = analytic_sr_state_action(T, pi, gamma)
    w = np.array([1.0, 0.0])
    # value of landing in 0 with prob 1/2 every step forever: 0.5 / (1 - 0.9)
    assert np.allclose(q_values(M, 0, w), 0.5 / (1 - gamma))


@given(arrays(float, (3, 4, 5), elements=finite), arrays(float, 5, elements=finite),
       st.floats(0.01, 100))
def test_q_linearity_and_greedy_scale_invariance(M, w, c):
    q = q_values(M, 1, w)
    assert np.allclose(q_values(M, 1, c * w), c * q, rtol=1e-9, atol=1e-6)
    assert greedy(q_values(M, 1, w)) == greedy(q_values(M, 1, w * 1.0))


def test_greedy_ties():
    assert greedy([1, 3, 3, 0]) == 1
    rng = np.random.default_rng(0)
    picks = {greedy([1, 3, 3, 0], rng) for _ in range(100)}
    assert picks == {1, 2}
    assert greedy([0, 5, 1], rng) == 1


# -------------------------------------------------------------- td_update

def test_td_update_from_zero():
    M = np.zeros((4, 4, 4))
    td_update(M, 0, 2, 3, np.zeros(4), 0.9, 0.5)
    assert np.array_equal(M[0, 2], [0, 0, 0, 0.5])
    M[0, 2] = 0
    assert not M.any()


def test_td_update_zero_rate_and_divisor():
    M = np.random.default_rng(1).random((3, 4, 3))
    before = M.copy()
    td_update(M, 0, 1, 2, np.ones(3), 0.9, 0.0)
    assert np.array_equal(M, before)
    a = np.zeros((3, 4, 3))
    b = np.zeros((3, 4, 3))
    td_update(a, 0, 0, 1, np.zeros(3), 0.9, 0.4, divisor=4)
    td_update(b, 0, 0, 1, np.zeros(3), 0.9, 0.1)
    assert np.array_equal(a, b)


@given(arrays(float, (4, 4, 4), elements=st.floats(-5, 5)), st.integers(0, 3), st.integers(0, 3),
       st.integers(0, 3))
def test_td_update_is_local(M, s, a, s2):
    before = M.copy()
    td_update(M, s, a, s2, np.ones(4), 0.9, 0.3)
    changed = np.argwhere(np.any(M != before, axis=-1))
    assert all((i, j) == (s, a) for i, j in changed)


def test_td_update_bootstraps_greedy_lowest_index():
    M = np.zeros((2, 4, 2))
    M[1, 1] = [0, 1]
    M[1, 3] = [0, 1]      # tie with action 1 under w
    M[1, 2] = [5, 0]      # ignored: w puts no weight on state 0
    td_update(M, 0, 0, 1, np.array([0.0, 1.0]), 0.5, 1.0)
    assert np.allclose(M[0, 0], [0, 1 + 0.5])


def test_td_update_ring_converges_to_series():
    # 3-state ring, uniform policy over "stay" and "advance"
    n, gamma = 3, 0.5
    T = np.zeros((n, 2, n))
    for s in range(n):
        T[s, 0, s] = 1
        T[s, 1, (s + 1) % n] = 1
    P = 0.5 * (T[:, 0] + T[:, 1])
    exact = series_sr(P, gamma)
    # expected update over the uniform policy is the on-policy state-state backup
    M = np.zeros((n, 1, n))
    for _ in range(3000):
        for s in range(n):
            for a in range(2):
                s2 = int(np.argmax(T[s, a]))
                td_update(M, s, 0, s2, np.zeros(n), gamma, 0.01)
    assert np.abs(M[:, 0] - exact).max() < 1e-2   # stochastic-approximation noise
    # deterministic expected backup reaches the fixed point tightly
    V = np.zeros((n, n))
    for _ in range(200):
        V = P @ (np.eye(n) + gamma * V)
    assert np.abs(V - exact).max() < 1e-3


@pytest.mark.parametrize("size", [2, 3, 4])
def test_td_fixed_point_on_frozen_policy_mazes(size):
    """Synchronous TD sweeps under a fixed deterministic policy reach the analytic map."""
    maze = GridMaze(np.zeros((size, size), dtype=bool))
    n, gamma = maze.n_states, 0.7
    T = maze.transition_tensor()
    policy = np.array([(s * 7 + 1) % 4 for s in range(n)])
    pi = np.eye(4)[policy]
    exact = analytic_sr_state_action(T, pi, gamma)
    M = np.zeros((n, 4, n))
    w = np.zeros(n)
    for _ in range(400):
        for s in range(n):
            for a in range(4):
                s2 = maze.move(s, a)
                # bootstrap on the frozen policy's action, not the greedy one
                target = np.eye(n)[s2] + gamma * M[s2, policy[s2]]
                M[s, a] += 0.5 * (target - M[s, a])
    assert np.abs(M - exact).max() < 1e-3
    # the library update with w chosen so the frozen policy is greedy gives the same fixed point
    M2 = np.zeros((n, 4, n))
    for _ in range(400):
        for s in range(n):
            for a in range(4):
                s2 = maze.move(s, a)
                td_update_frozen(M2, s, a, s2, gamma, 0.5, policy)
    assert np.abs(M2 - exact).max() < 1e-3


def td_update_frozen(M, s, a, s2, gamma, lr, policy):
    """Library update with the successor action forced through a one-row map copy."""
    # make policy[s2] the unique maximiser of view[0] @ w by planting a marker feature
    n = M.shape[-1]
    ext = np.zeros((M.shape[0], 4, n + 1))
    ext[..., :n] = M
    ext[s2, policy[s2], n] = 1.0
    w = np.zeros(n + 1)
    w[n] = 1.0
    td_update(ext, s, a, s2, w, gamma, lr, phi_next=np.append(np.eye(n)[s2], 0.0))
    M[s, a] = ext[s, a, :n]


def test_td_update_maps_matches_scalar_updates(rng):
    Ms = rng.random((3, 5, 4, 5))
    ws = rng.standard_normal((3, 5))
    ref = Ms.copy()
    idx = np.array([0, 2, 2, 1])
    s = np.array([0, 1, 2, 3])
    a = np.array([3, 2, 1, 0])
    s2 = np.array([1, 2, 3, 4])
    for i, x, y, z in zip(idx, s, a, s2):
        td_update(ref[i], x, y, z, ws[i], 0.9, 0.2)
    td_update_maps(Ms, idx, s, a, s2, ws, 0.9, 0.2)
    assert np.allclose(Ms, ref, atol=1e-14)


# -------------------------------------------------- reward_weight_update

def test_reward_weight_update_examples():
    w = np.zeros(4)
    reward_weight_update(w, np.eye(4)[2], 10.0, 1.0)
    assert w.tolist() == [0, 0, 10, 0]
    before = w.copy()
    reward_weight_update(w, np.eye(4)[2], 10.0, 0.7)
    assert np.array_equal(w, before)


def test_reward_weight_update_all_contexts():
    W = np.zeros((3, 4))
    reward_weight_update(W, np.eye(4)[1], 2.0, 0.5)
    assert np.allclose(W[:, 1], 1.0) and np.count_nonzero(W) == 3


def test_lms_on_rbf_features_converges():
    from bsr.envs import rbf_centers, rbf_embedding
    rng = np.random.default_rng(3)
    centers = rbf_centers()
    w_true = rng.standard_normal(len(centers))
    w = np.zeros(len(centers))
    errs = []
    for _ in range(10000):
        phi = rbf_embedding(rng.uniform(0, 3, 2), centers) * 10   # peak ~1.6
        r = phi @ w_true
        errs.append((r - phi @ w) ** 2)
        reward_weight_update(w, phi, r, 0.05)
    ma = np.convolve(errs, np.ones(1000) / 1000, mode="valid")[::1000]
    assert np.all(np.diff(ma) <= 1e-12)


# ------------------------------------------------------------ analytic_sr

def test_analytic_sr_examples():
    assert np.allclose(analytic_sr(np.eye(3), 0.5), 2 * np.eye(3))
    P = np.array([[0.2, 0.8], [0.6, 0.4]])
    assert np.allclose(analytic_sr(P, 0.0), P)
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(analytic_sr(flip, 0.5)[0], [2 / 3, 4 / 3])


def test_analytic_sr_matches_series(rng):
    P = rng.random((6, 6))
    P /= P.sum(axis=1, keepdims=True)
    assert np.allclose(analytic_sr(P, 0.8), series_sr(P, 0.8), atol=1e-10)


def test_analytic_sr_errors():
    with pytest.raises(ConfigError):
        analytic_sr(np.ones((2, 2)), 0.5)
    with pytest.raises(ConfigError):
        analytic_sr(np.eye(2), 1.0)


def test_analytic_row_sums():
    P = np.full((4, 4), 0.25)
    assert np.allclose(analytic_sr(P, 0.9).sum(axis=1), 1 / (1 - 0.9))
