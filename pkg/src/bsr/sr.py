"""Tabular successor maps: Q-values, TD learning, reward-weight regression.

Shapes: a successor map ``M`` is ``(n_states, n_actions, d)``; a stack of maps
is ``(k, n_states, n_actions, d)``; reward weights are ``(d,)`` or ``(k, d)``.
"""

import numba
import numpy as np

from .core import ConfigError, one_hot


def q_values(M, s, w):
    """Q[a] = M(s, a, :) . w"""
    M = np.asarray(M)
    w = np.asarray(w)
    if M.shape[-1] != w.shape[-1]:
        raise ConfigError(f"feature dimension mismatch: map has {M.shape[-1]}, w has {w.shape[-1]}")
    return M[s] @ w


def greedy(q, rng=None):
    """Index of the largest entry; ties go to the lowest index unless ``rng`` is given,
    in which case one of the exactly equal maxima is drawn uniformly."""
    q = np.asarray(q)
    if rng is None:
        return int(np.argmax(q))
    best = np.flatnonzero(q == q.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def td_update(M, s, a, s_next, w, gamma, alpha_sr, divisor=1, phi_next=None):
    """One Bellman backup of row (s, a) in place; returns M.

    The greedy successor action is taken under ``w``; no terminal special case.
    """
    if phi_next is None:
        phi_next = one_hot(s_next, M.shape[-1])
    if M.shape[-1] != np.shape(w)[-1]:
        raise ConfigError("feature dimension mismatch between map and reward weights")
    a_star = greedy(M[s_next] @ w)
    M[s, a] += (alpha_sr / divisor) * (phi_next + gamma * M[s_next, a_star] - M[s, a])
    return M


@numba.njit(cache=True)
def _td_rows(Ms, idx, s, a, s_next, ws, gamma, lr):
    n_act, d = Ms.shape[2], Ms.shape[3]
    for n in range(idx.shape[0]):
        i, sn = idx[n], s_next[n]
        best, a_star = -np.inf, 0
        for b in range(n_act):
            q = 0.0
            for j in range(d):
                q += Ms[i, sn, b, j] * ws[i, j]
            if q > best:
                best, a_star = q, b
        row = Ms[i, s[n], a[n]]
        nxt = Ms[i, sn, a_star]
        for j in range(d):
            target = gamma * nxt[j]
            if j == sn:
                target += 1.0
            row[j] += lr * (target - row[j])


def td_update_maps(Ms, idx, s, a, s_next, ws, gamma, lr):
    """TD updates of one-hot successor maps, applied in order.

    ``idx`` lists map ids; ``s, a, s_next`` are scalars (same transition for
    every listed map) or arrays aligned with ``idx``.
    """
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    shape = idx.shape
    s = np.broadcast_to(np.asarray(s, dtype=np.int64), shape)
    a = np.broadcast_to(np.asarray(a, dtype=np.int64), shape)
    s_next = np.broadcast_to(np.asarray(s_next, dtype=np.int64), shape)
    _td_rows(Ms, idx, s, a, s_next, np.asarray(ws, dtype=float), float(gamma), float(lr))


def reward_weight_update(w, phi_next, r, alpha_w):
    """Delta rule w += alpha_w (r - phi.w) phi; accepts (d,) or (k, d) weights."""
    err = r - w @ phi_next
    w += alpha_w * np.multiply.outer(err, phi_next)
    return w


def analytic_sr(P, gamma):
    """State-state SR under a fixed policy, counting occupancy from the next step on.

    SR(s, :) = sum_k gamma^k P^{k+1}(s, :) = (I - gamma P)^{-1} P
    """
    P = np.asarray(P, dtype=float)
    if not np.allclose(P.sum(axis=1), 1.0):
        raise ConfigError("transition matrix rows must sum to 1")
    if gamma >= 1:
        raise ConfigError("analytic SR needs gamma < 1")
    n = P.shape[0]
    return np.linalg.solve(np.eye(n) - gamma * P, P)


def analytic_sr_state_action(T, pi, gamma):
    """Analytic state-action successor map M(s, a, s') for one-hot features.

    ``T[s, a, s']`` are transition probabilities and ``pi[s, a]`` the policy.
    M(s, a, :) = T(s, a, :) (I + gamma SR_pi) where SR_pi is :func:`analytic_sr`.
    """
    P = np.einsum("sa,sat->st", pi, T)
    return np.einsum("sat,tu->sau", T, np.eye(P.shape[0]) + gamma * analytic_sr(P, gamma))
