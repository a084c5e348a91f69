"""Convolved-reward (CR) observations and particle filtering over reward contexts.

Two filters share one driver:

* :class:`ParticleFilter` keeps a single set of CR maps (delta-rule weights)
  shared by all particles; the map to update is chosen by winner-take-all.
* :class:`GaussianParticleFilter` keeps a conjugate Gaussian posterior over every
  context's CR map inside every particle and weights particles with the
  posterior predictive.

Both propose context assignments from a Chinese-restaurant-process prior over
each particle's window of recent assignments, with the number of contexts
bounded by ``k``.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core import ConfigError

log = logging.getLogger(__name__)

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def cr_kernel(gamma, f):
    """Symmetric discount kernel [g^f, ..., g, 1, g, ..., g^f]."""
    if f < 1:
        raise ConfigError("filter delay must be positive")
    if not 0 < gamma <= 1:
        raise ConfigError("kernel discount must lie in (0, 1]")
    j = np.abs(np.arange(-f, f + 1))
    return float(gamma) ** j


def cr_value(rewards, mask, K, normalize=True):
    """Kernel-weighted reward around a state; ``None`` when nothing is observed.

    ``mask`` marks real steps (1) versus zero padding (0).
    """
    rewards = np.asarray(rewards, dtype=float)
    mask = np.asarray(mask, dtype=float)
    num = float((rewards * mask) @ K)
    if not normalize:
        return num
    den = float(mask @ K)
    if den == 0.0:
        return None
    return num / den


def crp_prior(counts, alpha):
    """Unbounded CRP predictive: (probabilities of existing tables, new-table probability)."""
    counts = np.asarray(counts, dtype=float)
    z = counts.sum() + alpha
    return counts / z, alpha / z


def crp_probabilities(counts, alpha):
    """CRP proposal over ``k`` bounded contexts, row-wise for a (n, k) count matrix.

    The new-table mass is split evenly between contexts absent from the row;
    if every context is present it is spread proportionally to the counts.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    unused = counts == 0
    n_unused = np.count_nonzero(unused, axis=1)[:, None]
    new_share = alpha / np.maximum(n_unused, 1)
    p = counts + unused * new_share
    return p / p.sum(axis=1, keepdims=True)


def crp_propose(counts, alpha, rng):
    """Sample a context id for one particle from its window counts."""
    p = crp_probabilities(counts, alpha)[0]
    return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))


def _sample_rows(p, rng):
    """One categorical draw per row of a probability matrix."""
    c = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])[:, None] * c[:, -1:]
    return np.minimum((c <= u).sum(axis=1), p.shape[1] - 1)


def log_likelihood(v, mean, sigma):
    return -0.5 * ((v - mean) / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI


def likelihood(v_cr, phi_s, w_cr, sigma_cr):
    """Normal density of ``v_cr`` with mean phi.w_cr and std ``sigma_cr``."""
    if sigma_cr <= 0:
        raise ConfigError("sigma_cr must be positive")
    return float(np.exp(log_likelihood(v_cr, float(np.dot(phi_s, w_cr)), sigma_cr)))


def normalize_log_weights(logw):
    """Normalised importance weights; uniform if nothing is finite."""
    m = np.max(logw)
    if not np.isfinite(m):
        log.warning("all particle likelihoods vanished; using uniform weights")
        return np.full(len(logw), 1.0 / len(logw))
    w = np.exp(logw - m)
    return w / w.sum()


def winner_take_all(contexts, weights, k):
    """Context with the largest summed normalised weight (lowest id on ties)."""
    return int(np.argmax(np.bincount(contexts, weights=weights, minlength=k)))


def cr_map_update(w_cr, phi_s, v_cr, alpha_cr):
    """Delta rule on one CR map, in place."""
    w_cr += alpha_cr * (v_cr - float(phi_s @ w_cr)) * phi_s
    return w_cr


def gsr_posterior_update(mean, cov, phi, v_cr, sigma_cr):
    """Conjugate update of a Gaussian CR-map posterior in information form.

    Sigma' = (Sigma^-1 + phi phi^T / s^2)^-1,  M' = Sigma' (Sigma^-1 M + phi v / s^2)
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    phi = np.asarray(phi, dtype=float)
    prec = np.linalg.inv(cov)
    prec_new = prec + np.outer(phi, phi) / sigma_cr**2
    cov_new = np.linalg.inv(prec_new)
    cov_new = 0.5 * (cov_new + cov_new.T)
    try:
        np.linalg.cholesky(cov_new)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError("posterior covariance is not positive definite") from exc
    mean_new = cov_new @ (prec @ mean + phi * v_cr / sigma_cr**2)
    return mean_new, cov_new


def gsr_predictive(mean, cov, phi, sigma_cr):
    """Posterior predictive (mean, variance) of a CR value at features ``phi``."""
    phi = np.asarray(phi, dtype=float)
    return float(phi @ mean), float(phi @ np.asarray(cov) @ phi + sigma_cr**2)


def bsr2_episode_update(w_cr, observations, omega, alpha_cr):
    """End-of-episode CR-map pass: every (phi, v) of the episode goes to argmax(omega)."""
    if not observations:
        return w_cr
    i = int(np.argmax(omega))
    for phi, v in observations:
        cr_map_update(w_cr[i], phi, v, alpha_cr)
    return w_cr


class CRWindow:
    """Collects per-episode rewards and emits CR observations ``f`` steps late.

    ``states[t]`` is the state after ``t`` steps; ``rewards[t]`` the reward for
    arriving in it (``rewards[0]`` is padding).
    """

    def __init__(self, gamma, f, normalize=True):
        self.f = f
        self.K = cr_kernel(gamma, f)
        self.normalize = normalize
        self.states = []
        self.rewards = []
        self.emitted = 0

    def reset(self, s0):
        self.states = [s0]
        self.rewards = [0.0]
        self.emitted = 0

    @property
    def t(self):
        return len(self.states) - 1

    def _value(self, tau):
        f, t = self.f, self.t
        idx = np.arange(tau - f, tau + f + 1)
        mask = ((idx >= 1) & (idx <= t)).astype(float)
        r = np.zeros(2 * f + 1)
        ok = mask > 0
        r[ok] = np.asarray(self.rewards)[idx[ok]]
        return cr_value(r, mask, self.K, self.normalize)

    def record(self, s_next, r):
        """Append a step; returns the list of (state, v_cr) that became ready."""
        self.states.append(s_next)
        self.rewards.append(float(r))
        out = []
        if self.t >= self.f:
            tau = self.t - self.f
            v = self._value(tau)
            self.emitted = tau + 1
            if v is not None:
                out.append((self.states[tau], v))
        return out

    def flush(self):
        """CR values of the trailing un-filtered states, zero-padded into the future."""
        out = []
        for tau in range(self.emitted, self.t + 1):
            v = self._value(tau)
            if v is not None:
                out.append((self.states[tau], v))
        self.emitted = self.t + 1
        return out


class ParticleFilter:
    """Particle filter over context assignments with shared delta-rule CR maps."""

    def __init__(self, k, d, n_particles=100, window=10, alpha_dp=2.0, sigma_cr=1.6,
                 rng=None, resampling="multinomial", init_scale=0.0, init_rng=None):
        if alpha_dp <= 0 or sigma_cr <= 0:
            raise ConfigError("alpha_dp and sigma_cr must be positive")
        self.k, self.d = k, d
        self.n, self.window = n_particles, window
        self.alpha_dp, self.sigma_cr = alpha_dp, sigma_cr
        self.rng = rng if rng is not None else np.random.default_rng()
        self.resampling = resampling
        self.omega = np.full(k, 1.0 / k)
        self.P = self.rng.integers(0, k, size=(n_particles, window))
        init_rng = init_rng if init_rng is not None else self.rng
        self.w_cr = init_scale * init_rng.standard_normal((k, d))

    # -- proposal ---------------------------------------------------------
    def counts(self):
        flat = self.P + self.k * np.arange(self.n)[:, None]
        return np.bincount(flat.ravel(), minlength=self.n * self.k).reshape(self.n, self.k)

    def propose(self):
        if self.k == 1:
            return np.zeros(self.n, dtype=int)
        return _sample_rows(crp_probabilities(self.counts(), self.alpha_dp), self.rng)

    # -- likelihood / per-particle state hooks ----------------------------
    def cr_means(self, phi):
        return self.w_cr @ phi

    def log_weights(self, props, phi, v):
        return log_likelihood(v, self.cr_means(phi), self.sigma_cr)[props]

    def _absorb(self, props, phi, v):
        pass

    def _reindex(self, idx):
        pass

    # -- driver -----------------------------------------------------------
    def _resample_index(self, w):
        if self.resampling == "systematic":
            u = (self.rng.random() + np.arange(self.n)) / self.n
        else:
            u = self.rng.random(self.n)
        return np.minimum(np.searchsorted(np.cumsum(w), u, side="right"), self.n - 1)

    def update(self, observations):
        """Filter one or more (phi, v_cr) observations jointly.

        Proposals are drawn sequentially per particle, the importance weight is
        the product of the likelihoods, and particles are resampled once.
        Returns the winner-take-all context for each observation.
        """
        if not observations:
            return []
        logw = np.zeros(self.n)
        all_props = []
        for phi, v in observations:
            props = self.propose()
            logw += self.log_weights(props, phi, v)
            self._absorb(props, phi, v)
            self.P = np.column_stack([self.P[:, 1:], props])
            all_props.append(props)
        what = normalize_log_weights(logw)
        self.weights = what
        self.omega = np.bincount(all_props[-1], weights=what, minlength=self.k)
        self.omega /= self.omega.sum()
        winners = [winner_take_all(p, what, self.k) for p in all_props]
        idx = self._resample_index(what)
        self.P = self.P[idx]
        self._reindex(idx)
        return winners

    def step(self, phi, v):
        """Single-observation filter step; returns (omega, winner)."""
        winner = self.update([(phi, v)])[0]
        return self.omega, winner

    def cr_maps(self):
        return self.w_cr


class GaussianParticleFilter(ParticleFilter):
    """Particle filter with a conjugate Gaussian posterior per (particle, context).

    ``diagonal=True`` stores only covariance diagonals, which is exact when
    features are one-hot and the prior covariance is diagonal.
    """

    def __init__(self, k, d, n_particles=100, window=10, alpha_dp=2.0, sigma_cr=1.6,
                 rng=None, resampling="multinomial", prior_var=1.0, diagonal=False):
        super().__init__(k, d, n_particles, window, alpha_dp, sigma_cr, rng, resampling)
        self.diagonal = diagonal
        self.mean = np.zeros((n_particles, k, d))
        if diagonal:
            self.cov = np.full((n_particles, k, d), float(prior_var))
        else:
            self.cov = np.broadcast_to(prior_var * np.eye(d), (n_particles, k, d, d)).copy()

    def _selected(self, props):
        rows = np.arange(self.n)
        return rows, self.mean[rows, props], self.cov[rows, props]

    def log_weights(self, props, phi, v):
        _, m, S = self._selected(props)
        mu = m @ phi
        if self.diagonal:
            var = S @ (phi * phi) + self.sigma_cr**2
        else:
            var = np.einsum("i,nij,j->n", phi, S, phi) + self.sigma_cr**2
        return -0.5 * (v - mu) ** 2 / var - 0.5 * np.log(var) - _LOG_SQRT_2PI

    def _absorb(self, props, phi, v):
        # rank-one (Sherman-Morrison) form of the information-form update
        rows, m, S = self._selected(props)
        if self.diagonal:
            Sphi = S * phi
        else:
            Sphi = S @ phi
        denom = self.sigma_cr**2 + Sphi @ phi
        resid = v - m @ phi
        self.mean[rows, props] = m + Sphi * (resid / denom)[:, None]
        if self.diagonal:
            self.cov[rows, props] = S - Sphi**2 / denom[:, None]
        else:
            self.cov[rows, props] = S - np.einsum("ni,nj->nij", Sphi, Sphi) / denom[:, None, None]

    def _reindex(self, idx):
        self.mean = self.mean[idx]
        self.cov = self.cov[idx]

    def cr_means(self, phi):
        return self.mean.mean(axis=0) @ phi

    def cr_maps(self):
        return self.mean.mean(axis=0)
