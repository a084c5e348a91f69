"""Tabular agents: BSR/BSR2/GSR, SSR/SSR+, EW, KQ (known-context oracle) and GPI.

All agents share one interface driven by :mod:`bsr.harness`::

    agent.begin_episode(s0)
    a = agent.act(s, mask)          # mask: reward cells hidden from Q evaluation
    agent.observe(s, a, s_next, r)
    agent.end_episode()
    agent.task_change()             # only GPI reacts to explicit signals
"""

from __future__ import annotations

import numpy as np

from .core import N_ACTIONS, ConfigError, RunConfig, RngStreams, Transition, categorical
from .crfilter import CRWindow, GaussianParticleFilter, ParticleFilter, bsr2_episode_update, cr_map_update
from .envs import forage_value_mask
from .replay import ContextBuffer, replay_update
from .sr import greedy, td_update_maps


def epsilon_schedule(episode, target, anneal_episodes=250):
    """Linear anneal from 1 toward 0 that stops once it reaches ``target``."""
    if episode < 0:
        raise ConfigError("episode must be non-negative")
    if anneal_episodes <= 0:
        return target
    return max(target, 1.0 - episode / anneal_episodes)


def alpha_cr_schedule(episode, start=0.15, end=0.0, horizon=6000):
    """Linear anneal of the CR-map learning rate, constant after ``horizon``."""
    frac = min(max(episode, 0) / horizon, 1.0) if horizon > 0 else 1.0
    return start + (end - start) * frac


def apply_exploration_offset(w, w_cr, c_ws, alpha_ws, mode):
    """Shift every context's reward weights toward optimism, in place.

    ``constant`` adds alpha_ws * c_ws; ``constant+cr`` also adds alpha_ws * w_cr.
    """
    if mode == "none":
        return w
    if mode == "constant":
        w += alpha_ws * c_ws
    elif mode == "constant+cr":
        w += alpha_ws * (c_ws + w_cr)
    else:
        raise ConfigError(f"unknown offset mode {mode!r}")
    return w


def entropy(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


class TabularAgent:
    """Multiple successor maps selected by a belief ``omega`` over reward contexts.

    The ``kind`` decides where ``omega`` comes from: a CRP particle filter with
    shared CR maps (BSR, BSR2), per-particle Gaussian posteriors (GSR), a
    single map (SSR, SSRplus), uniform weights (EW) or an oracle (KQ).
    """

    def __init__(self, cfg: RunConfig, env, rng: RngStreams):
        self.cfg = cfg
        self.env = env
        self.rng = rng
        self.kind = cfg.agent
        self.k = 1 if self.kind in ("SSR", "SSRplus") else cfg.k
        self.n_states = env.n_states
        self.d = env.d
        self.gamma = cfg.gamma
        k, S, d = self.k, self.n_states, self.d
        self.M = np.zeros((k, S, N_ACTIONS, d))
        self.w = cfg.init_scale * rng.init.standard_normal((k, d))
        self.w_cr_fixed = np.zeros((k, d))
        self.omega = np.full(k, 1.0 / k)
        self.buffers = [ContextBuffer(i, cfg.buffer_capacity) for i in range(k)]
        self.offset = cfg.offset
        if self.kind == "SSRplus" and self.offset == "none":
            self.offset = "constant"
        self.filter = None
        if self.kind in ("BSR", "BSR2") and k > 1:
            self.filter = ParticleFilter(k, d, cfg.n_particles, cfg.particle_window, cfg.alpha_dp,
                                         cfg.sigma_cr, rng.particles, cfg.resampling,
                                         init_scale=cfg.init_scale, init_rng=rng.init)
        elif self.kind == "GSR":
            self.filter = GaussianParticleFilter(k, d, cfg.n_particles, cfg.particle_window,
                                                 cfg.alpha_dp, cfg.sigma_cr, rng.particles,
                                                 cfg.resampling, diagonal=env.tabular)
        if self.filter is not None:
            self.omega = self.filter.omega.copy()
        self.crwin = CRWindow(cfg.gamma, cfg.filter_delay, normalize=True)
        self.tie_rng = rng.action if cfg.action_ties == "random" else None
        self.episode = -1
        self.context = 0
        self.winner = 0
        self.episode_obs = []
        self.firing = None

    # ----------------------------------------------------------- helpers
    @property
    def w_cr(self):
        return self.filter.cr_maps() if self.filter is not None else self.w_cr_fixed

    def phi(self, s):
        return self.env.features(s)

    def sample_context(self):
        if self.k == 1:
            return 0
        return categorical(self.omega, self.rng.context)

    def most_likely(self):
        return int(np.argmax(self.omega))

    def maps_to_update(self):
        policy = self.cfg.update_policy
        if policy == "all":
            return np.arange(self.k)
        if policy == "most_likely":
            return np.array([self.most_likely()])
        return np.array([self.context])

    # ---------------------------------------------------------- episode
    def begin_episode(self, s0):
        self.episode += 1
        self.epsilon = epsilon_schedule(self.episode, self.cfg.epsilon, self.cfg.epsilon_anneal_episodes)
        self.alpha_cr = alpha_cr_schedule(self.episode, self.cfg.alpha_cr, self.cfg.alpha_cr_final,
                                          self.cfg.alpha_cr_episodes)
        if self.env.reward_known:
            self._provide_reward(self.env.reward_vector())
        if self.kind == "KQ":
            self.omega = np.zeros(self.k)
            self.omega[self.env.oracle_context() % self.k] = 1.0
        self.crwin.reset(s0)
        self.episode_obs = []
        if self.cfg.offset_per_episode:
            apply_exploration_offset(self.w, self.w_cr, self.cfg.c_ws, self.cfg.alpha_ws, self.offset)

    def _provide_reward(self, r):
        self.w[:] = r

    def task_change(self):
        raise ConfigError(f"{self.kind} does not react to task-change signals")

    def act(self, s, mask=()):
        self.context = i = self.sample_context()
        if not self.cfg.offset_per_episode:
            apply_exploration_offset(self.w, self.w_cr, self.cfg.c_ws, self.cfg.alpha_ws, self.offset)
        if self.rng.action.random() < self.epsilon:
            a = int(self.rng.action.integers(N_ACTIONS))
        else:
            a = greedy(self.M[i, s] @ forage_value_mask(self.w[i], mask), self.tie_rng)
        self.firing = (i, s, a)
        return a

    def observe(self, s, a, s2, r):
        self.buffers[self.context].push(Transition(s, a, s2, r, self.context))
        self.w[:, s2] += self.cfg.alpha_w * (r - self.w[:, s2])
        maps = self.maps_to_update()
        lr = self.cfg.alpha_sr / len(maps)
        td_update_maps(self.M, maps, s, a, s2, self.w, self.gamma, lr)
        if self.cfg.replay_batch > 0:
            replay_update(self.M, maps, self.buffers, self.cfg.replay_batch, self.w, self.gamma, lr,
                          self.rng.replay)
        self._filter(self.crwin.record(s2, r))

    def end_episode(self):
        self._filter(self.crwin.flush())
        if self.kind == "BSR2" and self.filter is not None:
            bsr2_episode_update(self.filter.w_cr, self.episode_obs, self.omega, self.alpha_cr)

    # -------------------------------------------------------- inference
    def _filter(self, obs):
        if self.filter is None or not obs:
            return
        feats = [(self.phi(s), v) for s, v in obs]
        winners = self.filter.update(feats)
        self.omega = self.filter.omega.copy()
        self.winner = winners[-1]
        if self.kind == "BSR":
            for (phi, v), i in zip(feats, winners):
                cr_map_update(self.filter.w_cr[i], phi, v, self.alpha_cr)
        elif self.kind == "BSR2":
            self.episode_obs.extend(feats)

    # --------------------------------------------------------- analysis
    def weighted_map(self):
        """sum_i omega_i M_i, the template population map."""
        return np.tensordot(self.omega, self.M, axes=1)

    def firing_map_index(self):
        return self.firing[0] if self.firing else 0

    def state_snapshot(self):
        parts = [self.M, self.w, self.omega]
        if self.filter is not None:
            parts += [self.filter.P, self.w_cr]
        return parts


class GPIAgent(TabularAgent):
    """Generalised policy improvement over up to ``k`` maps.

    Acts greedily on max_i max_a M_i(s, a) . w with the current reward weights.
    Each map bootstraps with its own reward weights: the current ones in
    ``shared`` mode, a snapshot frozen at the task change in ``stored`` mode.
    A signalled task change activates a free map or overwrites a random one.
    """

    reacts_to_signals = True

    def __init__(self, cfg, env, rng):
        super().__init__(cfg, env, rng)
        self.active = 0
        self.used = [0]
        self.w_cur = self.w[0].copy()
        self.omega = np.eye(self.k)[0]

    def begin_episode(self, s0):
        super().begin_episode(s0)
        self._sync_w()

    def _provide_reward(self, r):
        self.w_cur[:] = r

    def _sync_w(self):
        if self.cfg.gpi_reward_mode == "shared":
            self.w[:] = self.w_cur
        else:
            self.w[self.active] = self.w_cur

    def task_change(self):
        if len(self.used) < self.k:
            nxt = len(self.used)
            self.used.append(nxt)
        else:
            nxt = int(self.rng.context.integers(self.k))
        self.M[nxt] = 0.0
        self.buffers[nxt].clear()
        self.active = nxt
        self.omega = np.eye(self.k)[nxt]
        self._sync_w()

    def act(self, s, mask=()):
        self.context = self.active
        used = np.array(self.used)
        q = self.M[used, s] @ forage_value_mask(self.w_cur, mask)   # (n_used, A)
        if self.rng.action.random() < self.epsilon:
            a = int(self.rng.action.integers(N_ACTIONS))
        else:
            a = greedy(q.max(axis=0), self.tie_rng)
        self.firing = (int(used[np.argmax(q[:, a])]), s, a)
        return a

    def observe(self, s, a, s2, r):
        self.buffers[self.active].push(Transition(s, a, s2, r, self.active))
        self.w_cur[s2] += self.cfg.alpha_w * (r - self.w_cur[s2])
        self._sync_w()
        if self.cfg.update_policy == "all":
            maps = np.array(self.used)
        else:
            maps = np.array([self.active])
        lr = self.cfg.alpha_sr / len(maps)
        td_update_maps(self.M, maps, s, a, s2, self.w, self.gamma, lr)
        if self.cfg.replay_batch > 0:
            replay_update(self.M, maps, self.buffers, self.cfg.replay_batch, self.w, self.gamma, lr,
                          self.rng.replay)

    def end_episode(self):
        pass

    def firing_map_index(self):
        return self.firing[0] if self.firing else self.active


def make_agent(cfg: RunConfig, env, rng: RngStreams):
    if not env.tabular:
        from .neural import NeuralAgent
        return NeuralAgent(cfg, env, rng)
    if cfg.agent == "GPI":
        return GPIAgent(cfg, env, rng)
    return TabularAgent(cfg, env, rng)
