"""Successor networks for the continuous maze.

Each context owns a tanh MLP whose output is split into one linear head per
action, ``m(s, a) ~ M(s, a, :)``, plus a frozen target copy. Everything is
plain numpy: forward/backward passes, inverted dropout on hidden layers and
RMSprop.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numba
import numpy as np

from .agents import alpha_cr_schedule, apply_exploration_offset, epsilon_schedule
from .core import N_ACTIONS, ConfigError, RngStreams, Transition, categorical
from .crfilter import CRWindow, ParticleFilter, bsr2_episode_update, cr_map_update
from .replay import EpisodeBuffer
from .sr import greedy, reward_weight_update

# ------------------------------------------------------------------ network


def glorot_init(shape, rng):
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(d, hidden=(150,), n_actions=N_ACTIONS, rng=None):
    """Weights [W1, b1, ..., Wout, bout]; biases start at zero."""
    rng = rng if rng is not None else np.random.default_rng()
    sizes = [d, *hidden, n_actions * d]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        params.append(glorot_init((fan_in, fan_out), rng))
        params.append(np.zeros(fan_out))
    return params


def copy_params(params):
    return [p.copy() for p in params]


def dropout_masks(params, batch, rate, rng):
    """Inverted-dropout masks for each hidden layer (kept units scaled by 1/(1-rate))."""
    if rate <= 0:
        return None
    masks = []
    for W in params[0:-2:2]:
        keep = rng.random((batch, W.shape[1])) >= rate
        masks.append(keep / (1.0 - rate))
    return masks


def forward(params, x, masks=None):
    """All heads for a batch: returns (outputs (B, A, d), cache for backward)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    inputs, tanhs = [x], []
    h = x
    n_hidden = len(params) // 2 - 1
    for layer in range(n_hidden):
        t = np.tanh(h @ params[2 * layer] + params[2 * layer + 1])
        tanhs.append(t)
        h = t * masks[layer] if masks is not None else t
        inputs.append(h)
    out = h @ params[-2] + params[-1]
    return out.reshape(len(x), -1, x.shape[1]), (inputs, tanhs, masks)


def head(params, x, a, masks=None):
    """m(s, a) for a batch of states and per-row actions."""
    out, _ = forward(params, x, masks)
    return out[np.arange(len(out)), np.asarray(a)]


def backward(params, cache, grad_out):
    """Gradients of a scalar loss given dL/d(outputs) shaped (B, A, d)."""
    inputs, tanhs, masks = cache
    g = grad_out.reshape(len(grad_out), -1)
    grads = [None] * len(params)
    grads[-2] = inputs[-1].T @ g
    grads[-1] = g.sum(axis=0)
    for layer in range(len(tanhs) - 1, -1, -1):
        g = g @ params[2 * layer + 2].T
        if masks is not None:
            g = g * masks[layer]
        g = g * (1.0 - tanhs[layer] ** 2)
        grads[2 * layer] = inputs[layer].T @ g
        grads[2 * layer + 1] = g.sum(axis=0)
    return grads


def td_loss_grad(params, target_params, s, a, s_next, w, gamma, masks=None):
    """Mean over the batch of 0.5 ||phi(s') + gamma m-(s', a') - m(s, a)||^2 and its gradient.

    The bootstrap action a' is greedy on the target network under ``w``; the
    target is held fixed (no gradient through it).
    """
    s = np.atleast_2d(s)
    s_next = np.atleast_2d(s_next)
    a = np.atleast_1d(a)
    nxt, _ = forward(target_params, s_next)
    a_star = np.argmax(nxt @ w, axis=1)
    y = s_next + gamma * nxt[np.arange(len(s)), a_star]
    out, cache = forward(params, s, masks)
    rows = np.arange(len(s))
    err = out[rows, a] - y
    B = len(s)
    loss = 0.5 * float((err ** 2).sum()) / B
    g = np.zeros_like(out)
    g[rows, a] = err / B
    return loss, backward(params, cache, g)


@numba.njit(cache=True)
def _rmsprop_kernel(p, g, v, lr, decay, eps):
    for j in range(p.shape[0]):
        v[j] = decay * v[j] + (1.0 - decay) * g[j] * g[j]
        p[j] -= lr * g[j] / (math.sqrt(v[j]) + eps)


class RMSProp:
    """v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)."""

    def __init__(self, params, lr, decay=0.9, eps=1e-8):
        self.lr, self.decay, self.eps = lr, decay, eps
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.v):
            _rmsprop_kernel(p.reshape(-1), np.ascontiguousarray(g).reshape(-1), v.reshape(-1),
                            self.lr, self.decay, self.eps)
        return params


def nn_td_update(params, target_params, opt, s, a, s_next, w, gamma, masks=None):
    """One optimizer step on a minibatch of successor TD errors; returns the loss."""
    loss, grads = td_loss_grad(params, target_params, s, a, s_next, w, gamma, masks)
    opt.step(params, grads)
    return loss


def sync_target(params, target_params):
    for p, t in zip(params, target_params):
        t[...] = p
    return target_params


def episode_end_w_pass(features, rewards, w, alpha_w):
    """Replay the episode once more through the reward-weight delta rule, in order."""
    for phi, r in zip(features, rewards):
        reward_weight_update(w, phi, r, alpha_w)
    return w


# ---------------------------------------------------------------- checkpoint
#
# Layout (little endian): 8-byte magic b"SRNET\x00\x01\x00", uint32 array count,
# then per array a uint32 ndim, ndim uint32 dims and the float64 data (C order).

_MAGIC = b"SRNET\x00\x01\x00"


def save_checkpoint(path, arrays):
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            arr = np.asarray(arr, dtype="<f8", order="C")
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    return path


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise ValueError("not a successor-network checkpoint")
    (n,), pos = struct.unpack_from("<I", data, 8), 12
    arrays = []
    for _ in range(n):
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(data, "<f8", size, pos).reshape(shape).copy())
        pos += 8 * size
    return arrays


# -------------------------------------------------------------------- agent


class NeuralAgent:
    """Function-approximation counterpart of :class:`bsr.agents.TabularAgent`.

    Supports BSR/BSR2, SSR/SSRplus, EW, KQ and GPI on environments whose states
    are feature vectors. The acting network is sampled from ``omega``; the
    direct and replay updates go to the most likely network (or the sampled
    one, per ``update_policy``).
    """

    def __init__(self, cfg, env, rng: RngStreams):
        if cfg.agent == "GSR":
            raise ConfigError("GSR has no function-approximation variant")
        self.cfg, self.env, self.rng = cfg, env, rng
        self.kind = cfg.agent
        self.k = 1 if self.kind in ("SSR", "SSRplus") else cfg.k
        self.d = env.d
        self.gamma = cfg.gamma
        self.nets = [init_params(self.d, cfg.hidden, N_ACTIONS, rng.nn) for _ in range(self.k)]
        self.targets = [copy_params(p) for p in self.nets]
        self.opts = [RMSProp(p, cfg.alpha_sr, cfg.rms_decay, cfg.rms_eps) for p in self.nets]
        self.w = cfg.init_scale * rng.init.standard_normal((self.k, self.d))
        self.w_cr_fixed = np.zeros((self.k, self.d))
        self.omega = np.full(self.k, 1.0 / self.k)
        self.buffer = EpisodeBuffer(self.k, cfg.buffer_episodes)
        self.offset = cfg.offset
        if self.kind == "SSRplus" and self.offset == "none":
            self.offset = "constant"
        self.filter = None
        if self.kind in ("BSR", "BSR2") and self.k > 1:
            self.filter = ParticleFilter(self.k, self.d, cfg.n_particles, cfg.particle_window,
                                         cfg.alpha_dp, cfg.sigma_cr, rng.particles, cfg.resampling,
                                         init_scale=cfg.init_scale, init_rng=rng.init)
            self.omega = self.filter.omega.copy()
        self.crwin = CRWindow(cfg.gamma, cfg.filter_delay, normalize=False)
        self.tie_rng = rng.action if cfg.action_ties == "random" else None
        self.reacts_to_signals = self.kind == "GPI"
        self.active = 0
        self.used = [0]
        if self.kind == "GPI":
            self.omega = np.eye(self.k)[0]
            self.w[:] = self.w[0]
        self.episode = -1
        self.context = 0
        self.t = 0
        self.losses = []

    @property
    def w_cr(self):
        return self.filter.w_cr if self.filter is not None else self.w_cr_fixed

    def phi(self, s):
        return s

    def q(self, i, s, w):
        out, _ = forward(self.nets[i], s)
        return out[0] @ w

    # ---------------------------------------------------------- episode
    def begin_episode(self, s0):
        self.episode += 1
        cfg = self.cfg
        self.epsilon = epsilon_schedule(self.episode, cfg.epsilon, cfg.epsilon_anneal_episodes)
        self.alpha_cr = alpha_cr_schedule(self.episode, cfg.alpha_cr, cfg.alpha_cr_final,
                                          cfg.alpha_cr_episodes)
        if self.kind == "KQ":
            self.omega = np.eye(self.k)[self.env.oracle_context() % self.k]
        self.crwin.reset(s0)
        self.buffer.start_episode()
        self.t = 0
        self.ep_feats, self.ep_rewards, self.ep_obs = [], [], []
        if cfg.offset_per_episode:
            apply_exploration_offset(self.w, self.w_cr, cfg.c_ws, cfg.alpha_ws, self.offset)

    def task_change(self):
        if self.kind != "GPI":
            raise ConfigError("only GPI reacts to task-change signals")
        if len(self.used) < self.k:
            nxt = len(self.used)
            self.used.append(nxt)
        else:
            nxt = int(self.rng.context.integers(self.k))
        self.nets[nxt] = init_params(self.d, self.cfg.hidden, N_ACTIONS, self.rng.nn)
        self.targets[nxt] = copy_params(self.nets[nxt])
        self.opts[nxt] = RMSProp(self.nets[nxt], self.cfg.alpha_sr, self.cfg.rms_decay,
                                 self.cfg.rms_eps)
        self.buffer.clear(nxt)
        if self.cfg.gpi_reward_mode == "stored":
            # the map about to be left keeps its reward weights; the new one starts from them
            self.w[nxt] = self.w[self.active]
        self.active = nxt
        self.omega = np.eye(self.k)[nxt]

    def _gpi_w(self):
        return self.w[self.active]

    def act(self, s, mask=()):
        cfg = self.cfg
        if self.t % cfg.sync_every == 0:
            for p, tgt in zip(self.nets, self.targets):
                sync_target(p, tgt)
        if self.kind == "GPI":
            self.context = self.active
        elif self.k == 1:
            self.context = 0
        else:
            self.context = categorical(self.omega, self.rng.context)
        if not cfg.offset_per_episode:
            apply_exploration_offset(self.w, self.w_cr, cfg.c_ws, cfg.alpha_ws, self.offset)
        if self.rng.action.random() < self.epsilon:
            a = int(self.rng.action.integers(N_ACTIONS))
        elif self.kind == "GPI":
            w = self._gpi_w()
            q = np.array([self.q(i, s, w) for i in self.used])
            a = greedy(q.max(axis=0), self.tie_rng)
        else:
            a = greedy(self.q(self.context, s, self.w[self.context]), self.tie_rng)
        return a

    def _update_index(self):
        if self.kind == "GPI":
            return self.active
        if self.cfg.update_policy == "sampled":
            return self.context
        return int(np.argmax(self.omega))

    def observe(self, s, a, s2, r):
        cfg = self.cfg
        self.t += 1
        self.buffer.push(Transition(s, a, s2, r, self.context))
        if self.kind == "GPI" and cfg.gpi_reward_mode == "stored":
            reward_weight_update(self.w[self.active], s2, r, cfg.alpha_w)
        else:
            reward_weight_update(self.w, s2, r, cfg.alpha_w)
        self.ep_feats.append(s2)
        self.ep_rewards.append(r)
        i = self._update_index()
        w = self._gpi_w() if self.kind == "GPI" else self.w[i]
        self._train(i, [s], [a], [s2], w)
        if cfg.replay_batch > 0:
            batch = self.buffer.sample_minibatch(i, cfg.replay_batch, self.rng.replay)
            if batch:
                self._train(i, [t.s for t in batch], [t.a for t in batch],
                            [t.s_next for t in batch], w)
        self._filter(self.crwin.record(s2, r))

    def _train(self, i, s, a, s2, w):
        masks = dropout_masks(self.nets[i], len(s), self.cfg.dropout, self.rng.nn)
        loss = nn_td_update(self.nets[i], self.targets[i], self.opts[i], np.asarray(s),
                            np.asarray(a), np.asarray(s2), w, self.gamma, masks)
        self.losses.append(loss)

    def end_episode(self):
        self._filter(self.crwin.flush())
        if self.kind == "GPI" and self.cfg.gpi_reward_mode == "stored":
            episode_end_w_pass(self.ep_feats, self.ep_rewards, self.w[self.active], self.cfg.alpha_w)
        else:
            episode_end_w_pass(self.ep_feats, self.ep_rewards, self.w, self.cfg.alpha_w)
        if self.kind == "BSR2" and self.filter is not None:
            bsr2_episode_update(self.filter.w_cr, self.ep_obs, self.omega, self.alpha_cr)

    def _filter(self, obs):
        if self.filter is None or not obs:
            return
        winners = self.filter.update(obs)
        self.omega = self.filter.omega.copy()
        if self.kind == "BSR":
            for (phi, v), i in zip(obs, winners):
                cr_map_update(self.filter.w_cr[i], phi, v, self.alpha_cr)
        else:
            self.ep_obs.extend(obs)

    def parameters(self):
        """Flat list of every array that defines the agent's learned state."""
        out = [p for net in self.nets for p in net] + [self.w, self.w_cr, self.omega]
        return out


# --------------------------------------------------------------------- driver


def run_continuous(cfg, rng):
    """Run episodes on the continuous maze until ``cfg.n_steps`` steps are spent."""
    from .harness import RunArtifacts, _make_env, _record, run_episode
    from .agents import make_agent

    if cfg.n_steps <= 0:
        raise ConfigError("continuous runs need a positive n_steps budget")
    env = _make_env(cfg, rng)
    agent = make_agent(cfg, env, rng)
    art = RunArtifacts(cfg.to_dict())
    spent, ep = 0, 0
    while spent < cfg.n_steps:
        steps, ret = run_episode(env, agent, budget=cfg.n_steps - spent)
        spent += steps
        art.episodes.append(_record(agent, ep, steps, ret, changed=int(env.task_changed)))
        ep += 1
    art.totals = dict(total_steps=spent, total_return=float(sum(e["ret"] for e in art.episodes)),
                      n_episodes=len(art.episodes))
    return art
