"""Per-context replay memories."""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import Transition
from .sr import td_update_maps


class ContextBuffer:
    """Fixed-capacity FIFO ring of transitions belonging to one context."""

    def __init__(self, context, capacity=300):
        self.context = context
        self.capacity = capacity
        self.s = np.zeros(capacity, dtype=np.int64)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.s_next = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        if t.context != self.context:
            raise ValueError(f"transition for context {t.context} pushed into buffer {self.context}")
        c = self.cursor
        self.s[c], self.a[c], self.s_next[c], self.r[c] = t.s, t.a, t.s_next, t.r
        self.cursor = (c + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def clear(self):
        self.size = 0
        self.cursor = 0

    def ordered(self):
        """Stored transitions oldest first."""
        start = self.cursor if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return [Transition(int(self.s[i]), int(self.a[i]), int(self.s_next[i]), float(self.r[i]),
                           self.context) for i in idx]

    def sample_indices(self, n, rng):
        """min(n, size) slot indices drawn uniformly with replacement."""
        m = min(n, self.size)
        if m == 0:
            return np.zeros(0, dtype=np.int64)
        return rng.integers(0, self.size, size=m)

    def sample_minibatch(self, n, rng):
        idx = self.sample_indices(n, rng)
        return [Transition(int(self.s[i]), int(self.a[i]), int(self.s_next[i]), float(self.r[i]),
                           self.context) for i in idx]


def sample_minibatch(buffer, n, rng):
    return buffer.sample_minibatch(n, rng)


def replay_update(Ms, maps, buffers, n, ws, gamma, lr, rng):
    """Replay ``n`` sampled transitions into each map from that map's own buffer.

    Map ``i`` replays from ``buffers[i]``; updates within a map are applied in
    sample order, maps are independent so their order is irrelevant.
    """
    mi, ss, aa, s2 = [], [], [], []
    for i in maps:
        buf = buffers[i]
        k = buf.sample_indices(n, rng)
        mi.append(np.full(len(k), i))
        ss.append(buf.s[k])
        aa.append(buf.a[k])
        s2.append(buf.s_next[k])
    if sum(len(x) for x in mi):
        td_update_maps(Ms, np.concatenate(mi), np.concatenate(ss), np.concatenate(aa),
                       np.concatenate(s2), ws, gamma, lr)
    return Ms


class EpisodeBuffer:
    """Replay memory whose eviction is by whole episodes, shared by all contexts.

    Equivalent to one buffer per context when the episode limit is common:
    transitions are labelled with the context they were collected under.
    """

    def __init__(self, k, max_episodes=200):
        self.k = k
        self.max_episodes = max_episodes
        self.episodes = deque()
        self._current = None

    def start_episode(self):
        self._current = [[] for _ in range(self.k)]
        self.episodes.append(self._current)
        while len(self.episodes) > self.max_episodes:
            self.episodes.popleft()

    def push(self, t: Transition):
        if self._current is None:
            self.start_episode()
        self._current[t.context].append(t)

    def size(self, context):
        return sum(len(ep[context]) for ep in self.episodes)

    def clear(self, context):
        for ep in self.episodes:
            ep[context].clear()

    def sample_minibatch(self, context, n, rng):
        sizes = np.array([len(ep[context]) for ep in self.episodes])
        total = int(sizes.sum())
        m = min(n, total)
        if m == 0:
            return []
        flat = rng.integers(0, total, size=m)
        ends = np.cumsum(sizes)
        out = []
        for f in flat:
            e = int(np.searchsorted(ends, f, side="right"))
            start = ends[e] - sizes[e]
            out.append(self.episodes[e][context][f - start])
        return out
