"""Task environments: grid maze, puddle world, continuous maze, foraging, Y-maze.

Grid states are flat indices ``row * width + col``. Every environment exposes
``reset()`` (start an episode, returns the start state), ``step(a)`` returning
``(s_next, r, done)``, ``features(s)`` and the flags ``task_changed`` /
``signalled`` describing the reward schedule at the last reset.
"""

from __future__ import annotations

import math
from collections import deque
from importlib import resources
from pathlib import Path

import numpy as np

from .core import DOWN, LEFT, N_ACTIONS, RIGHT, UP, ConfigError, one_hot

MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}
GOAL_REWARD = 10.0
PUDDLE_REWARD = -1.0


# ----------------------------------------------------------------- layouts

def read_layout(source, shape=None):
    """Parse an ASCII layout ('#' blocked, anything else free), rows top to bottom.

    ``source`` is a path, a shipped layout name (``maze8``, ``open8``,
    ``ymaze``) or the layout text itself. Returns ``(blocked, marks)`` where
    ``marks`` maps marker characters other than '.' and '#' to cell indices.
    """
    text = None
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        p = Path(source)
        if p.exists():
            text = p.read_text()
        else:
            try:
                text = resources.files("bsr.layouts").joinpath(f"{source}.txt").read_text()
            except FileNotFoundError:
                raise ConfigError(f"no layout named {source!r}") from None
    else:
        text = source
    rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ConfigError("layout rows have unequal length")
    if shape is not None and (len(rows), width) != tuple(shape):
        raise ConfigError(f"layout must be {shape[0]}x{shape[1]}, got {len(rows)}x{width}")
    blocked = np.array([[c == "#" for c in r] for r in rows])
    marks = {}
    for i, r in enumerate(rows):
        for j, c in enumerate(r):
            if c not in ".#":
                marks[c] = i * width + j
    return blocked, marks


def load_maze(source="maze8"):
    blocked, _ = read_layout(source, shape=(8, 8))
    return GridMaze(blocked)


class GridMaze:
    """Deterministic 4-connected grid; bumping into a wall leaves the agent in place."""

    def __init__(self, blocked):
        self.blocked = np.asarray(blocked, dtype=bool)
        self.height, self.width = self.blocked.shape
        self.n_states = self.height * self.width
        self.free = [s for s in range(self.n_states) if not self.blocked.flat[s]]
        self._next = np.array([[self._move(s, a) for a in range(N_ACTIONS)]
                               for s in range(self.n_states)])

    def rc(self, s):
        return divmod(int(s), self.width)

    def _move(self, s, a):
        r, c = self.rc(s)
        dr, dc = MOVES[a]
        r2, c2 = r + dr, c + dc
        if not (0 <= r2 < self.height and 0 <= c2 < self.width) or self.blocked[r2, c2]:
            return int(s)
        return r2 * self.width + c2

    def move(self, s, a):
        return int(self._next[s, a])

    def reachable(self, start):
        seen = {start}
        todo = deque([start])
        while todo:
            s = todo.popleft()
            for a in range(N_ACTIONS):
                s2 = self.move(s, a)
                if s2 not in seen:
                    seen.add(s2)
                    todo.append(s2)
        return seen

    def distances(self, goal):
        """Shortest path length from every cell to ``goal`` (inf if unreachable)."""
        dist = np.full(self.n_states, np.inf)
        dist[goal] = 0
        todo = deque([goal])
        while todo:
            s = todo.popleft()
            for s2 in range(self.n_states):
                if dist[s2] == np.inf and not self.blocked.flat[s2] and \
                        any(self.move(s2, a) == s for a in range(N_ACTIONS)):
                    dist[s2] = dist[s] + 1
                    todo.append(s2)
        return dist

    def transition_tensor(self):
        T = np.zeros((self.n_states, N_ACTIONS, self.n_states))
        for s in range(self.n_states):
            for a in range(N_ACTIONS):
                T[s, a, self.move(s, a)] = 1.0
        return T

    def quadrant(self, s):
        r, c = self.rc(s)
        return 2 * int(r >= self.height // 2) + int(c >= self.width // 2)

    def features(self, s):
        return one_hot(s, self.n_states)

    def render(self, marks=None):
        marks = marks or {}
        out = []
        for r in range(self.height):
            row = ""
            for c in range(self.width):
                s = r * self.width + c
                row += marks.get(s, "#" if self.blocked[r, c] else ".")
            out.append(row)
        return "\n".join(out)


def grid_step(maze, s, a, goal, puddles=frozenset()):
    """Pure one-step dynamics: (s_next, r, reached_goal)."""
    s2 = maze.move(s, a)
    r = 0.0
    if s2 in puddles:
        r += PUDDLE_REWARD
    if s2 == goal:
        return s2, r + GOAL_REWARD, True
    return s2, r, False


# ------------------------------------------------------------ grid tasks

class GridTask:
    """Navigation to a goal whose (start, goal) pair is resampled periodically.

    Experiment I: change every 20 episodes, signalled to every agent.
    Experiment II (``puddles=True``): change every 30 episodes, puddles fill the
    quadrant opposite the goal, changes signalled only to GPI-style agents.
    """

    tabular = True

    def __init__(self, maze, rng, change_every=20, puddles=False, max_steps=75,
                 reward_known=True):
        self.maze = maze
        self.rng = rng
        self.change_every = change_every
        self.with_puddles = puddles
        self.max_steps = max_steps
        self.reward_known = reward_known
        self.n_states = maze.n_states
        self.d = maze.n_states
        self.episode = -1
        self.goal = None
        self.start = None
        self.puddles = frozenset()
        self.task_changed = False
        self.signalled = False

    def features(self, s):
        return one_hot(s, self.d)

    def _new_task(self):
        free = self.maze.free
        while True:
            start, goal = self.rng.choice(free, size=2, replace=False)
            if goal in self.maze.reachable(int(start)):
                break
        self.start, self.goal = int(start), int(goal)
        if self.with_puddles:
            q = 3 - self.maze.quadrant(self.goal)
            self.puddles = frozenset(s for s in free if self.maze.quadrant(s) == q)
        else:
            self.puddles = frozenset()

    def reset(self):
        self.episode += 1
        self.task_changed = self.episode % self.change_every == 0
        if self.task_changed:
            self._new_task()
        self.signalled = self.task_changed
        self.s = self.start
        self.t = 0
        return self.s

    def step(self, a):
        s2, r, hit = grid_step(self.maze, self.s, a, self.goal, self.puddles)
        self.s = s2
        self.t += 1
        return s2, r, hit or self.t >= self.max_steps

    def reward_vector(self):
        w = np.zeros(self.d)
        for p in self.puddles:
            w[p] = PUDDLE_REWARD
        w[self.goal] += GOAL_REWARD
        return w

    def oracle_context(self):
        return self.maze.quadrant(self.goal)

    def value_mask(self):
        return ()


class ForageTask:
    """Open 8x8 maze with three reward cells per session; a trial ends when all
    three are collected or the step cap is reached."""

    tabular = True

    def __init__(self, maze, rng, trials_per_session=30, max_steps=75, n_rewards=3):
        self.maze = maze
        self.rng = rng
        self.trials_per_session = trials_per_session
        self.max_steps = max_steps
        self.n_rewards = n_rewards
        self.n_states = self.d = maze.n_states
        self.episode = -1
        self.rewards = ()
        self.collected = set()
        self.reward_known = False
        self.task_changed = False
        self.signalled = False

    def features(self, s):
        return one_hot(s, self.d)

    @property
    def session(self):
        return self.episode // self.trials_per_session

    @property
    def trial(self):
        return self.episode % self.trials_per_session

    def reset(self):
        self.episode += 1
        self.task_changed = self.trial == 0
        if self.task_changed:
            cells = self.rng.choice(self.maze.free, size=self.n_rewards, replace=False)
            self.rewards = tuple(int(c) for c in cells)
        self.signalled = self.task_changed
        self.collected = set()
        options = [s for s in self.maze.free if s not in self.rewards]
        self.s = int(self.rng.choice(options))
        self.t = 0
        return self.s

    def step(self, a):
        s2 = self.maze.move(self.s, a)
        r = 0.0
        if s2 in self.rewards and s2 not in self.collected:
            self.collected.add(s2)
            r = GOAL_REWARD
        self.s = s2
        self.t += 1
        done = len(self.collected) == self.n_rewards or self.t >= self.max_steps
        return s2, r, done

    def random_walk_step(self, s, rng):
        return self.maze.move(s, int(rng.integers(N_ACTIONS)))

    def value_mask(self):
        return tuple(self.collected)

    def reward_vector(self):
        w = np.zeros(self.d)
        w[list(self.rewards)] = GOAL_REWARD
        return w

    def oracle_context(self):
        return 0


def forage_value_mask(w, collected):
    """Copy of ``w`` with already-collected reward cells zeroed (for Q evaluation only)."""
    if not len(collected):
        return w
    out = np.array(w, dtype=float, copy=True)
    out[..., list(collected)] = 0.0
    return out


# ----------------------------------------------------------------- Y-maze

class YMaze:
    """Grid-world double Y-maze with three goal cells and four trial types.

    Trial types: 0 -> goal ``A``; 1 -> centre goal ``C`` with the right-hand
    route barred; 2 -> ``C`` with the left-hand route barred; 3 -> goal ``B``.
    Entering the top-right corner ``X`` lands the agent in ``C``; moving right
    from ``C`` leads to the cell below ``X``.
    """

    tabular = True
    TRIAL_GOALS = ("A", "C", "C", "B")

    def __init__(self, rng, layout="ymaze", max_steps=75):
        blocked, marks = read_layout(layout)
        self.maze = GridMaze(blocked)
        self.marks = marks
        self.rng = rng
        self.max_steps = max_steps
        self.n_states = self.d = self.maze.n_states
        w = self.maze.width
        self.C, self.X, self.S = marks["C"], marks["X"], marks["S"]
        self.below_X = self.X + w
        self.barriers = {1: self.below_X, 2: self.C + w}
        self.goals = {"A": marks["A"], "B": marks["B"], "C": self.C}
        self.trial_type = 0
        self.episode = -1
        self.reward_known = False
        self.task_changed = False
        self.signalled = False
        self._pending_change = True

    def features(self, s):
        return one_hot(s, self.d)

    @property
    def goal(self):
        return self.goals[self.TRIAL_GOALS[self.trial_type]]

    @property
    def barrier(self):
        return self.barriers.get(self.trial_type)

    def set_trial_type(self, tt):
        if tt != self.trial_type:
            self._pending_change = True
        self.trial_type = int(tt)

    def move(self, s, a):
        if s == self.C and a == RIGHT:
            s2 = self.below_X
        else:
            s2 = self.maze.move(s, a)
        if s2 == self.barrier:
            return s
        if s2 == self.X:
            return self.C
        return s2

    def reset(self):
        self.episode += 1
        self.task_changed = self._pending_change
        self.signalled = self.task_changed
        self._pending_change = False
        self.s = self.S
        self.t = 0
        return self.s

    def step(self, a):
        s2 = self.move(self.s, a)
        self.s = s2
        self.t += 1
        if s2 == self.goal:
            return s2, GOAL_REWARD, True
        return s2, 0.0, self.t >= self.max_steps

    def reward_vector(self):
        w = np.zeros(self.d)
        w[self.goal] = GOAL_REWARD
        return w

    def oracle_context(self):
        return "ACB".index(self.TRIAL_GOALS[self.trial_type])

    def value_mask(self):
        return ()


def ymaze_schedule(rng, n_blocks=24):
    """Trial-type order for the recorded blocks: each block visits all four
    types once, i.e. exactly three changes inside a block."""
    return [list(rng.permutation(4)) for _ in range(n_blocks)]


# ----------------------------------------------------------- continuous maze

def rbf_centers(L=3.0, n=10):
    g = (np.arange(n) + 0.5) * L / n
    xx, yy = np.meshgrid(g, g, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


def rbf_embedding(pos, centers, var=0.1, scale=10.0):
    """Gaussian bumps normalised as a 2-D density with variance ``var``, divided by ``scale``."""
    d2 = ((centers - np.asarray(pos)) ** 2).sum(axis=1)
    return np.exp(-d2 / (2 * var)) / (2 * math.pi * var * scale)


def segment_hits_box(p0, p1, lo, hi):
    """Whether the closed segment p0->p1 touches any closed axis-aligned box.

    Liang-Barsky clipping vectorised over boxes ``lo``/``hi`` of shape (n, 2).
    """
    d = p1 - p0
    t0 = np.zeros(len(lo))
    t1 = np.ones(len(lo))
    ok = np.ones(len(lo), dtype=bool)
    for ax in range(2):
        if d[ax] == 0.0:
            ok &= (p0[ax] >= lo[:, ax]) & (p0[ax] <= hi[:, ax])
        else:
            ta = (lo[:, ax] - p0[ax]) / d[ax]
            tb = (hi[:, ax] - p0[ax]) / d[ax]
            t0 = np.maximum(t0, np.minimum(ta, tb))
            t1 = np.minimum(t1, np.maximum(ta, tb))
    return bool(np.any(ok & (t0 <= t1)))


class ContinuousMaze:
    """Continuous copy of the 8x8 maze on a square of side ``L``.

    Positions use x to the right and y downward so that grid row r maps to
    y in [r*h, (r+1)*h]. A step moves 0.3 in the action direction plus
    Gaussian noise; any path touching a wall or the border leaves the agent in
    place. The state vector is the RBF activation plus a 0.9-discounted trace.
    """

    tabular = False

    def __init__(self, maze, rng, L=3.0, step=0.3, noise_var=0.02, goal_radius=0.25,
                 change_every=30, max_steps=75, trace_decay=0.9, noise=True):
        self.maze = maze
        self.rng = rng
        self.L, self.step_len = L, step
        self.noise_sd = math.sqrt(noise_var) if noise else 0.0
        self.goal_radius = goal_radius
        self.change_every = change_every
        self.max_steps = max_steps
        self.trace_decay = trace_decay
        h = L / maze.width
        cells = [maze.rc(s) for s in range(maze.n_states) if maze.blocked.flat[s]]
        self.lo = np.array([[c * h, r * h] for r, c in cells]).reshape(-1, 2)
        self.hi = self.lo + h
        self.centers = rbf_centers(L)
        self.d = len(self.centers)
        self.episode = -1
        self.reward_known = False
        self.task_changed = False
        self.signalled = False
        self.trace = np.zeros(self.d)

    def in_wall(self, pos):
        pos = np.asarray(pos)
        if np.any(pos <= 0) or np.any(pos >= self.L):
            return True
        return bool(np.any(np.all((pos >= self.lo) & (pos <= self.hi), axis=1)))

    def blocked_path(self, p0, p1):
        if np.any(p1 <= 0) or np.any(p1 >= self.L):
            return True
        return len(self.lo) > 0 and segment_hits_box(p0, p1, self.lo, self.hi)

    def random_free_position(self):
        while True:
            p = self.rng.uniform(0, self.L, size=2)
            if not self.in_wall(p):
                return p

    def _new_task(self):
        self.goal = self.random_free_position()
        while True:
            self.start = self.random_free_position()
            if np.linalg.norm(self.start - self.goal) >= self.goal_radius:
                break

    def features_at(self, pos):
        return rbf_embedding(pos, self.centers)

    def reset(self):
        self.episode += 1
        self.task_changed = self.episode % self.change_every == 0
        if self.task_changed:
            self._new_task()
        self.signalled = self.task_changed
        self.pos = self.start.copy()
        self.t = 0
        self.trace = self.features_at(self.pos)
        return self.trace.copy()

    def continuous_step(self, pos, a):
        """Candidate move with noise; returns the new position (unchanged on contact)."""
        dr, dc = MOVES[a]
        cand = pos + self.step_len * np.array([dc, dr], dtype=float)
        if self.noise_sd:
            cand = cand + self.rng.normal(0.0, self.noise_sd, size=2)
        if self.blocked_path(pos, cand):
            return pos.copy()
        return cand

    def step(self, a):
        self.pos = self.continuous_step(self.pos, a)
        self.t += 1
        self.trace = self.features_at(self.pos) + self.trace_decay * self.trace
        hit = np.linalg.norm(self.pos - self.goal) < self.goal_radius
        r = GOAL_REWARD if hit else 0.0
        return self.trace.copy(), r, bool(hit) or self.t >= self.max_steps

    def features(self, x):
        return x

    def oracle_context(self):
        r, c = int(self.goal[1] // (self.L / 2)), int(self.goal[0] // (self.L / 2))
        return 2 * min(r, 1) + min(c, 1)

    def value_mask(self):
        return ()
