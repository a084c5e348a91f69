"""Successor maps on the 8x8 maze: learn one by TD, check it, reuse it for a new goal.

A successor map M(s, a, s') counts discounted future visits to s' after taking
a in s. Values factor as Q(s, a) = M(s, a, :) . w, so once M is known a new
reward vector w gives new values without relearning anything, but only for
the policy M was learnt under.

    python3 demos/01_successor_maps.py
"""

import numpy as np

from bsr.envs import load_maze
from bsr.sr import analytic_sr_state_action, greedy, td_update

maze = load_maze("maze8")
n, gamma = maze.n_states, 0.9
T = maze.transition_tensor()
print(maze.render())

# 1. TD learning under a uniform random policy matches the closed form.
rng = np.random.default_rng(0)
pi = np.full((n, 4), 0.25)
exact = analytic_sr_state_action(T, pi, gamma)
# the library update bootstraps on the greedy action; for a fixed random
# policy the bootstrap is the policy average, written out here
M = np.zeros((n, 4, n))
for sweep in range(500):
    lr = 0.5
    for s in maze.free:
        for a in range(4):
            s2 = maze.move(s, a)
            M[s, a] += lr * (np.eye(n)[s2] + gamma * pi[s2] @ M[s2] - M[s, a])
free = np.array(maze.free)
err = np.abs(M[free] - exact[free]).max()
print(f"\nrandom-walk map vs closed form: max abs error {err:.2e}")

# 2. The same map values any goal, but its policy is the random walk.
goal = maze.free[-1]
w = np.zeros(n)
w[goal] = 1.0
start = maze.free[0]
q = M[start] @ w
print(f"random-walk values at start for goal {maze.rc(goal)}: {np.array2string(q, precision=4)}"
      f" (up, down, left, right)")

# 3. Greedy TD learning (the library update) specialises the map to one goal.
Mg = np.zeros((n, 4, n))
for episode in range(400):
    s = start
    for t in range(60):
        a = int(rng.integers(4)) if rng.random() < 0.2 else greedy(Mg[s] @ w, rng)
        s2 = maze.move(s, a)
        td_update(Mg, s, a, s2, w, gamma, 0.3)
        s = s2
        if s == goal:
            break


def path_length(M, w, start, goal, limit=100):
    s, k = start, 0
    while s != goal and k < limit:
        s = maze.move(s, greedy(M[s] @ w))
        k += 1
    return k


print(f"greedy path to goal with the specialised map: {path_length(Mg, w, start, goal)} steps, "
      f"shortest {int(maze.distances(goal)[start])}")

# 4. Reusing that map for another goal is where a single map struggles.
other = maze.free[7]
w2 = np.zeros(n)
w2[other] = 1.0
print(f"same map, new goal {maze.rc(other)}: {path_length(Mg, w2, start, other)} steps "
      f"(limit 100), shortest {int(maze.distances(other)[start])}")
