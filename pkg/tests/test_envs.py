import math

import numpy as np
import pytest

from bsr.core import DOWN, LEFT, RIGHT, UP, ConfigError
from bsr.envs import (GOAL_REWARD, ContinuousMaze, ForageTask, GridMaze, GridTask, YMaze,
                      forage_value_mask, grid_step, load_maze, rbf_centers, rbf_embedding,
                      read_layout, segment_hits_box, ymaze_schedule)


def test_shipped_layouts_load():
    maze = load_maze("maze8")
    assert maze.n_states == 64 and maze.blocked.any()
    assert len(maze.reachable(maze.free[0])) == len(maze.free)
    assert not load_maze("open8").blocked.any()


def test_layout_validation(tmp_path):
    with pytest.raises(ConfigError):
        load_maze("........\n" * 7)
    with pytest.raises(ConfigError):
        read_layout("...\n..\n")
    with pytest.raises(ConfigError):
        load_maze("no_such_layout")
    p = tmp_path / "m.txt"
    p.write_text("#.......\n" + "........\n" * 7)
    assert load_maze(str(p)).blocked[0, 0]


def test_state_index_is_row_major():
    maze = load_maze("open8")
    assert maze.rc(19) == (2, 3)
    assert maze.move(19, RIGHT) == 20 and maze.move(19, DOWN) == 27


def test_grid_step_examples():
    maze = load_maze("open8")
    assert grid_step(maze, 0, UP, goal=63) == (0, 0.0, False)
    assert grid_step(maze, 62, RIGHT, goal=63) == (63, GOAL_REWARD, True)
    assert grid_step(maze, 0, RIGHT, goal=63, puddles={1}) == (1, -1.0, False)


def test_grid_walls_block():
    maze = load_maze("maze8")
    s = 8      # row 1, col 0; (1,1) is a wall
    assert maze.blocked[1, 1] and maze.move(s, RIGHT) == s


def test_gridtask_schedule_and_cap(rng):
    env = GridTask(load_maze("maze8"), rng, change_every=20)
    seen = []
    for ep in range(41):
        env.reset()
        seen.append((env.start, env.goal, env.task_changed))
    assert [ep for ep, x in enumerate(seen) if x[2]] == [0, 20, 40]
    assert all(seen[i][:2] == seen[0][:2] for i in range(20))
    maze = env.maze
    assert all(s != g and g in maze.reachable(s) for s, g, _ in seen)
    env.reset()
    steps = 0
    done = False
    while not done:
        _, _, done = env.step(UP)
        steps += 1
    assert steps <= 75


def test_puddles_cover_opposite_quadrant(rng):
    env = GridTask(load_maze("maze8"), rng, change_every=30, puddles=True, reward_known=False)
    env.reset()
    q = env.maze.quadrant(env.goal)
    assert env.puddles and all(env.maze.quadrant(p) == 3 - q for p in env.puddles)
    assert all(not env.maze.blocked.flat[p] for p in env.puddles)


def test_kq_context_is_quadrant_for_every_goal():
    maze = load_maze("open8")
    env = GridTask(maze, np.random.default_rng(0))
    for g in range(64):
        env.goal = g
        r, c = divmod(g, 8)
        assert env.oracle_context() == 2 * (r >= 4) + (c >= 4)


def test_forage_sessions(rng):
    env = ForageTask(load_maze("open8"), rng, trials_per_session=30)
    rewards = []
    for ep in range(60):
        env.reset()
        rewards.append(env.rewards)
        assert len(set(env.rewards)) == 3 and env.s not in env.rewards
    assert len(set(rewards[:30])) == 1 and rewards[30] != rewards[0]
    env.reset()
    env.s = env.rewards[0] - 1 if env.rewards[0] % 8 else env.rewards[0] + 1
    a = RIGHT if env.rewards[0] % 8 else LEFT
    _, r, _ = env.step(a)
    assert r == GOAL_REWARD
    # collecting the same cell again pays nothing
    back = LEFT if a == RIGHT else RIGHT
    env.step(back)
    _, r2, _ = env.step(a)
    assert r2 == 0.0


def test_forage_value_mask_is_pure():
    w = np.arange(5.0)
    assert forage_value_mask(w, ()) is w
    m = forage_value_mask(w, (1, 3))
    assert m.tolist() == [0, 0, 2, 0, 4] and w.tolist() == [0, 1, 2, 3, 4]
    W = np.ones((2, 5))
    assert forage_value_mask(W, {0})[:, 0].tolist() == [0, 0]


def test_ymaze_teleport_and_barriers(rng):
    env = YMaze(rng)
    assert env.move(env.X + env.maze.width, UP) == env.C      # entering X lands in C
    for tt in range(4):
        env.set_trial_type(tt)
        env.reset()
        assert env.s == env.S
    env.set_trial_type(1)
    assert env.move(env.X + 2 * env.maze.width, UP) == env.X + 2 * env.maze.width
    env.set_trial_type(2)
    assert env.move(env.C + 2 * env.maze.width, UP) == env.C + 2 * env.maze.width


def test_ymaze_all_goals_reachable(rng):
    env = YMaze(rng)
    for tt in range(4):
        env.set_trial_type(tt)
        seen, todo = {env.S}, [env.S]
        while todo:
            s = todo.pop()
            for a in range(4):
                s2 = env.move(s, a)
                assert s2 != env.X
                if s2 not in seen:
                    seen.add(s2)
                    todo.append(s2)
        assert env.goal in seen


def test_ymaze_schedule_has_three_changes_per_block(rng):
    blocks = ymaze_schedule(rng, 24)
    assert len(blocks) == 24 and all(sorted(b) == [0, 1, 2, 3] for b in blocks)


def test_rbf_embedding():
    c = rbf_centers()
    assert c.shape == (100, 2)
    phi = rbf_embedding(c[37], c)
    assert phi[37] == pytest.approx(1 / (2 * math.pi), rel=1e-12)
    assert rbf_embedding([1e3, 1e3], c).max() == pytest.approx(0.0)


def test_continuous_maze_dynamics():
    maze = load_maze("open8")
    env = ContinuousMaze(maze, np.random.default_rng(0), noise=False)
    pos = np.array([1.5, 1.5])
    assert np.linalg.norm(env.continuous_step(pos, RIGHT) - pos) == pytest.approx(0.3)
    walled = ContinuousMaze(load_maze("maze8"), np.random.default_rng(0), noise=False)
    h = 3 / 8
    pos = np.array([0.5 * h, 1.5 * h])     # cell (1, 0); (1, 1) is a wall to the right
    assert np.array_equal(walled.continuous_step(pos, RIGHT), pos)
    env.reset()
    env.goal = env.pos + np.array([0.2, 0.0])
    env.pos = env.goal - np.array([0.3 - 0.2, 0.0]) - np.array([0.2, 0.0])
    _, r, done = env.step(RIGHT)
    assert done and r == GOAL_REWARD


def test_continuous_trace_decays():
    env = ContinuousMaze(load_maze("open8"), np.random.default_rng(0), noise=False)
    x0 = env.reset()
    env.pos = np.array([0.01, 0.01])
    stay = env.features_at(env.pos)
    x1, _, _ = env.step(UP)      # bumps the border and stays in place
    assert np.allclose(x1, stay + 0.9 * x0)
    x2, _, _ = env.step(UP)
    assert np.allclose(x2, stay + 0.9 * x1)
    assert np.allclose(stay + 0.9 * stay, 1.9 * stay)


def test_segment_cannot_tunnel_through_thin_wall():
    lo = np.array([[1.0, 0.0]])
    hi = np.array([[1.05, 2.0]])
    assert segment_hits_box(np.array([0.9, 1.0]), np.array([1.2, 1.0]), lo, hi)
    assert not segment_hits_box(np.array([0.5, 1.0]), np.array([0.8, 1.0]), lo, hi)


def test_continuous_positions_never_in_walls():
    env = ContinuousMaze(load_maze("maze8"), np.random.default_rng(4))
    env.reset()
    rng = np.random.default_rng(1)
    for _ in range(2000):
        env.step(int(rng.integers(4)))
        assert not env.in_wall(env.pos)
