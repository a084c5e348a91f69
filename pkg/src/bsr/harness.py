"""Experiment profiles, run drivers, parameter sweeps and summaries."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from . import analysis
from .agents import entropy, make_agent
from .core import ConfigError, RngStreams, RunConfig, derive_seed
from .envs import ContinuousMaze, ForageTask, GridTask, YMaze, load_maze, ymaze_schedule

log = logging.getLogger(__name__)

_TABULAR = dict(gamma=0.99, alpha_w=1.0, alpha_ws=0.01, c_ws=1.0, alpha_dp=2.0, sigma_cr=1.6,
                filter_delay=3, n_particles=100, particle_window=10, replay_batch=5,
                buffer_capacity=300, alpha_cr=0.15, alpha_cr_final=0.0, alpha_cr_episodes=6000,
                max_steps=75, update_policy="all", action_ties="random")

PROFILES = {
    "exp1": dict(_TABULAR, env="exp1", n_episodes=4500, change_every=20),
    "exp2": dict(_TABULAR, env="exp2", n_episodes=4500, change_every=30),
    "exp3": dict(env="exp3", gamma=0.99, alpha_w=0.005, alpha_sr=0.0005, alpha_ws=0.01, c_ws=1.0,
                 alpha_dp=2.0, sigma_cr=1.6, filter_delay=4, n_particles=100, particle_window=50,
                 replay_batch=15, alpha_cr=0.005, alpha_cr_final=0.001, alpha_cr_episodes=4000,
                 n_steps=250_000, change_every=30, max_steps=75, update_policy="most_likely",
                 sync_every=80, buffer_episodes=200, dropout=0.1),
    "forage": dict(_TABULAR, env="forage", epsilon=0.2, alpha_w=0.5,
                   alpha_sr=0.1, sigma_cr=1.0, n_sessions=150, trials_per_session=30,
                   probe_steps=75, layout="open8"),
    "ymaze": dict(_TABULAR, env="ymaze", epsilon=0.2, alpha_w=0.5,
                  alpha_sr=0.1, sigma_cr=1.0, pretrain_episodes=500, change_every=20, n_blocks=24,
                  trials_per_segment=10, layout="ymaze", offset="constant+cr"),
}

# Best (epsilon, alpha_sr) per agent from the published parameter tables.
TABLE_SETTINGS = {
    "exp1": {
        "BSR": dict(k=4, epsilon=0.0, alpha_sr=0.005),
        "GSR": dict(k=4, epsilon=0.0, alpha_sr=0.005),
        "GPI": dict(k=4, epsilon=0.05, alpha_sr=0.001),
        "SSR": dict(k=1, epsilon=0.1, alpha_sr=0.001),
        "KQ": dict(k=4, epsilon=0.05, alpha_sr=0.001),
    },
    "exp2": {
        "BSR": dict(k=4, offset="none", epsilon=0.55, alpha_sr=0.01),
        "BSR+c": dict(agent="BSR", k=4, offset="constant", epsilon=0.15, alpha_sr=0.05),
        "BSR+ccr": dict(agent="BSR", k=4, offset="constant+cr", epsilon=0.05, alpha_sr=0.05),
        "BSR6+ccr": dict(agent="BSR", k=6, offset="constant+cr", epsilon=0.1, alpha_sr=0.05),
        "SSR": dict(k=1, offset="none", epsilon=0.6, alpha_sr=0.005),
        "SSRplus": dict(k=1, offset="constant", epsilon=0.25, alpha_sr=0.005),
        "SSR+ccr": dict(agent="SSR", k=1, offset="constant+cr", epsilon=0.15, alpha_sr=0.01),
        "EW": dict(k=4, offset="none", epsilon=0.55, alpha_sr=0.005),
        "EW+c": dict(agent="EW", k=4, offset="constant", epsilon=0.35, alpha_sr=0.05),
        "EW+ccr": dict(agent="EW", k=4, offset="constant+cr", epsilon=0.15, alpha_sr=0.05),
        "GPI": dict(k=4, offset="none", epsilon=0.55, alpha_sr=0.01, gpi_reward_mode="stored"),
    },
    "exp3": {
        "BSR": dict(k=4, offset="constant+cr", epsilon=0.3, update_policy="most_likely"),
        "BSR-sampled": dict(agent="BSR", k=4, offset="constant+cr", epsilon=0.3,
                            update_policy="sampled"),
        "GPI": dict(k=4, offset="none", epsilon=0.35, gpi_reward_mode="stored"),
        "SSRplus": dict(k=1, offset="constant", epsilon=0.4),
        "SSR": dict(k=1, offset="none", epsilon=0.45),
    },
    "forage": {
        "BSR": dict(k=4), "SSR": dict(k=1), "EW": dict(k=4), "GPI": dict(k=4),
        "BSR2": dict(k=4),
    },
    "ymaze": {
        "BSR": dict(k=4), "KQ": dict(k=4), "GPI": dict(k=4), "SSR": dict(k=1), "EW": dict(k=4),
        "BSR2": dict(k=4),
    },
}


def make_config(profile, agent="BSR", seed=0, **overrides):
    """Profile defaults, then the table setting for ``agent``, then overrides."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    params = dict(PROFILES[profile])
    table = TABLE_SETTINGS.get(profile, {})
    params.update(table.get(agent, {}))
    params.setdefault("agent", agent)
    params.update(overrides)
    params["seed"] = seed
    return RunConfig().replace(**params)


@dataclass
class RunArtifacts:
    config: dict
    episodes: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def episodes_csv(self):
        buf = io.StringIO()
        if self.episodes:
            fields = list(dict.fromkeys(k for row in self.episodes for k in row))
            w = csv.DictWriter(buf, fieldnames=fields, restval="", lineterminator="\n")
            w.writeheader()
            w.writerows(self.episodes)
        return buf.getvalue()

    def summary_json(self):
        return json.dumps({"config": self.config, "totals": self.totals}, sort_keys=True, indent=1,
                          default=_jsonable)

    def save(self, out):
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "episodes.csv").write_text(self.episodes_csv())
        (out / "summary.json").write_text(self.summary_json())
        for name, rows in self.extras.items():
            if isinstance(rows, list) and rows and isinstance(rows[0], dict):
                buf = io.StringIO()
                w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
                (out / f"{name}.csv").write_text(buf.getvalue())
            else:
                (out / f"{name}.json").write_text(json.dumps(rows, sort_keys=True, default=_jsonable))
        return out

    def fingerprint(self):
        return self.episodes_csv() + self.summary_json()


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return str(x)


def _make_env(cfg, rng):
    if cfg.env in ("exp1", "exp2"):
        maze = load_maze(cfg.layout or "maze8")
        return GridTask(maze, rng.task, cfg.change_every, puddles=cfg.env == "exp2",
                        max_steps=cfg.max_steps, reward_known=cfg.env == "exp1")
    if cfg.env == "exp3":
        maze = load_maze(cfg.layout or "maze8")
        return ContinuousMaze(maze, rng.env, change_every=cfg.change_every, max_steps=cfg.max_steps)
    if cfg.env == "forage":
        return ForageTask(load_maze(cfg.layout or "open8"), rng.task, cfg.trials_per_session,
                          cfg.max_steps)
    if cfg.env == "ymaze":
        return YMaze(rng.task, cfg.layout or "ymaze", cfg.max_steps)
    raise ConfigError(f"unknown environment {cfg.env!r}")


def run_episode(env, agent, on_step=None, budget=None):
    """Play one episode; ``budget`` cuts it short after that many steps."""
    s = env.reset()
    if env.signalled and getattr(agent, "reacts_to_signals", False) and env.episode > 0:
        agent.task_change()
    agent.begin_episode(s)
    steps, ret, done = 0, 0.0, False
    while not done and (budget is None or steps < budget):
        a = agent.act(s, env.value_mask())
        s2, r, done = env.step(a)
        agent.observe(s, a, s2, r)
        if on_step is not None:
            on_step(s, a, s2, r)
        s = s2
        steps += 1
        ret += r
    agent.end_episode()
    return steps, ret


def _record(agent, ep, steps, ret, **extra):
    row = dict(episode=ep, steps=steps, ret=round(ret, 6),
               context=int(np.argmax(agent.omega)), omega_entropy=round(entropy(agent.omega), 6))
    row.update(extra)
    return row


def run_navigation(cfg, rng, env=None, agent=None):
    env = env or _make_env(cfg, rng)
    agent = agent or make_agent(cfg, env, rng)
    art = RunArtifacts(cfg.to_dict())
    for ep in range(cfg.n_episodes):
        steps, ret = run_episode(env, agent)
        art.episodes.append(_record(agent, ep, steps, ret, goal=env.goal,
                                    changed=int(env.task_changed)))
    art.totals = dict(total_steps=int(sum(e["steps"] for e in art.episodes)),
                      total_return=float(sum(e["ret"] for e in art.episodes)),
                      n_episodes=len(art.episodes))
    return art


def run_experiment(profile, agent="BSR", seed=0, **overrides):
    """Run one agent on one profile; returns :class:`RunArtifacts`."""
    cfg = make_config(profile, agent, seed, **overrides)
    return run_config(cfg)


def run_config(cfg: RunConfig):
    rng = RngStreams(cfg.seed)
    t0 = time.perf_counter()
    if cfg.env in ("exp1", "exp2"):
        art = run_navigation(cfg, rng)
    elif cfg.env == "exp3":
        from .neural import run_continuous
        art = run_continuous(cfg, rng)
    elif cfg.env == "forage":
        art = run_forage(cfg, rng)
    elif cfg.env == "ymaze":
        art = run_ymaze(cfg, rng)
    else:
        raise ConfigError(f"unknown environment {cfg.env!r}")
    log.info("%s/%s seed %d done in %.1fs", cfg.env, cfg.agent, cfg.seed, time.perf_counter() - t0)
    return art


# ------------------------------------------------------------- foraging


def state_hash(agent):
    """Digest of every learnable array of an agent (used to prove probes are read-only)."""
    import hashlib
    h = hashlib.blake2b(digest_size=16)
    for arr in agent.state_snapshot():
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def probe(env, agent, n_steps, rng):
    """Reward-free random walk; returns the template map sum_i omega_i M_i from its start."""
    before = state_hash(agent)
    template = agent.weighted_map()
    s = int(rng.choice(env.maze.free))
    for _ in range(n_steps):
        s = env.random_walk_step(s, rng)
    if state_hash(agent) != before:
        raise RuntimeError("agent state changed during a probe")
    return template


def run_forage(cfg, rng, first_session=25, last_session=140):
    """Three-reward foraging sessions bracketed by pre/post probes, with flicker traces."""
    env = _make_env(cfg, rng)
    agent = make_agent(cfg, env, rng)
    art = RunArtifacts(cfg.to_dict())
    per_trial, trace_rows = [], []
    ep = 0
    for session in range(cfg.n_sessions):
        pre = probe(env, agent, cfg.probe_steps, rng.probe)
        firing, sa, trials = [], [], []

        def on_step(s, a, s2, r):
            i, fs, fa = agent.firing
            firing.append(agent.M[i, fs, fa].copy())
            sa.append((fs, fa))
            trials.append(env.trial + 1)

        for _ in range(cfg.trials_per_session):
            steps, ret = run_episode(env, agent, on_step)
            art.episodes.append(_record(agent, ep, steps, ret, session=session,
                                        trial=env.trial + 1, collected=len(env.collected)))
            ep += 1
        post = probe(env, agent, cfg.probe_steps, rng.probe)
        if first_session <= session <= last_session:
            tr = analysis.flicker_trace(firing, sa, pre, post, trials)
            per_trial.append(tr.get("per_trial", {}))
            for t, z in zip(tr["steps"], tr["z_diff"]):
                trace_rows.append(dict(session=session, trial=trials[t], step=int(t),
                                       z_diff=round(float(z), 6)))
    stat = analysis.trial_progress_stat(per_trial, 1, 16)
    curve = {}
    for tr in per_trial:
        for t, z in tr.items():
            curve.setdefault(t, []).append(z)
    art.totals = dict(total_steps=int(sum(e["steps"] for e in art.episodes)),
                      total_return=float(sum(e["ret"] for e in art.episodes)),
                      n_episodes=len(art.episodes), spearman_rho=stat["rho"],
                      spearman_sem=stat["sem"], n_sessions_analysed=stat["n"])
    art.extras["flicker"] = trace_rows
    art.extras["trial_curve"] = {int(t): float(np.mean(z)) for t, z in sorted(curve.items())}
    art.extras["session_rho"] = stat["per_session"]
    return art


# ---------------------------------------------------------------- Y-maze

BLOCKED_TYPES = (1, 2)


def run_ymaze(cfg, rng, max_attempts=200):
    """Pre-training with random trial types, then recorded blocks of four segments."""
    env = _make_env(cfg, rng)
    agent = make_agent(cfg, env, rng)
    art = RunArtifacts(cfg.to_dict())
    ep = 0
    for i in range(cfg.pretrain_episodes):
        if i % cfg.change_every == 0:
            env.set_trial_type(int(rng.task.integers(4)))
        steps, ret = run_episode(env, agent)
        art.episodes.append(_record(agent, ep, steps, ret, phase="pretrain",
                                    trial_type=env.trial_type, success=int(ret > 0)))
        ep += 1
    vectors, labels, skipped = [], [], 0
    for block, order in enumerate(ymaze_schedule(rng.task, cfg.n_blocks)):
        for tt in order:
            env.set_trial_type(tt)
            done, attempts = 0, 0
            while done < cfg.trials_per_segment and attempts < max_attempts:
                first = []

                def start_box(s, a, s2, r):
                    if not first:
                        first.append(agent.M[agent.firing[0], s, a].copy())

                steps, ret = run_episode(env, agent, start_box)
                ok = ret > 0
                if ok:
                    vectors.append(first[0])
                    labels.append(tt)
                    done += 1
                attempts += 1
                art.episodes.append(_record(agent, ep, steps, ret, phase="record", block=block,
                                            trial_type=tt, success=int(ok)))
                ep += 1
            if done < cfg.trials_per_segment:
                skipped += 1
                log.info("block %d type %d: only %d successes in %d attempts", block, tt, done,
                         attempts)
    rec = [e for e in art.episodes if e["phase"] == "record" and e["success"]]
    blocked = [e["steps"] for e in rec if e["trial_type"] in BLOCKED_TYPES]
    open_ = [e["steps"] for e in rec if e["trial_type"] not in BLOCKED_TYPES]
    mat = analysis.splitter_decode(vectors, labels, 4) if len(vectors) else np.zeros((4, 4))
    art.totals = dict(total_steps=int(sum(e["steps"] for e in art.episodes)),
                      total_return=float(sum(e["ret"] for e in art.episodes)),
                      n_episodes=len(art.episodes),
                      blocked_steps=float(np.mean(blocked)) if blocked else float("nan"),
                      open_steps=float(np.mean(open_)) if open_ else float("nan"),
                      incomplete_segments=skipped)
    art.totals["blocked_ratio"] = art.totals["blocked_steps"] / art.totals["open_steps"]
    art.extras["splitter"] = [dict(actual=r, **{f"decoded_{c}": round(float(mat[r, c]), 6)
                                                for c in range(4)}) for r in range(4)]
    art.extras["splitter_matrix"] = mat
    return art


# ----------------------------------------------------------- sweeps / reports


def cell_seed(seed, agent, epsilon, alpha_sr, replicate):
    return derive_seed(seed, agent, repr(float(epsilon)), repr(float(alpha_sr)), replicate)


def _run_cell(args):
    profile, agent, eps, lr, seed, overrides = args
    try:
        art = run_experiment(profile, agent, seed, epsilon=eps, alpha_sr=lr, **overrides)
        return dict(ok=True, totals=art.totals)
    except Exception as exc:    # a failing cell must not stop the sweep
        return dict(ok=False, error=f"{type(exc).__name__}: {exc}")


def sweep(profile, agents, epsilons, alpha_srs, n_seeds=1, base_seed=0, workers=1, **overrides):
    """Grid of (agent, epsilon, alpha_sr) x seeds; returns per-cell mean/sem and best cells.

    Per-run seeds depend only on (base seed, cell, replicate), so the result of
    a cell does not depend on which other cells are in the grid.
    """
    jobs, keys = [], []
    for agent, eps, lr in product(agents, epsilons, alpha_srs):
        for rep in range(n_seeds):
            jobs.append((profile, agent, eps, lr, cell_seed(base_seed, agent, eps, lr, rep),
                         overrides))
            keys.append((agent, eps, lr))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    metric = "total_steps" if profile == "exp1" else "total_return"
    cells = {}
    for key, res in zip(keys, results):
        c = cells.setdefault(key, dict(agent=key[0], epsilon=key[1], alpha_sr=key[2], values=[],
                                       errors=[]))
        if res["ok"]:
            c["values"].append(res["totals"][metric])
        else:
            c["errors"].append(res["error"])
    rows = []
    for c in cells.values():
        m, s = analysis.mean_sem(c["values"]) if c["values"] else (float("nan"), 0.0)
        rows.append(dict(agent=c["agent"], epsilon=c["epsilon"], alpha_sr=c["alpha_sr"],
                         metric=metric, mean=m, sem=s, n=len(c["values"]),
                         failures=len(c["errors"])))
    best = {}
    for r in rows:
        if r["n"] == 0:
            continue
        cur = best.get(r["agent"])
        if cur is None or (r["mean"] < cur["mean"] if metric == "total_steps"
                           else r["mean"] > cur["mean"]):
            best[r["agent"]] = r
    return dict(profile=profile, metric=metric, cells=rows, best=best)


def summarize(artifacts):
    """Totals, curves, ANOVA across agent groups and, for foraging, Spearman statistics.

    ``artifacts`` is a list of :class:`RunArtifacts` (or their loaded dicts).
    """
    runs = []
    for art in artifacts:
        cfg = art.config if isinstance(art, RunArtifacts) else art["config"]
        totals = art.totals if isinstance(art, RunArtifacts) else art["totals"]
        episodes = art.episodes if isinstance(art, RunArtifacts) else art.get("episodes", [])
        runs.append(dict(config=cfg, totals=totals,
                         curve=[int(e["steps"]) for e in episodes]))
    report = dict(runs=runs)
    if not runs:
        return report
    metric = "total_steps" if runs[0]["config"].get("env") == "exp1" else "total_return"
    groups = {}
    for r in runs:
        groups.setdefault(r["config"]["agent"], []).append(r["totals"][metric])
    report["metric"] = metric
    report["groups"] = {g: dict(zip(("mean", "sem"), analysis.mean_sem(v)), n=len(v))
                        for g, v in groups.items()}
    usable = [v for v in groups.values() if len(v) >= 2]
    if len(usable) >= 2:
        report["anova_F"] = analysis.one_way_anova(usable)
    if runs[0]["config"].get("env") == "forage":
        report["spearman"] = {g: analysis.mean_sem([r["totals"]["spearman_rho"] for r in runs
                                                    if r["config"]["agent"] == g])
                              for g in groups}
    return report


def load_artifacts(directory):
    """Read every saved run (summary.json + episodes.csv) below ``directory``."""
    out = []
    for summ in sorted(Path(directory).rglob("summary.json")):
        data = json.loads(summ.read_text())
        eps_path = summ.parent / "episodes.csv"
        data["episodes"] = list(csv.DictReader(eps_path.open())) if eps_path.exists() else []
        data["path"] = str(summ.parent)
        out.append(data)
    return out
