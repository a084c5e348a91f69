"""Shared types, feature embeddings, seeded random streams and run configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import yaml

N_ACTIONS = 4
UP, DOWN, LEFT, RIGHT = range(N_ACTIONS)
ACTION_NAMES = ("up", "down", "left", "right")

AGENT_KINDS = ("BSR", "BSR2", "GSR", "SSR", "SSRplus", "EW", "KQ", "GPI")
OFFSET_MODES = ("none", "constant", "constant+cr")
UPDATE_POLICIES = ("all", "most_likely", "sampled")


class ConfigError(ValueError):
    """Invalid configuration or out-of-range argument."""


class Transition(NamedTuple):
    s: Any
    a: int
    s_next: Any
    r: float
    context: int


def one_hot(s: int, d: int) -> np.ndarray:
    if not 0 <= s < d:
        raise ConfigError(f"state index {s} out of range for dimension {d}")
    v = np.zeros(d)
    v[s] = 1.0
    return v


@dataclass
class RunConfig:
    """Every knob of a single run. Profiles in :mod:`bsr.harness` fill defaults."""

    agent: str = "BSR"
    env: str = "exp1"
    k: int = 4
    gamma: float = 0.99
    epsilon: float = 0.0
    alpha_sr: float = 0.005
    alpha_w: float = 1.0
    alpha_cr: float = 0.15
    alpha_cr_final: float = 0.0
    alpha_cr_episodes: int = 6000
    alpha_ws: float = 0.01
    c_ws: float = 1.0
    alpha_dp: float = 2.0
    sigma_cr: float = 1.6
    filter_delay: int = 3
    n_particles: int = 100
    particle_window: int = 10
    resampling: str = "multinomial"
    offset: str = "none"
    offset_per_episode: bool = False
    update_policy: str = "all"
    replay_batch: int = 5
    buffer_capacity: int = 300
    gpi_reward_mode: str = "shared"
    # "lowest": first maximal action; "random": uniform among exactly equal maxima
    action_ties: str = "lowest"
    epsilon_anneal_episodes: int = 250
    seed: int = 0
    n_episodes: int = 4500
    change_every: int = 20
    n_steps: int = 0
    max_steps: int = 75
    init_scale: float = 0.01
    # neural agent
    hidden: tuple = (150,)
    dropout: float = 0.1
    sync_every: int = 80
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    buffer_episodes: int = 200
    # foraging / Y-maze
    n_sessions: int = 150
    trials_per_session: int = 30
    probe_steps: int = 75
    pretrain_episodes: int = 500
    n_blocks: int = 24
    trials_per_segment: int = 10
    layout: str = ""
    record_firing: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.agent not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.agent!r}")
        if self.offset not in OFFSET_MODES:
            raise ConfigError(f"unknown offset mode {self.offset!r}")
        if self.update_policy not in UPDATE_POLICIES:
            raise ConfigError(f"unknown update policy {self.update_policy!r}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")
        if self.gpi_reward_mode not in ("shared", "stored"):
            raise ConfigError(f"unknown GPI reward mode {self.gpi_reward_mode!r}")
        if self.action_ties not in ("lowest", "random"):
            raise ConfigError(f"unknown action tie rule {self.action_ties!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        for name in ("epsilon", "alpha_sr", "alpha_w", "alpha_cr", "alpha_cr_final",
                     "alpha_ws", "c_ws", "dropout"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.alpha_dp <= 0 or self.sigma_cr <= 0:
            raise ConfigError("alpha_dp and sigma_cr must be positive")
        if self.n_particles < 1 or self.particle_window < 1 or self.k < 1:
            raise ConfigError("n_particles, particle_window and k must be >= 1")
        if self.filter_delay < 1:
            raise ConfigError("filter delay must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)

    def replace(self, **overrides) -> "RunConfig":
        check_keys(overrides)
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def check_keys(d: dict):
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def read_overrides(path) -> dict:
    """YAML (or JSON) mapping of RunConfig keys; unknown keys are an error."""
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of config keys")
    check_keys(data)
    return data


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return dataclasses.replace(base or RunConfig(), **read_overrides(path))


# Fixed role ids so adding a role never shifts existing streams.
_ROLES = {"action": 0, "context": 1, "particles": 2, "replay": 3, "env": 4,
          "init": 5, "task": 6, "nn": 7, "probe": 8}


class RngStreams:
    """Independent numpy Generators per role, all derived from one seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        for role, idx in _ROLES.items():
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, idx])
            setattr(self, role, np.random.Generator(np.random.PCG64(ss)))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary hashable parts (order matters)."""
    h = hashlib.blake2b(json.dumps(parts, default=str).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1


def categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    """One draw from a probability vector; cheaper than Generator.choice."""
    c = np.cumsum(p)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), len(p) - 1))
