"""Several maps plus inference over which one the current reward belongs to.

Experiment II setting: goals move every 30 episodes without any signal, and
puddles cost -1. BSR keeps up to four maps and infers the active context from
convolved rewards with a particle filter; SSR has one map. The run below is a
shortened version of the full profile.

    python3 demos/02_context_inference.py [--episodes 900]
"""

import argparse

import numpy as np

from bsr.harness import run_experiment

p = argparse.ArgumentParser()
p.add_argument("--episodes", type=int, default=900)
p.add_argument("--seed", type=int, default=0)
args = p.parse_args()

for label in ("SSR", "BSR", "BSR+ccr"):
    art = run_experiment("exp2", label, seed=args.seed, n_episodes=args.episodes)
    eps = art.episodes
    ctx = np.array([e["context"] for e in eps])
    switches = int((np.diff(ctx) != 0).sum())
    steps = np.array([e["steps"] for e in eps])
    print(f"{label:8s} return {art.totals['total_return']:8.0f}  "
          f"mean steps {steps.mean():5.1f}  most-likely-context switches {switches}")

# Per-block view for the last agent: which map dominated each 30-episode goal block.
blocks = [ctx[i:i + 30] for i in range(0, len(ctx), 30)]
print("\ndominant context per goal block (BSR+ccr):",
      [int(np.bincount(b).argmax()) for b in blocks])
