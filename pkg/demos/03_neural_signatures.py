"""Map sampling as a model of hippocampal flicker and splitter cells.

Firing rates are read off as the row M(s_t, a_t, :) of the map in use.

* Foraging: between a reward-free probe before and after each session, the
  firing pattern should drift from the "pre" template to the "post" one.
  The per-trial z-scored difference and its Spearman trend are printed.
* Y-maze: start-box population vectors decode the upcoming trial type.

    python3 demos/03_neural_signatures.py [--sessions 40] [--blocks 4]
"""

import argparse

import numpy as np

from bsr.harness import run_experiment

p = argparse.ArgumentParser()
p.add_argument("--sessions", type=int, default=40)
p.add_argument("--blocks", type=int, default=4)
p.add_argument("--seed", type=int, default=0)
args = p.parse_args()

for label in ("BSR", "EW"):
    art = run_experiment("forage", label, seed=args.seed, n_sessions=args.sessions)
    curve = art.extras["trial_curve"]
    trend = " ".join(f"{curve[t]:+.2f}" for t in sorted(curve) if t <= 16)
    print(f"{label}: Spearman rho {art.totals['spearman_rho']:.3f} over "
          f"{art.totals['n_sessions_analysed']} sessions\n   z-diff by trial: {trend}")

for label in ("BSR", "KQ"):
    art = run_experiment("ymaze", label, seed=args.seed, n_blocks=args.blocks)
    print(f"\n{label} decoding matrix (rows: actual trial type, columns: decoded)")
    print(np.round(art.extras["splitter_matrix"], 2))
    t = art.totals
    print(f"steps to goal: blocked routes {t['blocked_steps']:.1f}, open {t['open_steps']:.1f}")
