"""Command line: ``bsr run | sweep | analyze | oracle``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import ConfigError, load_config, read_overrides
from .harness import PROFILES, load_artifacts, make_config, run_config, summarize, sweep

log = logging.getLogger("bsr")


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def cmd_run(args):
    cfg = make_config(args.profile, args.agent, args.seed)
    if args.config:
        cfg = load_config(args.config, base=cfg)
        cfg = cfg.replace(seed=args.seed)
    if args.steps:
        cfg = cfg.replace(n_steps=args.steps)
    art = run_config(cfg)
    out = art.save(args.out or f"runs/{cfg.env}_{cfg.agent}_seed{cfg.seed}")
    print(json.dumps(art.totals, sort_keys=True))
    log.info("artifacts written to %s", out)
    return 0


def cmd_sweep(args):
    overrides = read_overrides(args.config) if args.config else {}
    res = sweep(args.profile, args.agents.split(","), _floats(args.epsilons),
                _floats(args.alpha_sr), n_seeds=args.seeds, base_seed=args.seed,
                workers=args.workers, **overrides)
    text = json.dumps(res, indent=1, sort_keys=True, default=float)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text)
    return 0


def _agent_extras(arts, name):
    """Per-agent lists of a saved JSON extra (e.g. the splitter matrix)."""
    out = {}
    for a in arts:
        p = Path(a["path"]) / f"{name}.json"
        if p.exists():
            out.setdefault(a["config"]["agent"], []).append(json.loads(p.read_text()))
    return out


def cmd_analyze(args):
    arts = load_artifacts(args.directory)
    report = summarize(arts)
    for r in report["runs"]:
        r.pop("curve", None)
    if args.what in ("splitter", "all"):
        mats = _agent_extras(arts, "splitter_matrix")
        report["splitter"] = {g: np.mean(m, axis=0).round(4).tolist() for g, m in mats.items()}
    if args.what in ("flicker", "all"):
        curves = _agent_extras(arts, "trial_curve")
        report["trial_curve"] = {
            g: {t: float(np.mean([c[t] for c in cs if t in c])) for t in sorted(cs[0], key=int)}
            for g, cs in curves.items()}
    print(json.dumps(report, indent=1, sort_keys=True, default=float))
    return 0


def cmd_oracle(args):
    """Check the library against closed forms: analytic SR and the conjugate posterior."""
    from .crfilter import gsr_posterior_update
    from .sr import analytic_sr_state_action, td_update

    rng = np.random.default_rng(args.seed)
    # 1a. iterative policy evaluation on a 3x3 open grid agrees with the closed form
    n, gamma = 9, 0.5
    T = np.zeros((n, 4, n))
    for s in range(n):
        r, c = divmod(s, 3)
        for a, (dr, dc) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            rr, cc = min(max(r + dr, 0), 2), min(max(c + dc, 0), 2)
            T[s, a, rr * 3 + cc] = 1.0
    pi = np.full((n, 4), 0.25)
    exact = analytic_sr_state_action(T, pi, gamma)
    M = np.zeros((n, 4, n))
    for it in range(600):
        lr = 1.0 / (1 + it) ** 0.6
        for s in range(n):
            for a in range(4):
                s2 = int(np.argmax(T[s, a]))
                target = np.eye(n)[s2] + gamma * pi[s2] @ M[s2]
                M[s, a] += lr * (target - M[s, a])
    err_sr = float(np.abs(M - exact).max())
    # 1b. the library TD update on a two-state loop with a single action
    M1 = np.zeros((2, 1, 2))
    for _ in range(4000):
        td_update(M1, 0, 0, 1, np.zeros(2), gamma, 0.05)
        td_update(M1, 1, 0, 0, np.zeros(2), gamma, 0.05)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    exact1 = np.linalg.solve(np.eye(2) - gamma * P, P)
    err_td = float(np.abs(M1[:, 0] - exact1).max())
    # 2. sequential conjugate updates equal the batch Bayesian linear-regression posterior
    d, sig = 5, 0.7
    X = rng.standard_normal((30, d))
    y = X @ rng.standard_normal(d) + sig * rng.standard_normal(30)
    mean, cov = np.zeros(d), np.eye(d)
    for x, v in zip(X, y):
        mean, cov = gsr_posterior_update(mean, cov, x, v, sig)
    prec = np.eye(d) + X.T @ X / sig ** 2
    batch_cov = np.linalg.inv(prec)
    batch_mean = batch_cov @ (X.T @ y / sig ** 2)
    err_post = float(max(np.abs(mean - batch_mean).max(), np.abs(cov - batch_cov).max()))
    report = dict(successor_map_max_error=err_sr, td_update_max_error=err_td,
                  posterior_max_error=err_post)
    ok = err_sr < 1e-3 and err_td < 1e-3 and err_post < 1e-10
    print(json.dumps(dict(report, ok=ok), indent=1, sort_keys=True))
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="bsr", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one agent on one experiment profile")
    r.add_argument("--profile", choices=sorted(PROFILES), required=True)
    r.add_argument("--agent", default="BSR")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--config", help="YAML/JSON file of RunConfig overrides")
    r.add_argument("--steps", type=int, default=0, help="step budget for the continuous maze")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="epsilon x alpha_sr grid over agents and seeds")
    s.add_argument("--profile", choices=sorted(PROFILES), required=True)
    s.add_argument("--agents", default="BSR")
    s.add_argument("--epsilons", default="0,0.05,0.1,0.15,0.2,0.25,0.3,0.35")
    s.add_argument("--alpha-sr", default="0.001,0.005,0.01,0.05,0.1")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--config", help="YAML/JSON file of RunConfig overrides for every cell")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="summarise saved runs below a directory")
    a.add_argument("directory")
    a.add_argument("--what", choices=("summary", "flicker", "splitter", "all"), default="all")
    a.set_defaults(func=cmd_analyze)

    o = sub.add_parser("oracle", help="check TD learning and GSR posteriors against closed forms")
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
