"""Cached experiment runs for the acceptance suite.

Every run is stored as a small JSON digest under ``.acceptance-cache/`` (or
``$BSR_ACCEPTANCE_CACHE``), keyed by the run arguments and a fingerprint of
the library code with docstrings removed, so editing prose keeps the cache
but any change to behaviour reruns the experiments.

Filling the cache ahead of time (long runs, e.g. overnight)::

    python3 tests/acceptance_lib.py exp3 --full
    python3 tests/acceptance_lib.py all
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src" / "bsr"
CACHE = Path(os.environ.get("BSR_ACCEPTANCE_CACHE", ROOT / ".acceptance-cache"))
FULL = os.environ.get("BSR_ACCEPTANCE_FULL", "") not in ("", "0")

EXP1_AGENTS = ("BSR", "SSR", "GPI", "KQ")
EXP2_AGENTS = ("BSR+ccr", "BSR+c", "SSRplus", "EW+c", "SSR", "EW", "BSR")
EXP3_AGENTS = ("BSR", "BSR-sampled", "SSRplus", "SSR", "GPI")
FORAGE_AGENTS = ("BSR", "SSR", "GPI", "EW")
YMAZE_AGENTS = ("BSR", "KQ", "GPI")
EXP3_PREFIX = 100_000


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (isinstance(body, list) and body and isinstance(body[0], ast.Expr)
                and isinstance(getattr(body[0], "value", None), ast.Constant)
                and isinstance(body[0].value.value, str)):
            node.body = body[1:] or [ast.Pass()]
    return tree


def code_fingerprint():
    h = hashlib.sha256()
    for path in sorted(SRC.rglob("*")):
        if path.suffix == ".py":
            tree = _strip_docstrings(ast.parse(path.read_text()))
            h.update(path.name.encode() + ast.dump(tree).encode())
        elif path.suffix == ".txt":
            h.update(path.name.encode() + path.read_bytes())
    return h.hexdigest()[:16]


_FP = None


def _key(profile, label, seed, overrides):
    global _FP
    if _FP is None:
        _FP = code_fingerprint()
    blob = json.dumps([_FP, profile, label, seed, sorted(overrides.items())], default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def digest(art):
    """What the criteria need from a run, small enough to cache."""
    eps = art.episodes
    out = dict(config=art.config, totals=art.totals,
               steps=[int(e["steps"]) for e in eps],
               ret=[float(e["ret"]) for e in eps],
               changed=[int(e.get("changed", 0)) for e in eps])
    for name in ("splitter_matrix", "trial_curve", "session_rho"):
        if name in art.extras:
            v = art.extras[name]
            out[name] = np.asarray(v).tolist() if name == "splitter_matrix" else v
    return out


def cached_run(profile, label, seed, **overrides):
    from bsr.harness import run_experiment

    path = CACHE / f"{profile}-{label}-{seed}-{_key(profile, label, seed, overrides)}.json"
    if path.exists():
        return json.loads(path.read_text())
    t0 = time.perf_counter()
    art = run_experiment(profile, label, seed=seed, **overrides)
    d = digest(art)
    d["seconds"] = time.perf_counter() - t0
    CACHE.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(d, default=float))
    tmp.replace(path)
    return json.loads(path.read_text())


def runs(profile, labels, n_seeds, **overrides):
    return {lab: [cached_run(profile, lab, s, **overrides) for s in range(n_seeds)]
            for lab in labels}


def exp3_steps():
    return 250_000 if FULL else EXP3_PREFIX


PLAN = {
    "exp1": lambda: runs("exp1", EXP1_AGENTS + ("GSR",), 10),
    "exp2": lambda: runs("exp2", EXP2_AGENTS, 10),
    "forage": lambda: runs("forage", FORAGE_AGENTS, 3),
    "ymaze": lambda: runs("ymaze", YMAZE_AGENTS, 3),
    "exp3": lambda: runs("exp3", EXP3_AGENTS if FULL else ("BSR", "GPI"), 5,
                         n_steps=exp3_steps()),
}


def main(argv=None):
    global FULL
    p = argparse.ArgumentParser(description="fill the acceptance cache")
    p.add_argument("what", choices=sorted(PLAN) + ["all"])
    p.add_argument("--full", action="store_true", help="full-length neural runs")
    args = p.parse_args(argv)
    FULL = FULL or args.full
    for name in (sorted(PLAN) if args.what == "all" else [args.what]):
        t0 = time.perf_counter()
        PLAN[name]()
        print(f"{name}: cached in {time.perf_counter() - t0:.0f}s", flush=True)
    return 0


if __name__ == "__main__":
    sys.path.insert(0, str(ROOT / "src"))
    sys.exit(main())
