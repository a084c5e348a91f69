"""Neural-signature analyses and the small statistics they need.

Firing rates of the model are rows of successor maps, r_t(s') = M(s_t, a_t, s').
"""

from __future__ import annotations

import logging
import math

import numpy as np

log = logging.getLogger(__name__)


class UndefinedStatistic(ValueError):
    """A statistic has no value for the given input (e.g. zero variance)."""


def firing_rates(M, s, a):
    return np.array(M[s, a], copy=True)


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0.0:
        raise UndefinedStatistic("zero variance")
    return float(xc @ yc) / den


def rankdata(x):
    """Ranks starting at 1, ties receive their average rank."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    return ranks


def spearman(x, y):
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("spearman needs two equal-length samples of size >= 2")
    return pearson(rankdata(x), rankdata(y))


def one_way_anova(groups):
    """F = (SSB / df_between) / (SSW / df_within); +inf when SSW is zero."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) < 2 for g in groups):
        raise ValueError("ANOVA needs at least two groups of at least two samples")
    allx = np.concatenate(groups)
    grand = allx.mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_b = len(groups) - 1
    df_w = len(allx) - len(groups)
    if ssw == 0.0:
        return 0.0 if ssb == 0.0 else math.inf
    return float((ssb / df_b) / (ssw / df_w))


def mean_sem(x):
    x = np.asarray(x, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else math.nan, 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def zscore(x):
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0.0:
        raise UndefinedStatistic("zero variance")
    return (x - x.mean()) / sd


def flicker_trace(firing, states_actions, pre, post, trials=None):
    """Per-step z-scored similarity to the post template minus that to the pre template.

    ``firing[t]`` is the population vector at step t, ``states_actions[t]`` the
    (s, a) it was emitted at; ``pre``/``post`` are template maps indexed the
    same way. Steps whose correlation is undefined are dropped. Returns a dict
    with per-step ``z_diff``, the kept ``steps``, and, if ``trials`` labels are
    given, per-trial means under ``per_trial``.
    """
    c_pre, c_post, kept = [], [], []
    for t, (vec, (s, a)) in enumerate(zip(firing, states_actions)):
        try:
            cp = pearson(vec, pre[s, a])
            cq = pearson(vec, post[s, a])
        except UndefinedStatistic:
            continue
        c_pre.append(cp)
        c_post.append(cq)
        kept.append(t)
    out = dict(steps=np.array(kept, dtype=int), degenerate=False)
    try:
        z = zscore(c_post) - zscore(c_pre)
    except UndefinedStatistic:
        log.info("flicker trace degenerate: constant correlation series")
        out.update(z_diff=np.zeros(len(kept)), degenerate=True)
        z = out["z_diff"]
    else:
        out["z_diff"] = z
    if trials is not None and len(kept):
        lab = np.asarray(trials)[kept]
        uniq = np.unique(lab)
        out["per_trial"] = {int(u): float(z[lab == u].mean()) for u in uniq}
    return out


def trial_progress_stat(per_trial_traces, first=1, last=16):
    """Mean (and sem) over sessions of Spearman rho(trial index, per-trial z-diff).

    ``per_trial_traces`` is a list of {trial_number: mean z-diff} dicts, trials
    numbered from 1. Sessions with fewer than two usable trials are skipped.
    """
    rhos = []
    for tr in per_trial_traces:
        xs = [t for t in range(first, last + 1) if t in tr]
        if len(xs) < 2:
            continue
        try:
            rhos.append(spearman(xs, [tr[t] for t in xs]))
        except UndefinedStatistic:
            continue
    m, s = mean_sem(rhos)
    return dict(rho=m, sem=s, n=len(rhos), per_session=rhos)


def splitter_decode(vectors, labels, n_types=4):
    """Leave-one-out correlation-template decoding of trial type.

    Each vector is classified by the type whose mean vector (excluding the
    vector itself) it correlates with best. Returns the row-normalised
    confusion matrix (rows: actual type, columns: decoded type).
    """
    X = np.asarray(vectors, dtype=float)
    y = np.asarray(labels, dtype=int)
    counts = np.zeros((n_types, n_types))
    sums = np.zeros((n_types, X.shape[1]))
    ns = np.zeros(n_types)
    for t in range(n_types):
        sums[t] = X[y == t].sum(axis=0)
        ns[t] = (y == t).sum()
    for i in range(len(X)):
        scores = np.full(n_types, -np.inf)
        for t in range(n_types):
            n = ns[t] - (y[i] == t)
            if n < 1:
                continue
            tmpl = (sums[t] - (X[i] if y[i] == t else 0.0)) / n
            try:
                scores[t] = pearson(X[i], tmpl)
            except UndefinedStatistic:
                continue
        if not np.isfinite(scores).any():
            log.info("trial %d excluded from decoding: degenerate templates", i)
            continue
        best = np.flatnonzero(scores == scores.max())
        counts[y[i], best] += 1.0 / len(best)
    rows = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
