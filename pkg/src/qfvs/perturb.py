"""Random deletion/replacement of summary shots and the resulting metric curves."""

from __future__ import annotations

import csv
import io
import math

import numpy as np

from .core import Summary
from .metric import evaluate

CSV_COLUMNS = ("fraction", "mean_precision", "mean_recall", "mean_f1", "trials")


def n_perturbed(fraction: float, n: int) -> int:
    """round(fraction * n), halves rounded away from zero."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    return min(n, int(math.floor(fraction * n + 0.5)))


def perturb_delete(s: Summary, fraction: float, seed) -> Summary:
    k = n_perturbed(fraction, len(s))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(s))
    drop = {s.shots[i] for i in order[:k]}
    return s.with_shots(i for i in s.shots if i not in drop)


def perturb_replace(s: Summary, fraction: float, pool, seed) -> Summary:
    """Swap round(fraction * n) shots of ``s`` for distinct draws from ``pool``
    minus ``s``."""
    k = n_perturbed(fraction, len(s))
    outside = sorted(set(pool) - set(s.shots))
    if len(outside) < k:
        raise ValueError(f"replacement pool has {len(outside)} shots, {k} needed")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(s))
    incoming = rng.permutation(len(outside))
    drop = {s.shots[i] for i in order[:k]}
    kept = [i for i in s.shots if i not in drop]
    return s.with_shots(kept + [outside[j] for j in incoming[:k]])


def curve_experiment(refs, videos, fractions, trials, mode="delete", seed=0, pool=None, metric_mode="count"):
    """Mean P/R/F1 of perturbed copies against their originals, per fraction.

    ``refs`` are summaries and ``videos`` maps video id to Video. Trial ``t``
    on reference ``r`` uses the same random stream at every fraction, so the
    perturbed sets are nested across fractions. Empty references are skipped.
    ``pool`` maps a video id to
    replacement candidates; by default all shots of the video.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("delete", "replace"):
        raise ValueError(f"unknown perturbation mode {mode!r}")
    # an empty reference has nothing to perturb and scores F1 = 0 against itself
    refs = [r for r in refs if len(r)]
    if not refs:
        raise ValueError("no non-empty reference summaries to perturb")
    seeds = np.random.SeedSequence(seed).generate_state(len(refs) * trials).reshape(len(refs), trials)
    rows = []
    for f in fractions:
        values = ([], [], [])
        for r, ref in enumerate(refs):
            v = videos[ref.video_id]
            for t in range(trials):
                s = int(seeds[r, t])
                if mode == "delete":
                    out = perturb_delete(ref, f, s)
                else:
                    candidates = pool[v.id] if pool is not None else range(v.n_shots)
                    out = perturb_replace(ref, f, candidates, s)
                rep = evaluate(out, ref, v, metric_mode)
                for acc, x in zip(values, (rep.precision, rep.recall, rep.f1)):
                    acc.append(x)
        # exact summation keeps constant columns (e.g. deletion recall) exact
        totals = [math.fsum(acc) / len(acc) for acc in values]
        rows.append({"fraction": float(f), "mean_precision": totals[0], "mean_recall": totals[1],
                     "mean_f1": totals[2], "trials": trials})
    return rows


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in columns})
    return buf.getvalue()
