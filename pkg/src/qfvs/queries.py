"""Build scenario-labelled concept-pair queries from per-shot tag statistics.

Scenarios, for a concept pair and a presence threshold T (a concept is
present when it is tagged in at least T shots):

  i    both present and tagged together in at least one shot
  ii   both present but never in the same shot
  iii  exactly one present
  iv   neither present
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import Query, Video

DEFAULT_COUNTS = (15, 15, 15, 1)


class InsufficientPoolError(ValueError):
    def __init__(self, shortfall):
        self.shortfall = dict(shortfall)
        detail = ", ".join(f"{k}: need {need}, have {have}" for k, (need, have) in self.shortfall.items())
        super().__init__(f"scenario pools too small ({detail})")


@dataclass(frozen=True)
class ConceptStats:
    freq: np.ndarray          # shots tagged with each concept
    cooc: np.ndarray          # shots tagged with both concepts; symmetric
    t_presence: int = 1

    @property
    def n_concepts(self):
        return len(self.freq)

    def present(self, c) -> bool:
        return self.freq[c] >= self.t_presence


def compute_stats(v: Video, n_concepts: int, t_presence: int = 1) -> ConceptStats:
    if t_presence < 1:
        raise ValueError("t_presence must be >= 1")
    tags = np.zeros((v.n_shots, n_concepts))
    for s in v.shots:
        tags[s.index, sorted(s.tags)] = 1.0
    cooc = (tags.T @ tags).astype(int)
    freq = np.diag(cooc).copy()
    return ConceptStats(freq, cooc, t_presence)


def harmonic_score(f1, f2) -> float:
    """f1*f2/(f1+f2): below min(f1, f2) and largest for large, equal inputs."""
    if f1 < 0 or f2 < 0:
        raise ValueError("frequencies must be non-negative")
    if f1 + f2 == 0:
        raise ValueError("harmonic score undefined when both frequencies are zero")
    return f1 * f2 / (f1 + f2)


def scenario_of(stats: ConceptStats, c1: int, c2: int) -> str:
    p1, p2 = stats.present(c1), stats.present(c2)
    if p1 and p2:
        return "i" if stats.cooc[c1, c2] > 0 else "ii"
    if p1 or p2:
        return "iii"
    return "iv"


def scenario_pools(stats: ConceptStats, exclude=()) -> dict:
    """Candidate pairs per scenario as ``[((c1, c2), weight), ...]``.

    Weights: co-occurrence count (i), harmonic score of the frequencies (ii),
    frequency of the present concept (iii), uniform (iv). Present concepts in
    ``exclude`` are left out of pool iii. Pools i and ii are sorted by
    descending weight.
    """
    exclude = set(exclude)
    pools = {"i": [], "ii": [], "iii": [], "iv": []}
    for c1, c2 in combinations(range(stats.n_concepts), 2):
        label = scenario_of(stats, c1, c2)
        if label == "i":
            pools["i"].append(((c1, c2), float(stats.cooc[c1, c2])))
        elif label == "ii":
            pools["ii"].append(((c1, c2), harmonic_score(stats.freq[c1], stats.freq[c2])))
        elif label == "iii":
            present = c1 if stats.present(c1) else c2
            if present not in exclude:
                pools["iii"].append(((c1, c2), float(stats.freq[present])))
        else:
            pools["iv"].append(((c1, c2), 1.0))
    for key in ("i", "ii"):
        pools[key].sort(key=lambda item: (-item[1], item[0]))
    return pools


def weighted_sample(items, k, rng):
    """Draw ``k`` distinct items with probability proportional to weight,
    renormalising after every draw."""
    items = list(items)
    weights = np.array([w for _, w in items], dtype=float)
    picked = []
    for _ in range(k):
        total = weights.sum()
        if total <= 0:
            raise ValueError("no positive weight left to sample from")
        j = int(rng.choice(len(items), p=weights / total))
        picked.append(items[j][0])
        weights[j] = 0.0
    return picked


def build_queries(v: Video, n_concepts: int, counts=DEFAULT_COUNTS, seed=0, t_presence: int = 1) -> list:
    """Sample labelled concept-pair queries for one video.

    Pool iii excludes concepts used by the sampled scenario i/ii queries; when
    that leaves too few pairs, the excluded concepts are admitted again.
    """
    counts = dict(zip(("i", "ii", "iii", "iv"), counts))
    stats = compute_stats(v, n_concepts, t_presence)
    pools = scenario_pools(stats)

    shortfall = {k: (counts[k], len(pools[k])) for k in ("i", "ii", "iv") if len(pools[k]) < counts[k]}
    if shortfall:
        raise InsufficientPoolError(shortfall)

    rng = np.random.default_rng(seed)
    chosen = {}
    for key in ("i", "ii"):
        chosen[key] = weighted_sample(pools[key], counts[key], rng)

    used = {c for key in ("i", "ii") for pair in chosen[key] for c in pair}
    pool_iii = scenario_pools(stats, exclude=used)["iii"]
    if len(pool_iii) < counts["iii"]:
        pool_iii = pools["iii"]
    if len(pool_iii) < counts["iii"]:
        raise InsufficientPoolError({"iii": (counts["iii"], len(pool_iii))})
    chosen["iii"] = weighted_sample(pool_iii, counts["iii"], rng)
    chosen["iv"] = weighted_sample(pools["iv"], counts["iv"], rng)

    out = []
    for key in ("i", "ii", "iii", "iv"):
        for pair in chosen[key]:
            out.append(Query(frozenset(pair), key, f"{v.id}/q{len(out):02d}", v.id))
    return out


def classify_query(v: Video, q: Query, n_concepts: int, t_presence: int = 1) -> str:
    if len(q.concepts) != 2:
        raise ValueError("scenario classification is defined for concept pairs only")
    c1, c2 = sorted(q.concepts)
    if c2 >= n_concepts:
        raise ValueError(f"concept index {c2} outside dictionary of size {n_concepts}")
    return scenario_of(compute_stats(v, n_concepts, t_presence), c1, c2)
