from collections import Counter
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_video
from qfvs.core import Query
from qfvs.queries import (InsufficientPoolError, build_queries, classify_query, compute_stats,
                          harmonic_score, scenario_pools, weighted_sample)
from qfvs.synth import SynthConfig, generate


def random_tag_video(rng, n_shots=30, n_concepts=10):
    tags = [rng.choice(n_concepts, int(rng.integers(0, 4)), replace=False) for _ in range(n_shots)]
    return make_video(tags), tags


def test_stats_small():
    v = make_video([[0], [0, 1], [0], [2]])
    st_ = compute_stats(v, 4)
    assert st_.freq.tolist() == [3, 1, 1, 0]
    assert st_.cooc[0, 1] == 1 and st_.cooc[1, 2] == 0 and st_.cooc[2, 3] == 0
    with pytest.raises(ValueError):
        compute_stats(v, 4, t_presence=0)


def test_stats_match_double_loop(rng):
    v, tags = random_tag_video(rng)
    st_ = compute_stats(v, 10)
    for a in range(10):
        assert st_.freq[a] == sum(a in t for t in tags)
        for b in range(10):
            both = sum(a in t and b in t for t in tags) if a != b else st_.freq[a]
            assert st_.cooc[a, b] == both == st_.cooc[b, a]
            assert st_.cooc[a, b] <= min(st_.freq[a], st_.freq[b])


def test_harmonic_score():
    assert harmonic_score(3, 6) == 2.0
    assert harmonic_score(7, 7) == 3.5
    with pytest.raises(ValueError):
        harmonic_score(0, 0)


@given(st.integers(1, 10**6), st.integers(1, 10**6))
def test_harmonic_below_min_and_symmetric(a, b):
    assert harmonic_score(a, b) < min(a, b)
    assert harmonic_score(a, b) == harmonic_score(b, a)


def test_pools_examples():
    v = make_video([[0, 1], [0, 1], [2], [3], [3]])
    pools = scenario_pools(compute_stats(v, 6))
    pairs = {k: [p for p, _ in items] for k, items in pools.items()}
    assert (0, 1) in pairs["i"] and all((0, 1) not in pairs[k] for k in ("ii", "iii", "iv"))
    assert dict(pools["ii"])[(2, 3)] == harmonic_score(1, 2)
    assert dict(pools["iii"])[(0, 4)] == 2.0
    assert pairs["iv"] == [(4, 5)]
    ii_weights = [w for _, w in pools["ii"]]
    assert ii_weights == sorted(ii_weights, reverse=True)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_pools_partition_pairs(seed, t):
    rng = np.random.default_rng(seed)
    v, _ = random_tag_video(rng, n_concepts=8)
    stats = compute_stats(v, 8, t)
    pools = scenario_pools(stats)
    seen = Counter(p for items in pools.values() for p, _ in items)
    assert set(seen) == set(combinations(range(8), 2))
    assert all(c == 1 for c in seen.values())
    assert all(stats.cooc[a, b] == 0 for (a, b), _ in pools["ii"])


def test_forced_choice():
    v = make_video([[0, 1], [2], [3]])
    qs = build_queries(v, 6, counts=(1, 0, 0, 0), seed=4)
    assert len(qs) == 1 and qs[0].concepts == frozenset({0, 1}) and qs[0].scenario == "i"


def test_insufficient_pool_reports_shortfall():
    v = make_video([[0, 1], [2]])
    with pytest.raises(InsufficientPoolError) as exc:
        build_queries(v, 4, counts=(3, 0, 0, 0))
    assert exc.value.shortfall == {"i": (3, 1)}


def test_determinism_and_conformance():
    d = generate(SynthConfig(n_videos=2, seed=3))
    for v in d.videos:
        a = build_queries(v, 20, seed=11)
        b = build_queries(v, 20, seed=11)
        assert a == b
        assert Counter(q.scenario for q in a) == {"i": 15, "ii": 15, "iii": 15, "iv": 1}
        assert len({q.concepts for q in a}) == len(a)
        for q in a:
            assert classify_query(v, q, 20) == q.scenario


def test_classify_examples():
    v = make_video([[0, 1], [2], [3]])
    assert classify_query(v, Query({0, 1}), 6) == "i"
    assert classify_query(v, Query({2, 3}), 6) == "ii"
    assert classify_query(v, Query({2, 5}), 6) == "iii"
    assert classify_query(v, Query({4, 5}), 6) == "iv"
    # presence threshold 2 makes every concept here absent
    assert classify_query(v, Query({0, 1}), 6, t_presence=2) == "iv"
    with pytest.raises(ValueError):
        classify_query(v, Query({0, 1, 2}), 6)


def test_weighted_sampling_frequencies():
    items = [("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]
    n = 10_000
    counts = Counter(weighted_sample(items, 1, np.random.default_rng(s))[0] for s in range(n))
    total = sum(w for _, w in items)
    for key, w in items:
        p = w / total
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(counts[key] - n * p) <= 3 * sigma


def test_weighted_sampling_without_replacement():
    items = [(i, float(i + 1)) for i in range(5)]
    picked = weighted_sample(items, 5, np.random.default_rng(0))
    assert sorted(picked) == list(range(5))
    with pytest.raises(ValueError):
        weighted_sample(items, 6, np.random.default_rng(0))
