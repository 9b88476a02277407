"""Acceptance criteria 1-12, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line (visible with ``-s``)
and the lines are repeated in the terminal summary.
"""

from collections import Counter
from itertools import combinations, product

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_video
from oracles import all_subsets, permutation_matching_weight
from qfvs.core import Query, Summary, segments
from qfvs.metric import evaluate, iou, max_weight_matching
from qfvs.model import Kernel, cond_prob, init_params, seq_log_likelihood, summarize
from qfvs.oracle import attach_oracles, build_oracle, total_f1
from qfvs.perturb import curve_experiment, n_perturbed, perturb_delete
from qfvs.queries import classify_query, harmonic_score
from qfvs.synth import SynthConfig, generate
from qfvs.trainer import (GradCheckConfig, TrainConfig, evaluate_model, gradient_check, initial_params,
                          split_leave_one_out, subset_by_videos, train)

SEEDS = range(5)
FRACTIONS = [round(0.1 * i, 1) for i in range(10)]
# model size and step size used for the training criteria (see README)
ACCEPT_TRAIN = dict(h=16, h_o=16, h_L=16, epochs=30, lr=0.05, init_scale=1.0)


def report(n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def default_data():
    """Default synthetic datasets with oracles, one per seed."""
    return {s: attach_oracles(generate(SynthConfig(seed=s)))[0] for s in SEEDS}


@pytest.fixture(scope="module")
def trained(default_data):
    """Test F1 of untrained, trained and no-attention models per seed."""
    out = {}
    for s in SEEDS:
        tr, va, te = split_leave_one_out(default_data[s], "v4", "v3")
        full_cfg = TrainConfig(seed=s, **ACCEPT_TRAIN)
        noatt_cfg = TrainConfig(seed=s, no_attention=True, **ACCEPT_TRAIN)
        untrained = evaluate_model(initial_params(tr, full_cfg), te)[2]
        full, _ = train(tr, va, full_cfg)
        noatt, _ = train(tr, va, noatt_cfg)
        out[s] = (untrained, evaluate_model(full, te)[2], evaluate_model(noatt, te)[2])
    return out


def test_criterion_01_iou_example():
    car, street, tree, sign = range(4)
    value = iou({car, street}, {street, tree, sign})
    report(1, value == 0.25, f"IOU = {value}")


def test_criterion_02_matching_optimality():
    # dyadic weights (k/64) make every sum exact, so equality is exact
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(200):
        r, c = (int(x) for x in rng.integers(1, 8, size=2))
        w = rng.integers(0, 65, size=(r, c)) / 64.0
        w[rng.random((r, c)) < 0.3] = 0.0
        mismatches += max_weight_matching(w)[1] != permutation_matching_weight(w)
    report(2, mismatches == 0, f"{mismatches}/200 matrices differ from the permutation optimum")


def test_criterion_03_deletion_linearity():
    n = 100
    rng = np.random.default_rng(3)
    v = make_video([rng.choice(8, int(rng.integers(1, 4)), replace=False) for _ in range(n)])
    ref = Summary("v", tuple(range(n)))
    bad = 0
    for f in FRACTIONS:
        for trial in range(20):
            rep = evaluate(perturb_delete(ref, f, trial), ref, v)
            bad += rep.precision != 1.0 or rep.recall != (n - n_perturbed(f, n)) / n
    report(3, bad == 0, f"{bad} of {20 * len(FRACTIONS)} trials off the line")


def test_criterion_04_replacement_monotone(default_data):
    d = default_data[0]
    videos = {v.id: v for v in d.videos}
    refs = [s for s in d.user_summaries if 5 <= len(s) <= videos[s.video_id].n_shots // 2][:6]
    rows = curve_experiment(refs, videos, FRACTIONS, 100, mode="replace", seed=4)
    f1 = [r["mean_f1"] for r in rows]
    ok = all(b <= a for a, b in zip(f1, f1[1:]))
    report(4, ok, "mean F1 by fraction " + ", ".join(f"{x:.3f}" for x in f1))


def test_criterion_05_dpp_normalisation():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 11))
        rank = int(rng.integers(1, n + 1))
        phi = rng.standard_normal((n, rank))
        L = phi @ phi.T + 1e-6 * np.eye(n)
        prev = tuple(int(i) for i in rng.choice(n, int(rng.integers(0, n)), replace=False))
        seg = [i for i in range(n) if i not in prev]
        k = Kernel(L, tuple(range(n)))
        total = sum(cond_prob(k, y, prev) for y in all_subsets(seg))
        worst = max(worst, abs(total - 1.0))
    # chain version: T = 2 segments of 3 shots
    chain_worst = 0.0
    for seed in range(3):
        r = np.random.default_rng(100 + seed)
        v = make_video([[]] * 6, segment_size=3, frames=[r.standard_normal((3, 5)) for _ in range(6)])
        p = init_params(5, 4, 4, 4, 4, lam=1e-6, seed=seed, scale=1.0)
        q = Query({1})
        total = sum(np.exp(seq_log_likelihood(p, v, q, Summary(v.id, tuple(i for i in range(6) if m[i]))))
                    for m in product([0, 1], repeat=6))
        chain_worst = max(chain_worst, abs(total - 1.0))
    ok = worst <= 1e-9 and chain_worst <= 1e-8
    report(5, ok, f"max |sum - 1| = {worst:.2e} (conditional), {chain_worst:.2e} (chain)")


def test_criterion_06_gradient_check():
    errors = [gradient_check(GradCheckConfig(), seed)["max_rel_error"] for seed in range(20)]
    report(6, max(errors) <= 1e-4, f"max relative error {max(errors):.2e} over 20 instances")


def test_criterion_07_oracle_correctness(default_data):
    # greedy monotonicity on every synthetic query-video pair
    violations = 0
    d = default_data[0]
    for q in d.queries:
        v = d.video(q.video)
        refs = d.users_for(q.id)
        _, trace = build_oracle(refs, v)
        f1s = [total_f1(trace.initial.shots, refs, v) / len(refs)] + [s.mean_f1 for s in trace.steps]
        violations += any(b <= a for a, b in zip(f1s, f1s[1:]))
    # near-optimality on pools of at most 10 shots, averaged over 50 instances;
    # greedy is a heuristic, so individual instances may fall further behind
    rng = np.random.default_rng(7)
    gaps = []
    while len(gaps) < 50:
        n = 14
        v = make_video([rng.choice(6, int(rng.integers(1, 4)), replace=False) for _ in range(n)])
        refs = [Summary("v", tuple(int(i) for i in rng.choice(n, int(rng.integers(1, 5)), replace=False)))
                for _ in range(3)]
        pool = sorted(set().union(*(r.shots for r in refs)))
        if len(pool) > 10:
            continue
        final, _ = build_oracle(refs, v)
        best = max(total_f1(s, refs, v) for s in all_subsets(pool)) / 3
        gaps.append(best - total_f1(final.shots, refs, v) / 3)
    ok = violations == 0 and np.mean(gaps) <= 0.05
    report(7, ok, f"{violations} monotonicity violations over {len(d.queries)} pairs; "
                  f"mean gap to exhaustive {np.mean(gaps):.4f} over 50 pools "
                  f"(worst single pool {max(gaps):.4f}, {sum(g > 0.05 for g in gaps)} above 0.05)")


def test_criterion_08_oracle_agreement(default_data):
    oracle_f1, inter_f1, pairs = [], [], 0
    for d in default_data.values():
        for q in d.queries:
            v = d.video(q.video)
            users = d.users_for(q.id)
            oracle = d.oracle_for(q.id)
            oracle_f1.extend(evaluate(oracle, u, v).f1 for u in users)
            inter_f1.extend(evaluate(a, b, v).f1 for a, b in combinations(users, 2))
            pairs += 1
    o, u = float(np.mean(oracle_f1)), float(np.mean(inter_f1))
    report(8, pairs >= 50 and o >= u, f"oracle-vs-user F1 {o:.3f} vs inter-user F1 {u:.3f} over {pairs} pairs")


def test_criterion_09_query_builder(default_data):
    d = default_data[0]
    counts_ok = all(Counter(q.scenario for q in d.queries_for(v.id)) == {"i": 15, "ii": 15, "iii": 15, "iv": 1}
                    for v in d.videos)
    labels_ok = all(classify_query(d.video(q.video), q, len(d.dictionary)) == q.scenario for q in d.queries)
    harmonic_ok = harmonic_score(3, 6) == 2 and all(harmonic_score(f, f) == f / 2 for f in range(1, 50))
    report(9, counts_ok and labels_ok and harmonic_ok,
           f"counts {counts_ok}, labels {labels_ok}, harmonic {harmonic_ok}")


def test_criterion_10_training_efficacy(trained, default_data):
    untrained = np.mean([t[0] for t in trained.values()])
    full = np.mean([t[1] for t in trained.values()])
    # full-batch descent on a two-pair toy set
    tr = subset_by_videos(default_data[0], ["v1"])
    keep = {q.id for q in tr.queries[:2]}
    toy = tr.replace(queries=tr.queries[:2],
                     user_summaries=tuple(s for s in tr.user_summaries if s.query_id in keep),
                     oracle_summaries=tuple(s for s in tr.oracle_summaries if s.query_id in keep))
    _, hist = train(toy, subset_by_videos(toy, []),
                    TrainConfig(lr=1e-3, epochs=50, batch_size=0, clip_norm=0.0, h=16, h_o=16, h_L=16))
    descent = all(b >= a for a, b in zip(hist.train_ll, hist.train_ll[1:]))
    ok = full - untrained >= 0.15 and descent
    report(10, ok, f"test F1 trained {full:.3f} vs untrained {untrained:.3f} (5 seeds); "
                   f"full-batch descent {'holds' if descent else 'violated'}")


def test_criterion_11_ablation_direction(trained):
    full = np.mean([t[1] for t in trained.values()])
    noatt = np.mean([t[2] for t in trained.values()])
    report(11, noatt <= full, f"test F1 no-attention {noatt:.3f} vs full {full:.3f} (5 seeds)")


def brute_segment_choice(L, prev, seg):
    best, best_val = (), -np.inf
    for y in all_subsets(seg):
        idx = list(prev) + list(y)
        sub = L[np.ix_(idx, idx)]
        val = np.log(max(np.linalg.det(sub), 0.0)) if idx else 0.0
        if val > best_val:
            best, best_val = tuple(y), val
    return best


def test_criterion_12_map_exactness():
    rng = np.random.default_rng(12)
    mismatches, steps = 0, 0
    for trial in range(100):
        size = int(rng.integers(1, 9))
        n = size * int(rng.integers(1, 4)) - int(rng.integers(0, size))
        frames = [rng.standard_normal((3, 5)) for _ in range(n)]
        v = make_video([[]] * n, segment_size=size, frames=frames)
        p = init_params(5, 4, 4, 4, int(rng.integers(2, 7)), lam=1e-3, seed=trial, scale=2.0)
        q = Query({int(rng.integers(4))})
        chosen = summarize(p, v, q)
        # rebuild the kernel features independently of the inference path
        qv = np.zeros(4)
        qv[list(q.concepts)] = 1.0
        phi = []
        for f in frames:
            z = (p.C @ qv) @ (p.A @ f.T)
            att = np.exp(z - z.max())
            att /= att.sum()
            phi.append(p.D @ (att @ (p.B @ f.T).T))
        phi = np.array(phi)
        prev = ()
        for seg, got in zip(segments(v), chosen):
            ground = list(prev) + list(seg)
            L = phi[ground] @ phi[ground].T + p.lam * np.eye(len(ground))
            pick = brute_segment_choice(L, range(len(prev)), range(len(prev), len(ground)))
            mismatches += tuple(ground[i] for i in pick) != tuple(got)
            steps += 1
            prev = tuple(got)
    report(12, mismatches == 0, f"{mismatches} of {steps} segment choices differ from enumeration")
