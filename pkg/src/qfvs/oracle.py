"""Greedy aggregation of several user summaries into one oracle summary."""

from __future__ import annotations

from dataclasses import dataclass

from .core import Summary, Video
from .metric import evaluate

POOLS = ("union", "all")


@dataclass(frozen=True)
class OracleStep:
    shot: int
    gain: float
    mean_f1: float


@dataclass(frozen=True)
class OracleTrace:
    initial: Summary
    steps: tuple
    final: Summary

    def as_record(self) -> dict:
        return {
            "query": self.final.query_id,
            "initial": list(self.initial.shots),
            "steps": [{"shot": s.shot, "gain": s.gain, "mean_f1": s.mean_f1} for s in self.steps],
            "final": list(self.final.shots),
        }


def _same_video(refs):
    refs = list(refs)
    if not refs:
        raise ValueError("need at least one reference summary")
    videos = {r.video_id for r in refs}
    if len(videos) != 1:
        raise ValueError(f"reference summaries span several videos: {sorted(videos)}")
    return refs


def common_shots(refs) -> Summary:
    refs = _same_video(refs)
    shared = set(refs[0].shots)
    for r in refs[1:]:
        shared &= set(r.shots)
    return Summary(refs[0].video_id, tuple(shared), refs[0].query_id, "oracle")


def total_f1(shots, refs, v: Video) -> float:
    s = Summary(v.id, tuple(shots))
    return sum(evaluate(s, r, v).f1 for r in refs)


def marginal_gain(y0: Summary, i: int, refs, v: Video) -> float:
    """Change in summed F1 against ``refs`` from adding shot ``i`` to ``y0``."""
    refs = _same_video(refs)
    if i in y0:
        raise ValueError(f"shot {i} is already in the summary")
    return total_f1(y0.shots + (i,), refs, v) - total_f1(y0.shots, refs, v)


def candidate_pool(refs, v: Video, pool: str = "union") -> list:
    if pool == "union":
        return sorted(set().union(*(set(r.shots) for r in refs)))
    if pool == "all":
        return list(range(v.n_shots))
    raise ValueError(f"unknown pool policy {pool!r}; expected one of {POOLS}")


def build_oracle(refs, v: Video, pool: str = "union"):
    """Start from the shots common to all references and greedily add the
    candidate with the largest positive gain (ties to the smaller index)."""
    refs = _same_video(refs)
    if refs[0].video_id != v.id:
        raise ValueError(f"references belong to {refs[0].video_id!r}, not {v.id!r}")
    y0 = common_shots(refs)
    current = list(y0.shots)
    score = total_f1(current, refs, v)
    candidates = [c for c in candidate_pool(refs, v, pool) if c not in y0]
    steps = []
    while candidates:
        best, best_score = None, None
        for c in candidates:
            s = total_f1(current + [c], refs, v)
            if best_score is None or s > best_score:
                best, best_score = c, s
        gain = best_score - score
        if gain <= 0:
            break
        current.append(best)
        candidates.remove(best)
        score = best_score
        steps.append(OracleStep(best, gain, score / len(refs)))
    final = Summary(v.id, tuple(current), refs[0].query_id, "oracle")
    return final, OracleTrace(y0, tuple(steps), final)


def attach_oracles(d, pool: str = "union"):
    """Return ``(dataset with oracle_summaries, traces)``, one oracle per query
    that has user summaries."""
    oracles, traces = [], []
    for q in d.queries:
        users = d.users_for(q.id)
        if not users:
            continue
        final, trace = build_oracle(users, d.video(q.video), pool)
        oracles.append(final)
        traces.append(trace)
    return d.replace(oracle_summaries=tuple(oracles)), traces
