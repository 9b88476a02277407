"""Synthetic query-focused summarisation datasets with planted structure.

Each video activates a subset of the dictionary. One active concept is the
video's salient ("context") concept; the rest are split into scene groups.
A Markov chain over scenes drives the shot tags, so concepts of one group
co-occur while concepts of different groups never do. Frame features are
per-frame concept indicators (each tag visible in a frame with some
probability) plus trailing pure-noise dimensions, all with Gaussian noise.
Simulated users pick query-relevant shots with probability ``p_rel`` and
salient shots with probability ``p_ctx``.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import ConceptDictionary, Dataset, Shot, Summary, Video
from .queries import DEFAULT_COUNTS, InsufficientPoolError, build_queries


@dataclass(frozen=True)
class SynthConfig:
    n_concepts: int = 20
    n_videos: int = 4
    segments_per_video: int = 12
    shots_per_segment: int = 10
    frames_per_shot: int = 8
    noise_dims: int = 6
    active_concepts: int = 16
    n_scenes: int = 5
    tag_persistence: float = 0.8
    tags_per_shot: tuple = (1, 5)
    salient_rate: float = 0.2
    visibility: float = 0.3
    noise_sigma: float = 0.1
    n_users: int = 3
    p_rel: float = 0.9
    p_ctx: float = 0.2
    query_counts: tuple = DEFAULT_COUNTS
    t_presence: int = 1
    max_attempts: int = 20
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tags_per_shot", tuple(self.tags_per_shot))
        object.__setattr__(self, "query_counts", tuple(self.query_counts))
        for name in ("tag_persistence", "salient_rate", "visibility", "p_rel", "p_ctx"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")
        for name in ("n_concepts", "n_videos", "segments_per_video", "shots_per_segment",
                     "frames_per_shot", "n_users", "n_scenes", "t_presence", "max_attempts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        lo, hi = self.tags_per_shot
        if not 1 <= lo <= hi:
            raise ValueError("tags_per_shot must be an increasing pair starting at >= 1")
        if not self.n_scenes + 1 <= self.active_concepts <= self.n_concepts:
            raise ValueError("active_concepts must cover the salient concept and one concept per scene")
        if self.noise_sigma < 0 or self.noise_dims < 0:
            raise ValueError("noise settings must be non-negative")

    @property
    def d_f(self):
        return self.n_concepts + self.noise_dims

    @property
    def shots_per_video(self):
        return self.segments_per_video * self.shots_per_segment

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "SynthConfig":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


def _scene_tags(cfg, rng):
    """Markov scene sequence and the corresponding per-shot tag sets."""
    active = rng.choice(cfg.n_concepts, size=cfg.active_concepts, replace=False)
    salient = int(active[0])
    groups = [sorted(int(c) for c in g) for g in np.array_split(active[1:], cfg.n_scenes)]
    lo, hi = cfg.tags_per_shot
    # entry rate chosen so the salient concept's stationary frequency is salient_rate
    stay = cfg.tag_persistence
    enter = 0.0 if cfg.salient_rate >= 1 else min(1.0, cfg.salient_rate * (1 - stay) / (1 - cfg.salient_rate))

    tags = []
    scene = int(rng.integers(cfg.n_scenes))
    prev_scene_tags, has_salient = [], rng.random() < cfg.salient_rate
    for t in range(cfg.shots_per_video):
        if t > 0:
            if rng.random() >= cfg.tag_persistence and cfg.n_scenes > 1:
                others = [s for s in range(cfg.n_scenes) if s != scene]
                scene = int(rng.choice(others))
                prev_scene_tags = []
            has_salient = rng.random() < (stay if has_salient else enter)
        group = groups[scene]
        m = int(rng.integers(lo, hi + 1))
        want = max(m - 1, 0) if has_salient else m
        want = min(want, len(group))
        kept = [c for c in prev_scene_tags if rng.random() < cfg.tag_persistence][:want]
        fresh = [c for c in group if c not in kept]
        extra = rng.choice(fresh, size=want - len(kept), replace=False).tolist() if want > len(kept) else []
        scene_tags = sorted(kept + [int(c) for c in extra])
        if not scene_tags and not has_salient:
            scene_tags = [int(rng.choice(group))]
        prev_scene_tags = scene_tags
        tags.append(frozenset(scene_tags + ([salient] if has_salient else [])))
    return salient, tags


def _frames(cfg, tags, rng):
    K = cfg.frames_per_shot
    out = np.zeros((K, cfg.d_f))
    for c in sorted(tags):
        out[:, c] = rng.random(K) < cfg.visibility
    return out + cfg.noise_sigma * rng.standard_normal(out.shape)


def _user_summary(cfg, video, query, salient, user, rng):
    picked = []
    for shot in video.shots:
        relevant = bool(shot.tags & query.concepts)
        contextual = salient in shot.tags
        take_rel = relevant and rng.random() < cfg.p_rel
        take_ctx = contextual and rng.random() < cfg.p_ctx
        if take_rel or take_ctx:
            picked.append(shot.index)
    return Summary(video.id, tuple(picked), query.id, user)


def generate(cfg: SynthConfig) -> Dataset:
    dictionary = ConceptDictionary(tuple(f"c{i:02d}" for i in range(cfg.n_concepts)))
    root = np.random.SeedSequence(cfg.seed)
    videos, queries, users = [], [], []
    for vi, child in enumerate(root.spawn(cfg.n_videos)):
        rng = np.random.default_rng(child)
        vid = f"v{vi + 1}"
        for attempt in range(cfg.max_attempts):
            salient, tags = _scene_tags(cfg, rng)
            shots = tuple(Shot(i, t, _frames(cfg, t, rng)) for i, t in enumerate(tags))
            video = Video(vid, shots, cfg.shots_per_segment)
            try:
                vq = build_queries(video, cfg.n_concepts, cfg.query_counts,
                                   seed=int(rng.integers(2**31)), t_presence=cfg.t_presence)
            except InsufficientPoolError as exc:
                last = exc
                continue
            break
        else:
            raise InsufficientPoolError(last.shortfall)
        videos.append(video)
        for q in vq:
            queries.append(q)
            for u in range(cfg.n_users):
                users.append(_user_summary(cfg, video, q, salient, f"u{u + 1}", rng))
    return Dataset(dictionary, tuple(videos), tuple(queries), tuple(users))
