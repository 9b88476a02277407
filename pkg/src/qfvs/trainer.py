"""Likelihood training, leave-one-video-out splits and gradient checking."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import Dataset, Query, Shot, Summary, Video
from .metric import evaluate_multi
from .model import (PARAM_NAMES, ModelParams, grad_log_likelihood, init_params,
                    selection_to_summary, seq_log_likelihood, summarize)
from .oracle import build_oracle

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    epochs: int = 50
    batch_size: int = 4          # 0 means full batch
    h: int = 128
    h_o: int = 128
    h_L: int = 128
    lam: float = 1e-6
    init_scale: float = 0.1
    seed: int = 0
    no_attention: bool = False
    no_emb_D: bool = False
    clip_norm: float = 5.0       # 0 disables clipping
    target: str = "oracle"       # "oracle" or "user"
    oracle_pool: str = "union"

    def __post_init__(self):
        for name in ("lr", "epochs", "h", "h_o", "h_L", "init_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 0 or self.clip_norm < 0 or self.lam < 0:
            raise ValueError("batch_size, clip_norm and lam must be non-negative")
        if self.target not in ("oracle", "user"):
            raise ValueError(f"unknown training target {self.target!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class TrainHistory:
    train_ll: list = field(default_factory=list)
    val_precision: list = field(default_factory=list)
    val_recall: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    selected_epoch: int = 0

    def rows(self):
        for e, ll in enumerate(self.train_ll):
            yield {"epoch": e + 1, "train_ll": ll,
                   "val_precision": self.val_precision[e] if e < len(self.val_precision) else "",
                   "val_recall": self.val_recall[e] if e < len(self.val_recall) else "",
                   "val_f1": self.val_f1[e] if e < len(self.val_f1) else ""}

    def write_csv(self, path):
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "train_ll", "val_precision", "val_recall", "val_f1"],
                               lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows())


# -- splits ----------------------------------------------------------------

def subset_by_videos(d: Dataset, video_ids) -> Dataset:
    keep = set(video_ids)
    queries = tuple(q for q in d.queries if q.video in keep)
    qids = {q.id for q in queries}
    oracles = None if d.oracle_summaries is None else tuple(
        s for s in d.oracle_summaries if s.query_id in qids)
    return Dataset(d.dictionary, tuple(v for v in d.videos if v.id in keep), queries,
                   tuple(s for s in d.user_summaries if s.query_id in qids), oracles)


def split_leave_one_out(d: Dataset, test_video: str, val_video: str):
    ids = [v.id for v in d.videos]
    if len(ids) < 3:
        raise ValueError("leave-one-out splitting needs at least 3 videos")
    for vid in (test_video, val_video):
        if vid not in ids:
            raise ValueError(f"unknown video {vid!r}")
    if test_video == val_video:
        raise ValueError("test and validation videos must differ")
    train = [i for i in ids if i not in (test_video, val_video)]
    return subset_by_videos(d, train), subset_by_videos(d, [val_video]), subset_by_videos(d, [test_video])


def rotations(d: Dataset):
    """(test, val) pairs taking each video once as test; val is the next video."""
    ids = [v.id for v in d.videos]
    return [(ids[i], ids[(i + 1) % len(ids)]) for i in range(len(ids))]


# -- training --------------------------------------------------------------

def training_pairs(d: Dataset, target="oracle", pool="union"):
    pairs = []
    for q in d.queries:
        v = d.video(q.video)
        users = d.users_for(q.id)
        if target == "user":
            pairs.extend((v, q, s) for s in users)
            continue
        oracle = d.oracle_for(q.id)
        if oracle is None:
            if not users:
                continue
            oracle, _ = build_oracle(users, v, pool)
        pairs.append((v, q, oracle))
    return pairs


def evaluate_model(p: ModelParams, d: Dataset, mode="count"):
    """Mean (precision, recall, F1) of MAP summaries against the user summaries."""
    reports = []
    for q in d.queries:
        users = d.users_for(q.id)
        if not users:
            continue
        v = d.video(q.video)
        sys = selection_to_summary(v, summarize(p, v, q), q.id)
        reports.append(evaluate_multi(sys, users, v, mode))
    if not reports:
        return 0.0, 0.0, 0.0
    return tuple(float(np.mean([getattr(r, k) for r in reports])) for k in ("precision", "recall", "f1"))


def _frame_dims(d: Dataset):
    for v in d.videos:
        if not v.has_frames:
            raise TrainingError(f"video {v.id!r} has no frame features")
    shapes = {v.frames.shape[1:] for v in d.videos}
    if len(shapes) != 1:
        raise TrainingError(f"inconsistent frame shapes across videos: {sorted(shapes)}")
    return shapes.pop()


def initial_params(d: Dataset, cfg: TrainConfig) -> ModelParams:
    _, d_f = _frame_dims(d)
    return init_params(d_f, len(d.dictionary), cfg.h, cfg.h_o, cfg.h_L, cfg.lam, cfg.seed, cfg.init_scale,
                       attention=not cfg.no_attention, use_D=not cfg.no_emb_D)


def batch_gradient(p: ModelParams, batch):
    """Mean log-likelihood and mean gradient over (video, query, summary) pairs."""
    total = 0.0
    grads = {k: np.zeros_like(a) for k, a in p.arrays().items()}
    for v, q, s in batch:
        ll, g = grad_log_likelihood(p, v, q, s)
        total += ll
        for k in grads:
            grads[k] += g[k]
    n = len(batch)
    return total / n, {k: g / n for k, g in grads.items()}


def sgd_step(p: ModelParams, grads, lr, clip_norm=0.0) -> ModelParams:
    """Ascent step on the log-likelihood with global-norm clipping."""
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    scale = lr
    if clip_norm > 0 and norm > clip_norm:
        scale = lr * clip_norm / norm
    return p.replace(**{k: getattr(p, k) + scale * g for k, g in grads.items()})


def train(d_train: Dataset, d_val: Dataset, cfg: TrainConfig = TrainConfig(), params=None):
    """Minibatch SGD on the training log-likelihood; keeps the epoch with the
    best validation F1 (earliest on ties)."""
    pairs = training_pairs(d_train, cfg.target, cfg.oracle_pool)
    if not pairs:
        raise TrainingError("no training pairs")
    p = params if params is not None else initial_params(d_train, cfg)
    rng = np.random.default_rng(cfg.seed)
    history = TrainHistory()
    best, best_f1 = p, -1.0
    size = cfg.batch_size or len(pairs)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(pairs)) if size < len(pairs) else np.arange(len(pairs))
        lls = []
        for b, start in enumerate(range(0, len(pairs), size)):
            batch = [pairs[i] for i in order[start:start + size]]
            ll, grads = batch_gradient(p, batch)
            if not np.isfinite(ll) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite log-likelihood at epoch {epoch + 1}, batch {b + 1}")
            lls.extend([ll] * len(batch))
            p = sgd_step(p, grads, cfg.lr, cfg.clip_norm)
        history.train_ll.append(float(np.mean(lls)))
        if d_val.queries:
            prec, rec, f1 = evaluate_model(p, d_val)
            history.val_precision.append(prec)
            history.val_recall.append(rec)
            history.val_f1.append(f1)
            if f1 > best_f1:
                best, best_f1, history.selected_epoch = p, f1, epoch + 1
        else:
            best, history.selected_epoch = p, epoch + 1
        log.info("epoch %d train_ll %.4f val_f1 %s", epoch + 1, history.train_ll[-1],
                 history.val_f1[-1] if history.val_f1 else "-")
    return best, history


# -- gradient check --------------------------------------------------------

@dataclass(frozen=True)
class GradCheckConfig:
    d_f: int = 5
    K: int = 3
    h: int = 4
    h_o: int = 4
    h_L: int = 4
    d_q: int = 6
    n_shots: int = 6
    segment_size: int = 3
    max_per_segment: int = 2
    lam: float = 1e-6
    scale: float = 1.0
    step: float = 1e-5
    no_attention: bool = False
    no_emb_D: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "GradCheckConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown gradcheck config keys: {sorted(unknown)}")
        return cls(**raw)


def random_instance(cfg: GradCheckConfig, seed):
    """Random params, video, query and summary. At most ``max_per_segment``
    shots are selected per segment so every selected minor stays within the
    kernel rank."""
    rng = np.random.default_rng(seed)
    shots = tuple(Shot(i, (), rng.standard_normal((cfg.K, cfg.d_f))) for i in range(cfg.n_shots))
    v = Video("gradcheck", shots, cfg.segment_size)
    p = init_params(cfg.d_f, cfg.d_q, cfg.h, cfg.h_o, cfg.h_L, cfg.lam, int(rng.integers(2**31)), cfg.scale,
                    attention=not cfg.no_attention, use_D=not cfg.no_emb_D)
    # uniform entries scaled to unit variance keep the kernel well away from the jitter
    p = p.replace(**{k: a * np.sqrt(3.0) * np.sqrt(a.shape[1]) for k, a in p.arrays().items()})
    n_q = int(rng.integers(1, 3))
    q = Query(frozenset(int(c) for c in rng.choice(cfg.d_q, n_q, replace=False)))
    picked = []
    for start in range(0, cfg.n_shots, cfg.segment_size):
        seg = np.arange(start, min(start + cfg.segment_size, cfg.n_shots))
        k = int(rng.integers(0, min(cfg.max_per_segment, len(seg)) + 1))
        picked.extend(int(i) for i in rng.choice(seg, k, replace=False))
    return p, v, q, Summary(v.id, tuple(picked))


def relative_error(a, b, floor=1e-6):
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_difference_grads(p: ModelParams, v, q, s, step=1e-5):
    out = {}
    for name, arr in p.arrays().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus, minus = arr.copy(), arr.copy()
            plus[idx] += step
            minus[idx] -= step
            g[idx] = (seq_log_likelihood(p.replace(**{name: plus}), v, q, s)
                      - seq_log_likelihood(p.replace(**{name: minus}), v, q, s)) / (2 * step)
        out[name] = g
    return out


def gradient_check(cfg: GradCheckConfig = GradCheckConfig(), seed=0) -> dict:
    """Compare analytic gradients with central differences on every entry."""
    p, v, q, s = random_instance(cfg, seed)
    _, analytic = grad_log_likelihood(p, v, q, s)
    numeric = finite_difference_grads(p, v, q, s, cfg.step)
    per = {k: float(np.max(relative_error(analytic[k], numeric[k]))) for k in analytic}
    return {"seed": seed, "max_rel_error": max(per.values()), "per_matrix": per}
