"""Memory-network parameterised sequential DPP summariser.

Each shot's K frame features are attended by the query: ``u = C q``,
``m_k = A f_k``, ``p = softmax(u . m_k)``, ``o = sum_k p_k B f_k``. The DPP
kernel over shots is the Gram matrix of ``D o`` plus a small jitter ``lam * I``.
A video is cut into segments; the selection in segment t is drawn from a DPP
conditioned on the selection made in segment t-1.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .core import DatasetError, Query, Summary, Video, segments
from .linalg import batched_logdet, inverse, logdet

PARAM_NAMES = ("A", "B", "C", "D")
EXACT_MAP_LIMIT = 12


class DegenerateKernelError(ArithmeticError):
    """A selection has zero probability (singular principal minor)."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Embedding matrices A (h x d_f), B (h_o x d_f), C (h x d_q), D (h_L x h_o).

    ``attention=False`` replaces the attention weights by 1/K and appends
    ``u`` to the shot representation, so D is h_L x (h_o + h). ``use_D=False``
    drops D and uses ``o`` directly as the kernel feature; D is then None.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray]
    lam: float = 1e-6
    attention: bool = True
    use_D: bool = True
    seed: Optional[int] = None

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.array(value, dtype=float)
            if arr.ndim != 2 or not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} must be a finite matrix")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.lam < 0:
            raise ValueError("jitter must be non-negative")
        h, d_f = self.A.shape
        if self.B.shape[1] != d_f:
            raise ValueError(f"B has {self.B.shape[1]} input columns, A has {d_f}")
        if self.C.shape[0] != h:
            raise ValueError(f"C maps to {self.C.shape[0]} dims, A to {h}")
        if self.use_D:
            if self.D is None or self.D.shape[1] != self.o_dim:
                raise ValueError(f"D must have {self.o_dim} columns")
        elif self.D is not None:
            raise ValueError("D must be None when use_D is False")

    @property
    def d_f(self):
        return self.A.shape[1]

    @property
    def d_q(self):
        return self.C.shape[1]

    @property
    def h(self):
        return self.A.shape[0]

    @property
    def h_o(self):
        return self.B.shape[0]

    @property
    def o_dim(self):
        return self.h_o if self.attention else self.h_o + self.h

    @property
    def h_L(self):
        return self.D.shape[0] if self.use_D else self.o_dim

    def arrays(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES if getattr(self, k) is not None}

    def replace(self, **arrays) -> "ModelParams":
        kw = dict(A=self.A, B=self.B, C=self.C, D=self.D, lam=self.lam,
                  attention=self.attention, use_D=self.use_D, seed=self.seed)
        kw.update(arrays)
        return ModelParams(**kw)


def init_params(d_f, d_q, h=128, h_o=128, h_L=128, lam=1e-6, seed=0, scale=0.1,
                attention=True, use_D=True) -> ModelParams:
    """Uniform entries in [-scale, scale] divided by sqrt(fan-in)."""
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        return rng.uniform(-scale, scale, size=(rows, cols)) / np.sqrt(cols)

    A = draw(h, d_f)
    B = draw(h_o, d_f)
    C = draw(h, d_q)
    o_dim = h_o if attention else h_o + h
    D = draw(h_L, o_dim) if use_D else None
    return ModelParams(A, B, C, D, lam, attention, use_D, seed)


@dataclass(frozen=True, eq=False)
class ShotEncoding:
    o: np.ndarray
    attention: np.ndarray


@dataclass(frozen=True, eq=False)
class Kernel:
    L: np.ndarray
    ground_set: tuple

    def positions(self, shots) -> list:
        where = {s: i for i, s in enumerate(self.ground_set)}
        try:
            return sorted(where[s] for s in shots)
        except KeyError as exc:
            raise ValueError(f"shot {exc.args[0]} is not in the kernel's ground set") from None


# -- encoder ---------------------------------------------------------------

def query_vector(q, d_q: int) -> np.ndarray:
    if isinstance(q, Query):
        out = np.zeros(d_q)
        for c in q.concepts:
            if not 0 <= c < d_q:
                raise ValueError(f"query concept {c} outside query dimension {d_q}")
            out[c] = 1.0
        return out
    out = np.asarray(q, dtype=float)
    if out.shape != (d_q,):
        raise ValueError(f"query vector must have shape ({d_q},), got {out.shape}")
    return out


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _forward(p: ModelParams, frames: np.ndarray, q_vec: np.ndarray) -> dict:
    """Encode an (n, K, d_f) frame stack. Keeps intermediates for backprop."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[2] != p.d_f or frames.shape[1] == 0:
        raise ValueError(f"frames must have shape (n, K>0, {p.d_f}), got {frames.shape}")
    if not np.all(np.isfinite(frames)) or not np.all(np.isfinite(q_vec)):
        raise ValueError("non-finite frames or query")
    n, K, _ = frames.shape
    u = p.C @ q_vec
    if p.attention:
        M = frames @ p.A.T
        att = softmax(M @ u, axis=1)
    else:
        M = None
        att = np.full((n, K), 1.0 / K)
    Cm = frames @ p.B.T
    o = np.einsum("nk,nkh->nh", att, Cm)
    if not p.attention:
        o = np.hstack([o, np.broadcast_to(u, (n, p.h))])
    phi = o @ p.D.T if p.use_D else o
    return {"frames": frames, "q": q_vec, "u": u, "M": M, "att": att, "Cm": Cm, "o": o, "phi": phi}


def _backward(p: ModelParams, cache: dict, d_phi: np.ndarray) -> dict:
    frames, att, o = cache["frames"], cache["att"], cache["o"]
    grads = {}
    if p.use_D:
        grads["D"] = d_phi.T @ o
        d_o = d_phi @ p.D
    else:
        d_o = d_phi
    d_u = np.zeros(p.h)
    if not p.attention:
        d_u += d_o[:, p.h_o:].sum(axis=0)
        d_o = d_o[:, :p.h_o]
    # o = sum_k att_k B f_k
    grads["B"] = d_o.T @ np.einsum("nk,nkd->nd", att, frames)
    if p.attention:
        d_att = np.einsum("nkh,nh->nk", cache["Cm"], d_o)
        d_z = att * (d_att - np.sum(att * d_att, axis=1, keepdims=True))
        grads["A"] = np.outer(cache["u"], np.einsum("nk,nkd->d", d_z, frames))
        d_u += np.einsum("nk,nkh->h", d_z, cache["M"])
    else:
        grads["A"] = np.zeros_like(p.A)
    grads["C"] = np.outer(d_u, cache["q"])
    return grads


def encode_shot(p: ModelParams, frames, q_vec) -> ShotEncoding:
    q_vec = query_vector(q_vec, p.d_q)
    cache = _forward(p, np.asarray(frames, dtype=float)[None], q_vec)
    return ShotEncoding(cache["o"][0], cache["att"][0])


def encode_video(p: ModelParams, v: Video, q) -> list:
    cache = _forward(p, _frames(v), query_vector(q, p.d_q))
    return [ShotEncoding(o, a) for o, a in zip(cache["o"], cache["att"])]


def kernel_features(p: ModelParams, encodings) -> np.ndarray:
    O = np.array([e.o if isinstance(e, ShotEncoding) else e for e in encodings], dtype=float)
    if O.ndim != 2 or O.shape[1] != p.o_dim:
        raise ValueError(f"encodings must have dimension {p.o_dim}")
    return O @ p.D.T if p.use_D else O


def gram_kernel(phi: np.ndarray, lam: float, ground_set=None) -> Kernel:
    phi = np.asarray(phi, dtype=float)
    L = phi @ phi.T + lam * np.eye(len(phi))
    if ground_set is None:
        ground_set = range(len(phi))
    return Kernel(L, tuple(ground_set))


def build_kernel(p: ModelParams, encodings, ground_set=None) -> Kernel:
    encodings = list(encodings)
    if not encodings:
        raise ValueError("kernel needs at least one shot")
    return gram_kernel(kernel_features(p, encodings), p.lam, ground_set)


# -- conditional DPP -------------------------------------------------------

def _split(kernel: Kernel, y_t, y_prev):
    y_prev = set(y_prev)
    y_t = set(y_t)
    if y_t & y_prev:
        raise ValueError("current and previous selections overlap")
    prev_pos = kernel.positions(y_prev)
    sel_pos = kernel.positions(y_t | y_prev)
    return prev_pos, sel_pos


def log_cond_prob(kernel: Kernel, y_t, y_prev=()) -> float:
    """log det(L[y_t + y_prev]) - log det(L + I_t), with I_t the identity
    zeroed on the rows of ``y_prev``."""
    prev_pos, sel_pos = _split(kernel, y_t, y_prev)
    L = kernel.L
    sign_n, num = logdet(L[np.ix_(sel_pos, sel_pos)])
    if sign_n <= 0:
        return -np.inf
    mask = np.ones(len(L))
    mask[prev_pos] = 0.0
    sign_d, den = logdet(L + np.diag(mask))
    if sign_d <= 0:
        raise DegenerateKernelError("normaliser is not positive")
    return num - den


def cond_prob(kernel: Kernel, y_t, y_prev=()) -> float:
    return float(np.exp(log_cond_prob(kernel, y_t, y_prev)))


# -- likelihood ------------------------------------------------------------

def _frames(v: Video) -> np.ndarray:
    if not v.has_frames:
        raise DatasetError(f"video {v.id!r} has no frame features; the model needs them")
    return v.frames


def selection_from_summary(v: Video, s: Summary) -> list:
    s.check(v)
    chosen = set(s.shots)
    return [tuple(i for i in seg if i in chosen) for seg in segments(v)]


def _segment_terms(phi, lam, v, selection, want_grad):
    """Sum of per-segment conditional log-probabilities and, optionally, the
    gradient with respect to the kernel features ``phi``."""
    total = 0.0
    d_phi = np.zeros_like(phi) if want_grad else None
    prev = ()
    for seg, y_t in zip(segments(v), selection):
        ground = list(prev) + list(seg)
        G = phi[ground]
        L = G @ G.T + lam * np.eye(len(ground))
        n_prev = len(prev)
        sel = list(range(n_prev)) + [n_prev + (i - seg.start) for i in y_t]
        L_sel = L[np.ix_(sel, sel)]
        sign_n, num = logdet(L_sel)
        if sign_n <= 0:
            raise DegenerateKernelError(
                f"video {v.id!r} segment starting at shot {seg.start}: selection has zero probability")
        norm = L.copy()
        norm[np.arange(n_prev, len(ground)), np.arange(n_prev, len(ground))] += 1.0
        sign_d, den = logdet(norm)
        if sign_d <= 0:
            raise DegenerateKernelError(f"video {v.id!r}: normaliser is not positive")
        total += num - den
        if want_grad:
            W = -inverse(norm)
            W[np.ix_(sel, sel)] += inverse(L_sel)
            d_phi[ground] += (W + W.T) @ G
        prev = y_t
    return total, d_phi


def seq_log_likelihood(p: ModelParams, v: Video, q, s) -> float:
    selection = s if isinstance(s, list) else selection_from_summary(v, s)
    cache = _forward(p, _frames(v), query_vector(q, p.d_q))
    return _segment_terms(cache["phi"], p.lam, v, selection, False)[0]


def grad_log_likelihood(p: ModelParams, v: Video, q, s):
    """Return ``(log_likelihood, {"A": ..., "B": ..., "C": ..., "D": ...})``."""
    selection = s if isinstance(s, list) else selection_from_summary(v, s)
    cache = _forward(p, _frames(v), query_vector(q, p.d_q))
    ll, d_phi = _segment_terms(cache["phi"], p.lam, v, selection, True)
    return ll, _backward(p, cache, d_phi)


# -- inference -------------------------------------------------------------

def _subset_logdets(L, base, items, k):
    combos = list(combinations(items, k))
    idx = np.array([list(base) + list(c) for c in combos], dtype=int).reshape(len(combos), len(base) + k)
    stack = L[idx[:, :, None], idx[:, None, :]]
    sign, val = batched_logdet(stack)
    return combos, np.where(sign > 0, val, -np.inf)


def map_segment(L, prev_pos, seg_pos, exact_limit=EXACT_MAP_LIMIT):
    """Subset of ``seg_pos`` maximising det(L[prev + subset]).

    Exact enumeration up to ``exact_limit`` items, greedy otherwise. Ties
    favour the smaller, then lexicographically first, subset.
    """
    prev_pos, seg_pos = list(prev_pos), sorted(seg_pos)
    if len(seg_pos) > exact_limit:
        return greedy_map_segment(L, prev_pos, seg_pos)
    best, best_val = (), -np.inf
    for k in range(len(seg_pos) + 1):
        combos, vals = _subset_logdets(L, prev_pos, seg_pos, k)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best, best_val = combos[j], vals[j]
    return tuple(best)


def greedy_map_segment(L, prev_pos, seg_pos):
    chosen = []
    sign, current = logdet(L[np.ix_(prev_pos, prev_pos)])
    current = current if sign > 0 else -np.inf
    remaining = sorted(seg_pos)
    while remaining:
        base = list(prev_pos) + chosen
        vals = []
        for i in remaining:
            idx = base + [i]
            s, v = logdet(L[np.ix_(idx, idx)])
            vals.append(v if s > 0 else -np.inf)
        j = int(np.argmax(vals))
        if not vals[j] > current:
            break
        chosen.append(remaining.pop(j))
        current = vals[j]
    return tuple(sorted(chosen))


def summarize(p: ModelParams, v: Video, q, exact_limit=EXACT_MAP_LIMIT) -> list:
    """Visit segments in order, choosing each segment's MAP subset given the
    previous segment's choice. Returns one tuple of shot indices per segment."""
    cache = _forward(p, _frames(v), query_vector(q, p.d_q))
    phi = cache["phi"]
    selection, prev = [], ()
    for seg in segments(v):
        ground = list(prev) + list(seg)
        G = phi[ground]
        L = G @ G.T + p.lam * np.eye(len(ground))
        n_prev = len(prev)
        pick = map_segment(L, range(n_prev), range(n_prev, len(ground)), exact_limit)
        y_t = tuple(ground[i] for i in pick)
        selection.append(y_t)
        prev = y_t
    return selection


def selection_to_summary(v: Video, selection, query_id=None) -> Summary:
    return Summary(v.id, tuple(i for y in selection for i in y), query_id, "system")


# -- checkpoints -----------------------------------------------------------

def params_to_dict(p: ModelParams, K: Optional[int] = None) -> dict:
    return {
        "dims": {"d_f": p.d_f, "d_q": p.d_q, "K": K, "h": p.h, "h_o": p.h_o, "h_L": p.h_L},
        "lambda": p.lam,
        "attention": p.attention,
        "use_D": p.use_D,
        "A": p.A.tolist(),
        "B": p.B.tolist(),
        "C": p.C.tolist(),
        "D": p.D.tolist() if p.use_D else None,
        "seed": p.seed,
    }


def params_from_dict(raw: dict) -> ModelParams:
    dims = raw["dims"]
    p = ModelParams(
        np.array(raw["A"], dtype=float), np.array(raw["B"], dtype=float), np.array(raw["C"], dtype=float),
        None if raw.get("D") is None else np.array(raw["D"], dtype=float),
        float(raw["lambda"]), bool(raw.get("attention", True)), bool(raw.get("use_D", True)), raw.get("seed"),
    )
    for key in ("d_f", "d_q", "h", "h_o", "h_L"):
        if key in dims and getattr(p, key) != dims[key]:
            raise ValueError(f"checkpoint dims disagree on {key}: {dims[key]} vs {getattr(p, key)}")
    return p


def save_params(p: ModelParams, path, K=None) -> None:
    # json renders floats with repr, which round-trips doubles exactly
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(p, K), fh)
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
