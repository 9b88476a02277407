"""Videos, shots, concepts, queries and summaries, plus dataset file I/O.

Concepts are referred to by their index into the dataset's
:class:`ConceptDictionary` everywhere past ingestion.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

SCENARIOS = ("i", "ii", "iii", "iv")


class DatasetError(ValueError):
    """A dataset (or one of its entities) violates an invariant."""


class DatasetParseError(DatasetError):
    """The dataset file is not valid JSON or does not follow the schema."""


@dataclass(frozen=True)
class ConceptDictionary:
    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise DatasetError("concept dictionary is empty")
        for name in names:
            if not isinstance(name, str) or not name:
                raise DatasetError(f"concept name {name!r} must be a nonempty string")
        if len(set(names)) != len(names):
            raise DatasetError("concept names must be unique")

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def check(self, concepts: Iterable[int], what: str = "concept set"):
        for c in concepts:
            if not 0 <= c < len(self.names):
                raise DatasetError(
                    f"{what}: concept index {c} out of range for dictionary of size {len(self.names)}")


def _concept_set(concepts) -> frozenset:
    out = frozenset(int(c) for c in concepts)
    if any(c < 0 for c in out):
        raise DatasetError(f"negative concept index in {sorted(out)}")
    return out


@dataclass(frozen=True, eq=False)
class Shot:
    """One shot: its concept tags and a (K, d_f) array of frame features.

    ``frames`` may be an empty (0, 0) array when only tags are needed.
    """

    index: int
    tags: frozenset
    frames: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        object.__setattr__(self, "tags", _concept_set(self.tags))
        frames = np.array(self.frames, dtype=float)
        if frames.size == 0:
            frames = np.zeros((0, 0))
        if frames.ndim != 2:
            raise DatasetError(f"shot {self.index}: frames must be a list of equal-length vectors")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def has_frames(self) -> bool:
        return self.frames.shape[0] > 0

    def __eq__(self, other):
        if not isinstance(other, Shot):
            return NotImplemented
        return (self.index == other.index and self.tags == other.tags
                and self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames))

    def __hash__(self):
        return hash((self.index, self.tags))


@dataclass(frozen=True)
class Video:
    id: str
    shots: tuple
    segment_size: int = 10

    def __post_init__(self):
        shots = tuple(self.shots)
        object.__setattr__(self, "shots", shots)
        if self.segment_size < 1:
            raise DatasetError(f"video {self.id!r}: segment_size must be >= 1")
        for i, shot in enumerate(shots):
            if shot.index != i:
                raise DatasetError(f"video {self.id!r}: shot indices must be 0..n-1, got {shot.index} at {i}")
        shapes = {s.frames.shape for s in shots if s.has_frames}
        if len(shapes) > 1:
            raise DatasetError(f"video {self.id!r}: inconsistent frame shapes {sorted(shapes)}")
        if shapes and any(not s.has_frames for s in shots):
            raise DatasetError(f"video {self.id!r}: some shots have frames and some do not")

    def __len__(self):
        return len(self.shots)

    @property
    def n_shots(self) -> int:
        return len(self.shots)

    @property
    def has_frames(self) -> bool:
        return bool(self.shots) and self.shots[0].has_frames

    @cached_property
    def frames(self) -> np.ndarray:
        """All frame features stacked into an (n, K, d_f) array."""
        if not self.has_frames:
            raise DatasetError(f"video {self.id!r} has no frame features")
        out = np.stack([s.frames for s in self.shots])
        out.setflags(write=False)
        return out

    def tags(self, i: int) -> frozenset:
        return self.shots[i].tags

    @cached_property
    def tag_matrix(self) -> np.ndarray:
        """Binary (n, max concept + 1) matrix of shot tags."""
        width = 1 + max((max(s.tags) for s in self.shots if s.tags), default=-1)
        out = np.zeros((self.n_shots, width))
        for s in self.shots:
            out[s.index, sorted(s.tags)] = 1.0
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class Query:
    concepts: frozenset
    scenario: Optional[str] = None
    id: str = ""
    video: str = ""

    def __post_init__(self):
        object.__setattr__(self, "concepts", _concept_set(self.concepts))
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise DatasetError(f"query {self.id!r}: unknown scenario {self.scenario!r}")


@dataclass(frozen=True)
class Summary:
    """A set of selected shot indices of one video, stored sorted."""

    video_id: str
    shots: tuple
    query_id: Optional[str] = None
    user: Optional[str] = None

    def __post_init__(self):
        shots = tuple(int(s) for s in self.shots)
        if len(set(shots)) != len(shots):
            raise DatasetError(f"summary {self._label()}: duplicate shot index")
        object.__setattr__(self, "shots", tuple(sorted(shots)))

    def _label(self):
        return f"(query={self.query_id!r}, user={self.user!r}, video={self.video_id!r})"

    def __len__(self):
        return len(self.shots)

    def __iter__(self):
        return iter(self.shots)

    def __contains__(self, i):
        return i in self.shots

    def with_shots(self, shots: Iterable[int]) -> "Summary":
        return Summary(self.video_id, tuple(shots), self.query_id, self.user)

    def check(self, video: Video):
        if video.id != self.video_id:
            raise DatasetError(f"summary {self._label()} does not belong to video {video.id!r}")
        if self.shots and not (0 <= self.shots[0] and self.shots[-1] < video.n_shots):
            bad = next(s for s in self.shots if not 0 <= s < video.n_shots)
            raise DatasetError(
                f"summary {self._label()}: shot index {bad} out of range for {video.n_shots}-shot video")


@dataclass(frozen=True)
class Dataset:
    dictionary: ConceptDictionary
    videos: tuple
    queries: tuple = ()
    user_summaries: tuple = ()
    oracle_summaries: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "videos", tuple(self.videos))
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "user_summaries", tuple(self.user_summaries))
        if self.oracle_summaries is not None:
            object.__setattr__(self, "oracle_summaries", tuple(self.oracle_summaries))
        self.validate()

    def validate(self):
        videos = {}
        for v in self.videos:
            if v.id in videos:
                raise DatasetError(f"duplicate video id {v.id!r}")
            videos[v.id] = v
            for s in v.shots:
                self.dictionary.check(s.tags, f"video {v.id!r} shot {s.index}")
        queries = {}
        for q in self.queries:
            if q.id in queries:
                raise DatasetError(f"duplicate query id {q.id!r}")
            if q.video not in videos:
                raise DatasetError(f"query {q.id!r} references unknown video {q.video!r}")
            if not 1 <= len(q.concepts) <= len(self.dictionary):
                raise DatasetError(f"query {q.id!r} must have between 1 and {len(self.dictionary)} concepts")
            self.dictionary.check(q.concepts, f"query {q.id!r}")
            queries[q.id] = q
        for kind, summaries in (("user", self.user_summaries), ("oracle", self.oracle_summaries or ())):
            for s in summaries:
                if s.query_id not in queries:
                    raise DatasetError(f"{kind} summary {s._label()} references unknown query")
                q = queries[s.query_id]
                if s.video_id != q.video:
                    raise DatasetError(f"{kind} summary {s._label()} disagrees with its query's video")
                s.check(videos[q.video])

    @cached_property
    def _video_index(self):
        return {v.id: v for v in self.videos}

    @cached_property
    def _query_index(self):
        return {q.id: q for q in self.queries}

    def video(self, video_id: str) -> Video:
        try:
            return self._video_index[video_id]
        except KeyError:
            raise DatasetError(f"unknown video {video_id!r}") from None

    def query(self, query_id: str) -> Query:
        try:
            return self._query_index[query_id]
        except KeyError:
            raise DatasetError(f"unknown query {query_id!r}") from None

    def queries_for(self, video_id: str) -> list:
        return [q for q in self.queries if q.video == video_id]

    def users_for(self, query_id: str) -> list:
        return [s for s in self.user_summaries if s.query_id == query_id]

    def oracle_for(self, query_id: str) -> Optional[Summary]:
        for s in self.oracle_summaries or ():
            if s.query_id == query_id:
                return s
        return None

    def replace(self, **changes) -> "Dataset":
        fields = dict(dictionary=self.dictionary, videos=self.videos, queries=self.queries,
                      user_summaries=self.user_summaries, oracle_summaries=self.oracle_summaries)
        fields.update(changes)
        return Dataset(**fields)


def indicator_vector(q: Query, dictionary: ConceptDictionary) -> np.ndarray:
    dictionary.check(q.concepts, f"query {q.id!r}")
    out = np.zeros(len(dictionary))
    out[sorted(q.concepts)] = 1.0
    return out


def segments(v: Video) -> list:
    """Consecutive shot-index ranges of length ``segment_size``; the last may be shorter."""
    n, size = v.n_shots, v.segment_size
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


# -- serialization ---------------------------------------------------------

def _summary_record(s: Summary) -> dict:
    return {"query": s.query_id, "user": s.user, "shots": list(s.shots)}


def dataset_to_dict(d: Dataset) -> dict:
    out = {
        "dictionary": list(d.dictionary.names),
        "videos": [
            {
                "id": v.id,
                "segment_size": v.segment_size,
                "shots": [
                    {"concepts": sorted(s.tags), "frames": s.frames.tolist() if s.has_frames else []}
                    for s in v.shots
                ],
            }
            for v in d.videos
        ],
        "queries": [
            {"id": q.id, "video": q.video, "concepts": sorted(q.concepts), "scenario": q.scenario}
            for q in d.queries
        ],
        "user_summaries": [_summary_record(s) for s in d.user_summaries],
    }
    if d.oracle_summaries is not None:
        out["oracle_summaries"] = [_summary_record(s) for s in d.oracle_summaries]
    return out


def _require(record, key, kind, where):
    if not isinstance(record, dict) or key not in record:
        raise DatasetParseError(f"{where}: missing key {key!r}")
    value = record[key]
    if kind is not None and not isinstance(value, kind):
        raise DatasetParseError(f"{where}: {key!r} has wrong type {type(value).__name__}")
    return value


def _int_list(values, where):
    if not isinstance(values, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in values):
        raise DatasetParseError(f"{where}: expected a list of integers")
    return values


def dataset_from_dict(raw: dict) -> Dataset:
    if not isinstance(raw, dict):
        raise DatasetParseError("top level must be a JSON object")
    dictionary = ConceptDictionary(tuple(_require(raw, "dictionary", list, "dataset")))
    videos = []
    for vi, rv in enumerate(_require(raw, "videos", list, "dataset")):
        where = f"videos[{vi}]"
        vid = _require(rv, "id", str, where)
        shots = []
        for si, rs in enumerate(_require(rv, "shots", list, f"video {vid!r}")):
            swhere = f"video {vid!r} shot {si}"
            concepts = _int_list(_require(rs, "concepts", list, swhere), swhere)
            if len(set(concepts)) != len(concepts):
                raise DatasetError(f"{swhere}: duplicate concept index")
            frames = rs.get("frames", [])
            if not isinstance(frames, list):
                raise DatasetParseError(f"{swhere}: frames must be a list")
            try:
                shots.append(Shot(si, concepts, np.array(frames, dtype=float)))
            except ValueError as exc:
                if isinstance(exc, DatasetError):
                    raise
                raise DatasetParseError(f"{swhere}: bad frames ({exc})") from None
        seg = _require(rv, "segment_size", int, f"video {vid!r}")
        videos.append(Video(vid, tuple(shots), seg))

    queries = []
    for qi, rq in enumerate(_require(raw, "queries", list, "dataset")):
        where = f"queries[{qi}]"
        qid = _require(rq, "id", str, where)
        concepts = _int_list(_require(rq, "concepts", list, f"query {qid!r}"), f"query {qid!r}")
        if len(set(concepts)) != len(concepts):
            raise DatasetError(f"query {qid!r}: duplicate concept index")
        queries.append(Query(concepts, rq.get("scenario"), qid, _require(rq, "video", str, f"query {qid!r}")))

    def summaries(records, kind, qindex):
        out = []
        for i, rs in enumerate(records):
            where = f"{kind}[{i}]"
            qid = _require(rs, "query", str, where)
            if qid not in qindex:
                raise DatasetError(f"{where}: references unknown query {qid!r}")
            user = rs.get("user")
            shots = _int_list(_require(rs, "shots", list, where), where)
            try:
                out.append(Summary(qindex[qid].video, tuple(shots), qid, None if user is None else str(user)))
            except DatasetError as exc:
                raise DatasetError(f"{where}: {exc}") from None
        return out

    qindex = {q.id: q for q in queries}
    users = summaries(_require(raw, "user_summaries", list, "dataset"), "user_summaries", qindex)
    oracles = None
    if raw.get("oracle_summaries") is not None:
        oracles = summaries(_require(raw, "oracle_summaries", list, "dataset"), "oracle_summaries", qindex)
    return Dataset(dictionary, tuple(videos), tuple(queries), tuple(users), oracles)


def dumps_dataset(d: Dataset) -> str:
    return json.dumps(dataset_to_dict(d), separators=(",", ":")) + "\n"


def save_dataset(d: Dataset, path) -> None:
    d.validate()
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write(dumps_dataset(d))


def load_dataset(path) -> Dataset:
    with open(os.fspath(path), encoding="utf-8") as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"{path}: {exc}") from None
    return dataset_from_dict(raw)


def load_summaries(path, dataset: Dataset) -> list:
    """Read a summary file: a JSON list of {"query", "user", "shots"} records
    (or a single record) resolved against ``dataset``'s queries."""
    with open(os.fspath(path), encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{path}: {exc}") from None
    if isinstance(raw, dict):
        raw = [raw]
    out = []
    for i, rs in enumerate(raw):
        qid = _require(rs, "query", str, f"summary[{i}]")
        q = dataset.query(qid)
        s = Summary(q.video, tuple(_int_list(_require(rs, "shots", list, f"summary[{i}]"), f"summary[{i}]")),
                    qid, rs.get("user"))
        s.check(dataset.video(q.video))
        out.append(s)
    return out


def save_summaries(summaries: Sequence[Summary], path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        json.dump([_summary_record(s) for s in summaries], fh, indent=1)
        fh.write("\n")
