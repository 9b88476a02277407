import numpy as np
import pytest

from qfvs.core import ConceptDictionary, Dataset, Query, Shot, Summary, Video


def make_video(tag_lists, vid="v", segment_size=10, frames=None):
    shots = []
    for i, tags in enumerate(tag_lists):
        f = frames[i] if frames is not None else np.zeros((0, 0))
        shots.append(Shot(i, frozenset(tags), f))
    return Video(vid, tuple(shots), segment_size)


def random_dataset(rng, n_concepts=None, with_frames=True, with_oracles=None):
    n_concepts = n_concepts or int(rng.integers(1, 8))
    d = ConceptDictionary(tuple(f"k{i}" for i in range(n_concepts)))
    K, d_f = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    videos, queries, users, oracles = [], [], [], []
    for vi in range(int(rng.integers(1, 4))):
        n = int(rng.integers(1, 12))
        tags = [rng.choice(n_concepts, int(rng.integers(0, n_concepts + 1)), replace=False) for _ in range(n)]
        frames = [rng.standard_normal((K, d_f)) for _ in range(n)] if with_frames else None
        v = make_video(tags, f"vid{vi}", int(rng.integers(1, 5)), frames)
        videos.append(v)
        for qi in range(int(rng.integers(0, 3))):
            qc = rng.choice(n_concepts, int(rng.integers(1, n_concepts + 1)), replace=False)
            q = Query(frozenset(int(c) for c in qc), [None, "i", "ii", "iii", "iv"][int(rng.integers(5))],
                      f"{v.id}-q{qi}", v.id)
            queries.append(q)
            for u in range(int(rng.integers(0, 4))):
                shots = rng.choice(n, int(rng.integers(0, n + 1)), replace=False)
                users.append(Summary(v.id, tuple(int(s) for s in shots), q.id, f"u{u}"))
            oracles.append(Summary(v.id, tuple(int(s) for s in rng.choice(n, 1)), q.id, "oracle"))
    if with_oracles is None:
        with_oracles = bool(rng.integers(2))
    return Dataset(d, tuple(videos), tuple(queries), tuple(users), tuple(oracles) if with_oracles else None)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria register their verdicts here; printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
