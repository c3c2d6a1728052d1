"""Interaction logs, social edges, sessions, splits and negative sampling."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, ParseError, SamplingError

TRAIN, VALID, TEST = 0, 1, 2
SPLIT_NAMES = {"train": TRAIN, "valid": VALID, "test": TEST}
SECONDS_PER_DAY = 86400


class AccessCounter:
    """Counts reads of a guarded resource; ablation wiring tests inspect it."""

    def __init__(self):
        self.count = 0

    def hit(self):
        self.count += 1

    def reset(self):
        self.count = 0


@dataclass
class Dataset:
    """Implicit-feedback events plus a directed social graph.

    ``events`` is an int64 array of ``(user, item, timestamp)`` rows sorted by
    user then time; ``social`` holds ``(user, friend)`` rows.
    """

    user_ids: list
    item_ids: list
    events: np.ndarray
    social: np.ndarray
    social_access: AccessCounter = field(default_factory=AccessCounter, repr=False, compare=False)

    def __post_init__(self):
        self.events = np.asarray(self.events, dtype=np.int64).reshape(-1, 3)
        self.social = np.asarray(self.social, dtype=np.int64).reshape(-1, 2)
        n, m = self.n_users, self.n_items
        if n == 0 or m == 0:
            raise ValueError("dataset needs at least one user and one item")
        if len(self.events):
            u, i, t = self.events.T
            if u.min() < 0 or u.max() >= n or i.min() < 0 or i.max() >= m:
                raise ValueError("event index out of range")
            if t.min() < 0:
                raise ValueError("negative timestamp")
        if len(self.social) and (self.social.min() < 0 or self.social.max() >= n):
            raise ValueError("social edge index out of range")
        self._interacted = None
        self._friends = None

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def interacted(self, user):
        """Sorted array of items the user touched in any split."""
        if self._interacted is None:
            order = np.lexsort((self.events[:, 1], self.events[:, 0]))
            ui = self.events[order][:, :2]
            bounds = np.searchsorted(ui[:, 0], np.arange(self.n_users + 1))
            self._interacted = [np.unique(ui[bounds[u]:bounds[u + 1], 1])
                                for u in range(self.n_users)]
        return self._interacted[user]

    def friends(self, user):
        """Out-neighbours of ``user`` in the social graph (sorted, no self)."""
        self.social_access.hit()
        if self._friends is None:
            buckets = [[] for _ in range(self.n_users)]
            for p, q in self.social:
                if p != q:
                    buckets[p].append(q)
            self._friends = [np.unique(np.asarray(b, dtype=np.int64)) for b in buckets]
        return self._friends[user]

    def save(self, path):
        payload = {
            "format": "dreamrec-dataset",
            "version": 1,
            "users": list(self.user_ids),
            "items": list(self.item_ids),
            "events": self.events.tolist(),
            "social": self.social.tolist(),
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != "dreamrec-dataset":
            raise ValueError(f"{path} is not a dataset artifact")
        return cls(payload["users"], payload["items"], payload["events"], payload["social"])


def _read_rows(path, min_cols, max_cols):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if not min_cols <= len(cols) <= max_cols:
                raise ParseError(path, lineno, f"expected {min_cols} to {max_cols} tab-separated fields, got {len(cols)}")
            yield lineno, cols


def ingest(events_path, social_path=None):
    """Read ``user<TAB>item<TAB>timestamp[<TAB>rating]`` and ``user<TAB>friend`` files.

    Ids are opaque strings mapped to dense indices in first-seen order.  Any
    rating column is ignored: presence of an event is the feedback.
    """
    users, items = {}, {}
    rows = set()
    for lineno, cols in _read_rows(events_path, 3, 4):
        try:
            ts = int(float(cols[2]))
        except ValueError:
            raise ParseError(events_path, lineno, f"bad timestamp {cols[2]!r}") from None
        if ts < 0:
            raise ParseError(events_path, lineno, "negative timestamp")
        u = users.setdefault(cols[0], len(users))
        i = items.setdefault(cols[1], len(items))
        rows.add((u, i, ts))
    edges = set()
    if social_path is not None:
        for lineno, cols in _read_rows(social_path, 2, 2):
            p = users.setdefault(cols[0], len(users))
            q = users.setdefault(cols[1], len(users))
            if p != q:
                edges.add((p, q))
    events = np.array(sorted(rows, key=lambda r: (r[0], r[2], r[1])), dtype=np.int64).reshape(-1, 3)
    social = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return Dataset(list(users), list(items), events, social)


# ---------------------------------------------------------------------------
# sessions


@dataclass(frozen=True)
class Session:
    index: int
    window: int
    start_time: int
    items: tuple


@dataclass
class SessionSequence:
    user: int
    sessions: list

    def windows(self):
        return [s.window for s in self.sessions]


def window_of(timestamps, granularity):
    """Calendar bucket id (UTC) for each timestamp.

    Months count from January 1970; weeks are Monday-aligned like ISO weeks.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    if granularity == "month":
        return ts.astype("datetime64[s]").astype("datetime64[M]").astype(np.int64)
    if granularity == "week":
        # 1970-01-01 was a Thursday
        return (ts // SECONDS_PER_DAY + 3) // 7
    raise ConfigError(f"unknown session granularity {granularity!r}")


def segment_sessions(ds, granularity="month", mask=None):
    """Bucket each user's events into calendar-window sessions.

    ``mask`` optionally restricts to a subset of events (e.g. training only).
    Returns one :class:`SessionSequence` per user, possibly empty.
    """
    events = ds.events if mask is None else ds.events[np.asarray(mask, dtype=bool)]
    windows = window_of(events[:, 2], granularity)
    order = np.lexsort((events[:, 1], events[:, 2], events[:, 0]))
    events, windows = events[order], windows[order]
    out = [SessionSequence(u, []) for u in range(ds.n_users)]
    start = 0
    n = len(events)
    while start < n:
        u, w = events[start, 0], windows[start]
        stop = start
        while stop < n and events[stop, 0] == u and windows[stop] == w:
            stop += 1
        seq = out[u]
        seq.sessions.append(Session(len(seq.sessions), int(w), int(events[start, 2]),
                                    tuple(int(i) for i in events[start:stop, 1])))
        start = stop
    return out


# ---------------------------------------------------------------------------
# splits and sampling


def split(ds, ratios=(0.8, 0.1, 0.1), seed=0):
    """Random event-level train/valid/test labels (0/1/2 per event row).

    A seeded permutation fixes exact bucket sizes, so proportions match the
    ratios up to rounding.
    """
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or np.any(ratios < 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {ratios.tolist()}")
    n = len(ds.events)
    n_train = int(round(ratios[0] * n))
    n_valid = min(int(round(ratios[1] * n)), n - n_train)
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    labels = np.full(n, TEST, dtype=np.int8)
    labels[perm[:n_train]] = TRAIN
    labels[perm[n_train:n_train + n_valid]] = VALID
    return labels


def seed_keys(seed):
    """Flatten an int or nested tuple of ints into a ``default_rng`` seed list."""
    if isinstance(seed, (list, tuple, np.ndarray)):
        return [k for part in seed for k in seed_keys(part)]
    return [int(seed)]


def sample_negatives(ds, user, count, seed):
    """``count`` distinct items the user never interacted with, uniformly."""
    seen = ds.interacted(user)
    free = ds.n_items - len(seen)
    if count < 0 or count > free:
        raise SamplingError(f"user {user}: asked for {count} negatives but only {free} unrated items")
    rng = np.random.default_rng(seed_keys(seed) + [int(user)])
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if count * 4 > free:
        pool = np.setdiff1d(np.arange(ds.n_items), seen, assume_unique=True)
        return rng.choice(pool, size=count, replace=False)
    picked = []
    taken = set()
    seen_set = set(seen.tolist())
    while len(picked) < count:
        for cand in rng.integers(0, ds.n_items, size=2 * (count - len(picked))).tolist():
            if cand not in seen_set and cand not in taken:
                taken.add(cand)
                picked.append(cand)
                if len(picked) == count:
                    break
    return np.asarray(picked, dtype=np.int64)


def stats(ds, granularity="month"):
    """Table-style summary of a dataset as a flat dict."""
    seqs = segment_sessions(ds, granularity)
    active = [len(s.sessions) for s in seqs if s.sessions]
    n_friends = [len(ds.friends(u)) for u in range(ds.n_users)]
    return {
        "users": ds.n_users,
        "items": ds.n_items,
        "events": int(len(ds.events)),
        "social_links": int(len(ds.social)),
        "avg_sessions_per_user": float(np.mean(active)) if active else 0.0,
        "avg_real_friends_per_user": float(np.mean(n_friends)),
    }
