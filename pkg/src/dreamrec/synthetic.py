"""Planted-preference datasets for tests and demos."""

import numpy as np

from .data import Dataset

MONTH_START_2020 = 1577836800  # 2020-01-01T00:00:00Z
DAY = 86400


def make_clustered(n_users=40, n_items=60, n_clusters=4, n_sessions=4, items_per_session=3,
                   n_friends=4, homophily=0.9, noise=0.05, seed=0):
    """Users and items fall into ``n_clusters`` blocks; users mostly consume
    their block's items in monthly sessions and mostly befriend block-mates.
    """
    rng = np.random.default_rng([seed, 0x5A7])
    user_cluster = np.arange(n_users) % n_clusters
    item_cluster = np.arange(n_items) % n_clusters
    by_cluster = [np.flatnonzero(item_cluster == c) for c in range(n_clusters)]
    events = []
    for u in range(n_users):
        own = by_cluster[user_cluster[u]]
        first = int(rng.integers(0, 2))
        for s in range(n_sessions):
            month = first + s
            # approximate month start, then a day within the first four weeks
            base = MONTH_START_2020 + int(month * 30.5 * DAY) + DAY
            for _ in range(items_per_session):
                item = int(rng.choice(own)) if rng.random() > noise else int(rng.integers(n_items))
                events.append((u, item, base + int(rng.integers(0, 27 * DAY))))
    edges = set()
    for u in range(n_users):
        mates = np.flatnonzero((user_cluster == user_cluster[u]) & (np.arange(n_users) != u))
        others = np.flatnonzero(user_cluster != user_cluster[u])
        for _ in range(n_friends):
            pool = mates if rng.random() < homophily else others
            edges.add((u, int(rng.choice(pool))))
    events = sorted(set(events), key=lambda r: (r[0], r[2], r[1]))
    return Dataset([f"u{u}" for u in range(n_users)], [f"i{i}" for i in range(n_items)],
                   np.array(events, dtype=np.int64), np.array(sorted(edges), dtype=np.int64))


def make_uniform(n_users=200, n_items=2000, events_per_user=10, seed=0):
    """Unstructured log with random items and times over one year."""
    rng = np.random.default_rng([seed, 0x0F1])
    events = set()
    for u in range(n_users):
        for _ in range(events_per_user):
            events.add((u, int(rng.integers(n_items)), MONTH_START_2020 + int(rng.integers(0, 365 * DAY))))
    events = sorted(events, key=lambda r: (r[0], r[2], r[1]))
    return Dataset([f"u{u}" for u in range(n_users)], [f"i{i}" for i in range(n_items)],
                   np.array(events, dtype=np.int64), np.zeros((0, 2), dtype=np.int64))
