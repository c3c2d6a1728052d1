import numpy as np
import pytest

from dreamrec.data import Dataset
from dreamrec.synthetic import make_clustered

DAY = 86400
JAN_2021 = 1609459200  # Friday 2021-01-01T00:00:00Z


@pytest.fixture
def toy():
    """Three users, five items, hand-countable sessions and edges."""
    events = [
        (0, 0, JAN_2021 + 1 * DAY),
        (0, 1, JAN_2021 + 2 * DAY),
        (0, 2, JAN_2021 + 40 * DAY),
        (1, 0, JAN_2021 + 3 * DAY),
        (1, 1, JAN_2021 + 35 * DAY),
        (2, 2, JAN_2021 + 5 * DAY),
        (2, 3, JAN_2021 + 70 * DAY),
        (2, 4, JAN_2021 + 71 * DAY),
    ]
    return Dataset(["a", "b", "c"], ["i0", "i1", "i2", "i3", "i4"], np.array(events),
                   np.array([(0, 1), (1, 0), (2, 0)]))


@pytest.fixture(scope="session")
def clustered():
    return make_clustered(seed=0)


def write_tsv(path, rows):
    path.write_text("".join("\t".join(str(c) for c in r) + "\n" for r in rows))
    return path


def build_network(ds, variant="dream", dim=4, seed=0, glove_epochs=5, **overrides):
    """Untrained network plus training instances on ``ds``."""
    from dreamrec import data as dt
    from dreamrec.completion import GloveEmbedder, GraphCompleter
    from dreamrec.model import DreamNetwork, ParamStore, make_training_instances, variant_config

    v = variant_config(variant, **overrides)
    labels = dt.split(ds, seed=seed)
    seqs = dt.segment_sessions(ds, "month", labels == dt.TRAIN)
    glove = GloveEmbedder(dim=4, epochs=glove_epochs, random_state=seed)
    comp = GraphCompleter(3, 3, v.use_real, v.use_virtual, glove, seed).fit(ds, labels, seqs)
    store = ParamStore.init(ds.n_users, ds.n_items, dim, v, seed)
    insts, _ = make_training_instances(ds, labels, seqs, v.sessions, 4, seed)
    return DreamNetwork(store, v, comp, seqs), insts


def dump_tsv(ds, directory):
    """Write ``ds`` as events/social TSV files; returns both paths."""
    ev = write_tsv(directory / "events.tsv",
                   [(ds.user_ids[u], ds.item_ids[i], t) for u, i, t in ds.events.tolist()])
    so = write_tsv(directory / "social.tsv",
                   [(ds.user_ids[a], ds.user_ids[b]) for a, b in ds.social.tolist()])
    return ev, so
