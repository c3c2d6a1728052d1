"""Social graph completion with GloVe-derived virtual friends."""

import bisect
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import TRAIN, AccessCounter
from .exceptions import TrainingError

REAL, VIRTUAL = "real", "virtual"


def build_cooccurrence(ds, labels=None):
    """Symmetric user-user counts of distinct shared items.

    Only events labelled train are used when ``labels`` is given.  The
    diagonal is dropped.  Returns a ``scipy.sparse.csr_matrix`` of ints.
    """
    events = ds.events if labels is None else ds.events[np.asarray(labels) == TRAIN]
    ui = np.unique(events[:, :2], axis=0)
    incidence = sp.csr_matrix((np.ones(len(ui), dtype=np.int64), (ui[:, 0], ui[:, 1])),
                              shape=(ds.n_users, ds.n_items))
    counts = (incidence @ incidence.T).tocsr()
    counts.setdiag(0)
    counts.eliminate_zeros()
    counts.sort_indices()
    return counts


def glove_weight(x, x_max=100.0, alpha=0.75):
    x = np.asarray(x, dtype=np.float64)
    return np.minimum((x / x_max) ** alpha, 1.0)


class GloveEmbedder(BaseEstimator, TransformerMixin):
    """GloVe fitted to a square co-occurrence matrix with AdaGrad updates.

    After ``fit``, ``embeddings_`` holds the sum of centre and context
    vectors and ``loss_history_`` the weighted squared error per epoch.
    """

    def __init__(self, dim=64, x_max=100.0, alpha=0.75, learning_rate=0.05,
                 epochs=30, random_state=0):
        self.dim = dim
        self.x_max = x_max
        self.alpha = alpha
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.random_state = random_state

    def _init_params(self, n):
        rng = np.random.default_rng([self.random_state, 0x61])
        w = (rng.random((n, self.dim)) - 0.5) / self.dim
        c = (rng.random((n, self.dim)) - 0.5) / self.dim
        return w, c, np.zeros(n), np.zeros(n)

    def fit(self, X, y=None):
        X = sp.coo_matrix(X)
        if X.shape[0] != X.shape[1]:
            raise ValueError(f"co-occurrence matrix must be square, got {X.shape}")
        if X.nnz == 0:
            raise ValueError("co-occurrence matrix has no entries")
        if np.any(X.data <= 0):
            raise ValueError("co-occurrence counts must be positive")
        rows, cols = X.row.astype(np.int64), X.col.astype(np.int64)
        logx = np.log(X.data.astype(np.float64))
        weight = glove_weight(X.data, self.x_max, self.alpha)
        w, c, bw, bc = self._init_params(X.shape[0])
        gw, gc = np.ones_like(w), np.ones_like(c)
        gbw, gbc = np.ones_like(bw), np.ones_like(bc)
        lr = self.learning_rate
        rng = np.random.default_rng([self.random_state, 0x62])
        history = []
        for epoch in range(self.epochs):
            total = 0.0
            for k in rng.permutation(len(rows)):
                p, q = rows[k], cols[k]
                diff = w[p] @ c[q] + bw[p] + bc[q] - logx[k]
                fdiff = weight[k] * diff
                total += fdiff * diff
                grad_w = fdiff * c[q]
                grad_c = fdiff * w[p]
                w[p] -= lr * grad_w / np.sqrt(gw[p])
                c[q] -= lr * grad_c / np.sqrt(gc[q])
                bw[p] -= lr * fdiff / np.sqrt(gbw[p])
                bc[q] -= lr * fdiff / np.sqrt(gbc[q])
                gw[p] += grad_w * grad_w
                gc[q] += grad_c * grad_c
                gbw[p] += fdiff * fdiff
                gbc[q] += fdiff * fdiff
            if not np.isfinite(total):
                raise TrainingError(f"GloVe diverged in epoch {epoch + 1}; try a smaller learning_rate")
            history.append(total)
        self.center_, self.context_ = w, c
        self.center_bias_, self.context_bias_ = bw, bc
        self.embeddings_ = w + c
        self.loss_history_ = history
        return self

    def transform(self, X=None):
        check_is_fitted(self, "embeddings_")
        if X is None:
            return self.embeddings_
        return self.embeddings_[np.asarray(X, dtype=np.intp)]


def score_virtual(g, p, q):
    """Raw inner product of two users' GloVe vectors.

    Any global normalisation is monotone, so this ranks friends identically.
    """
    if p == q:
        raise ValueError("a user is not their own virtual friend")
    return float(np.dot(g[p], g[q]))


def top_k(scores, k, exclude=()):
    """Indices of the ``k`` largest scores, ties to the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    allowed = np.ones(len(scores), dtype=bool)
    excl = np.asarray(list(exclude), dtype=np.intp)
    if excl.size:
        allowed[excl] = False
    cand = np.flatnonzero(allowed)
    return cand[np.lexsort((cand, -scores[cand]))[:max(k, 0)]]


def select_virtual_friends(g, user, k_virtual, exclusions=()):
    """Top-``k_virtual`` users by score, never ``user`` or ``exclusions``.

    Returns ``[(user_idx, score), ...]``.
    """
    if k_virtual <= 0:
        return []
    g = np.asarray(g, dtype=np.float64)
    scores = g @ g[user]
    picked = top_k(scores, k_virtual, [user, *np.asarray(list(exclusions), dtype=np.int64).tolist()])
    return [(int(j), float(scores[j])) for j in picked]


@dataclass(frozen=True)
class Neighbor:
    user: int
    relation: str
    weight: float
    session: object  # index into the friend's training sessions, or None


@dataclass
class CompletedGraph:
    center: int
    session: int
    neighbors: list = field(default_factory=list)


def latest_session_before(seq, window):
    """Index of the friend's last session whose window precedes ``window``."""
    windows = seq.windows()
    j = bisect.bisect_left(windows, window)
    return j - 1 if j > 0 else None


def _sample_real(user, session_index, real, k_real, seed):
    real = np.asarray(real, dtype=np.int64)
    if len(real) <= k_real:
        return real.tolist()
    rng = np.random.default_rng([seed, 0x7EA1, user, session_index])
    return sorted(rng.choice(real, size=k_real, replace=False).tolist())


def complete_graph(user, session, real_friends, virtual_friends, sequences, k_real=10, seed=0):
    """Ego network of ``user`` for one of their sessions.

    Real friends are subsampled to ``k_real`` with a seed fixed by
    ``(seed, user, session.index)``; ``virtual_friends`` is the ranked
    ``(user, score)`` list.  Each neighbour points at the friend's latest session
    strictly before this one (None when there is none).
    """
    window = session.window
    neighbors = []
    taken = {user}
    for f in _sample_real(user, session.index, real_friends, k_real, seed):
        if f in taken:
            continue
        taken.add(f)
        neighbors.append(Neighbor(f, REAL, 1.0, latest_session_before(sequences[f], window)))
    for f, score in virtual_friends:
        if f in taken:
            continue
        taken.add(f)
        neighbors.append(Neighbor(f, VIRTUAL, score, latest_session_before(sequences[f], window)))
    return CompletedGraph(user, session.index, neighbors)


class GraphCompleter:
    """Builds and caches completed ego graphs for every training session.

    ``use_real=False`` never touches the social edge list and
    ``use_virtual=False`` never trains or reads GloVe vectors;
    ``virtual_access`` counts every virtual-friend lookup.
    """

    def __init__(self, k_real=10, k_virtual=10, use_real=True, use_virtual=True,
                 glove=None, random_state=0):
        self.k_real = k_real
        self.k_virtual = k_virtual
        self.use_real = use_real
        self.use_virtual = use_virtual
        self.glove = glove
        self.random_state = random_state
        self.virtual_access = AccessCounter()

    def fit(self, ds, labels, sequences):
        self.sequences_ = sequences
        self.n_users_ = ds.n_users
        self.real_ = {}
        if self.use_real:
            self.real_ = {u: ds.friends(u) for u in range(ds.n_users)}
        self.virtual_ = {}
        self.embeddings_ = None
        if self.use_virtual and self.k_virtual > 0:
            self.virtual_access.hit()
            counts = build_cooccurrence(ds, labels)
            if counts.nnz:
                glove = self.glove if self.glove is not None else GloveEmbedder(random_state=self.random_state)
                self.embeddings_ = glove.fit(counts).embeddings_
                for u in range(ds.n_users):
                    excl = self.real_.get(u, ())
                    self.virtual_[u] = select_virtual_friends(self.embeddings_, u, self.k_virtual, excl)
        self._cache = {}
        return self

    @classmethod
    def from_state(cls, state, sequences, **params):
        obj = cls(**params)
        obj.sequences_ = sequences
        obj.n_users_ = len(sequences)
        obj.real_ = {int(u): np.asarray(f, dtype=np.int64) for u, f in state["real"].items()}
        obj.virtual_ = {int(u): [(int(a), float(b)) for a, b in v] for u, v in state["virtual"].items()}
        obj.embeddings_ = None
        obj._cache = {}
        return obj

    def state(self):
        return {
            "real": {str(u): np.asarray(f).tolist() for u, f in sorted(self.real_.items())},
            "virtual": {str(u): [[a, b] for a, b in v] for u, v in sorted(self.virtual_.items())},
        }

    def virtual_friends(self, user):
        self.virtual_access.hit()
        return self.virtual_.get(user, [])

    def graph(self, user, session_index):
        key = (user, session_index)
        g = self._cache.get(key)
        if g is None:
            real = self.real_.get(user, ()) if self.use_real else ()
            virtual = self.virtual_friends(user) if self.use_virtual else []
            session = self.sequences_[user].sessions[session_index]
            g = complete_graph(user, session, real, virtual, self.sequences_,
                               self.k_real if self.use_real else 0, self.random_state)
            self._cache[key] = g
        return g

    def edges(self):
        """Rows ``(user, friend, relation, weight, session)`` for every session."""
        for u, seq in enumerate(self.sequences_):
            for s in seq.sessions:
                for nb in self.graph(u, s.index).neighbors:
                    yield u, nb.user, nb.relation, nb.weight, s.index
