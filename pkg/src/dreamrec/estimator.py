"""scikit-learn style front end for the whole pipeline."""

import logging

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import data as dt
from . import numkernel as nk
from .completion import GloveEmbedder, GraphCompleter
from .evaluator import STANDARD_NEGATIVES, STANDARD_REPEATS, ModelScorer, evaluate
from .exceptions import ModelingError
from .model import (DreamNetwork, Instance, ParamStore, VariantConfig, context_for,
                    load_checkpoint, make_instances, make_training_instances,
                    save_checkpoint, variant_config)
from .trainer import TrainConfig, train
from .validation import check_dataset, check_labels, check_query, check_split_name

log = logging.getLogger(__name__)

_VARIANT_FLAGS = ("aggregate_projected", "literal_linear_gates", "per_session_params",
                  "predict_from_tie_state", "head", "batch_norm")


class DreamRecommender(BaseEstimator):
    """Social session-based recommender.

    ``fit`` takes a :class:`~dreamrec.data.Dataset` and optional per-event
    split labels (a seeded 80/10/10 split otherwise).  ``predict_proba`` scores
    ``(user, item, timestamp)`` rows using the user's training sessions that
    precede the timestamp's window.
    """

    def __init__(self, variant="dream", n_sessions=None, dim=64, glove_dim=64, glove_epochs=30,
                 glove_learning_rate=0.05, k_real=10, k_virtual=10, granularity="month",
                 split_ratios=(0.8, 0.1, 0.1), learning_rate=1e-4, batch_size=32, max_epochs=100,
                 patience=5, l2=1e-5, n_negatives=4, resample_negatives=True, clip_norm=5.0,
                 max_session_len=20, validation_negatives=1000, head="dot",
                 aggregate_projected=False, literal_linear_gates=False, per_session_params=False,
                 predict_from_tie_state=False, batch_norm=False, random_state=0):
        self.variant = variant
        self.n_sessions = n_sessions
        self.dim = dim
        self.glove_dim = glove_dim
        self.glove_epochs = glove_epochs
        self.glove_learning_rate = glove_learning_rate
        self.k_real = k_real
        self.k_virtual = k_virtual
        self.granularity = granularity
        self.split_ratios = split_ratios
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.l2 = l2
        self.n_negatives = n_negatives
        self.resample_negatives = resample_negatives
        self.clip_norm = clip_norm
        self.max_session_len = max_session_len
        self.validation_negatives = validation_negatives
        self.head = head
        self.aggregate_projected = aggregate_projected
        self.literal_linear_gates = literal_linear_gates
        self.per_session_params = per_session_params
        self.predict_from_tie_state = predict_from_tie_state
        self.batch_norm = batch_norm
        self.random_state = random_state

    # -- configuration ------------------------------------------------------

    def variant_config(self):
        base = {k: getattr(self, k) for k in _VARIANT_FLAGS}
        if self.n_sessions is not None:
            base["sessions"] = self.n_sessions
        cfg = variant_config(self.variant, **base)
        if self.n_sessions is not None and cfg.sessions != self.n_sessions:
            raise ValueError(f"variant {self.variant} fixes sessions={cfg.sessions}")
        return cfg

    def train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           max_epochs=self.max_epochs, patience=self.patience,
                           seed=self.random_state, l2=self.l2, n_negatives=self.n_negatives,
                           resample_negatives=self.resample_negatives, clip_norm=self.clip_norm,
                           validation_negatives=self.validation_negatives)

    def _completer(self, v):
        glove = GloveEmbedder(dim=self.glove_dim, epochs=self.glove_epochs,
                              learning_rate=self.glove_learning_rate, random_state=self.random_state)
        return GraphCompleter(self.k_real, self.k_virtual, v.use_real, v.use_virtual, glove,
                              self.random_state)

    def _prepare(self, ds, labels):
        check_dataset(ds)
        self.dataset_ = ds
        if labels is None:
            labels = dt.split(ds, self.split_ratios, self.random_state)
        self.labels_ = check_labels(labels, ds)
        self.sequences_ = dt.segment_sessions(ds, self.granularity, self.labels_ == dt.TRAIN)
        self.variant_ = self.variant_config()

    # -- fitting ------------------------------------------------------------

    def fit(self, ds, labels=None):
        self._prepare(ds, labels)
        v = self.variant_
        self.completer_ = self._completer(v).fit(ds, self.labels_, self.sequences_)
        store = ParamStore.init(ds.n_users, ds.n_items, self.dim, v, self.random_state)
        self.network_ = DreamNetwork(store, v, self.completer_, self.sequences_, self.max_session_len)
        cfg = self.train_config()
        train_inst, self.skipped_train_ = make_training_instances(
            ds, self.labels_, self.sequences_, v.sessions, self.n_negatives,
            (self.random_state, 1), self.granularity)
        valid_inst, _ = make_instances(ds, self.labels_, self.sequences_, v.sessions, dt.VALID,
                                       self.granularity)
        result = train(self.network_, ds, train_inst, valid_inst, cfg,
                       valid_seed=(self.random_state, 2))
        self.network_.store = result.store
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_train_instances_ = len(train_inst)
        return self

    @property
    def store_(self):
        return self.network_.store

    # -- inference ----------------------------------------------------------

    def _query_instances(self, X):
        X = check_query(X, self.dataset_)
        windows = dt.window_of(X[:, 2], self.granularity)
        out = []
        for (u, item, _), w in zip(X.tolist(), windows.tolist()):
            ctx = context_for(self.sequences_[u], w, self.variant_.sessions)
            if ctx is None:
                raise ModelingError(f"user {u} ({self.dataset_.user_ids[u]}) has no training "
                                    "session before the query time")
            out.append(Instance(u, -1, ctx, item))
        return out

    def decision_function(self, X):
        """Raw ranking scores ``f(u_T, v)`` for ``(user, item, timestamp)`` rows."""
        check_is_fitted(self, "network_")
        insts = self._query_instances(X)
        reps = self.network_.represent(insts)
        items = np.array([[i.positive] for i in insts])
        return self.network_.logits(reps, items).data[:, 0].copy()

    def predict_proba(self, X):
        """Click probabilities for ``(user, item, timestamp)`` rows."""
        return nk.logistic(nk.Tensor(self.decision_function(X))).data

    def instances(self, split="test"):
        check_is_fitted(self, "network_")
        return make_instances(self.dataset_, self.labels_, self.sequences_, self.variant_.sessions,
                              check_split_name(split), self.granularity)

    def evaluate(self, split="test", n_negatives=STANDARD_NEGATIVES, repeats=STANDARD_REPEATS,
                 seed=None, k=10, scorer=None):
        """Sampled-negative ranking report on a split."""
        insts, skipped = self.instances(split)
        seed = (self.random_state, 3) if seed is None else seed
        scorer = ModelScorer(self.network_) if scorer is None else scorer
        return evaluate(scorer, self.dataset_, insts, n_negatives, repeats, seed, k, skipped)

    def score(self, X=None, y=None):
        """Test-split Recall@10 under the standard protocol."""
        return self.evaluate("test").recall

    # -- persistence --------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "network_")
        meta = {"params": _jsonable(self.get_params()),
                "completer": self.completer_.state(),
                "best_epoch": self.best_epoch_}
        save_checkpoint(path, self.network_.store, meta)

    @classmethod
    def load(cls, path, ds, labels=None):
        store, meta = load_checkpoint(path)
        params = dict(meta["params"])
        params["split_ratios"] = tuple(params["split_ratios"])
        est = cls(**params)
        est._prepare(ds, labels)
        v = est.variant_
        est.completer_ = GraphCompleter.from_state(
            meta["completer"], est.sequences_, k_real=est.k_real, k_virtual=est.k_virtual,
            use_real=v.use_real, use_virtual=v.use_virtual, random_state=est.random_state)
        est.network_ = DreamNetwork(store, v, est.completer_, est.sequences_, est.max_session_len)
        est.best_epoch_ = meta.get("best_epoch", 0)
        est.history_ = []
        return est


def _jsonable(params):
    out = {}
    for k, val in params.items():
        if isinstance(val, tuple):
            val = list(val)
        elif isinstance(val, np.generic):
            val = val.item()
        out[k] = val
    return out


__all__ = ["DreamRecommender", "VariantConfig"]
