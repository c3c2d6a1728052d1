"""Full model: per-session graph attention fused over sessions, then ranking."""

import base64
import bisect
import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .data import TRAIN, sample_negatives, window_of
from .exceptions import ConfigError, ModelingError
from .rgat import PAD, RELATION_CODES, EgoBatch, RgatParams, rgat_forward
from .seq_encoder import MAX_SESSION_LEN, GruParams, encode_batch, gru_cell
from .tie import TieParams, tie_step

CHECKPOINT_FORMAT = "dreamrec-checkpoint"
CHECKPOINT_VERSION = 1
BN_MOMENTUM = 0.1


@dataclass(frozen=True)
class VariantConfig:
    use_real: bool = True
    use_virtual: bool = True
    relation_aware: bool = True
    temporal: str = "tie"
    sessions: int = 2
    aggregate_projected: bool = False
    literal_linear_gates: bool = False
    per_session_params: bool = False
    predict_from_tie_state: bool = False
    head: str = "dot"
    batch_norm: bool = False
    allow_center_only: bool = False

    def __post_init__(self):
        if self.temporal not in ("tie", "gru", "none"):
            raise ConfigError(f"temporal must be tie, gru or none, got {self.temporal!r}")
        if self.head not in ("dot", "mlp"):
            raise ConfigError(f"head must be dot or mlp, got {self.head!r}")
        if self.sessions < 1:
            raise ConfigError("sessions must be at least 1")
        if not (self.use_real or self.use_virtual or self.allow_center_only):
            raise ConfigError("at least one of use_real/use_virtual is required")


VARIANTS = {
    "dream": {},
    "dream-r": {"use_virtual": False},
    "dream-v": {"use_real": False},
    "dream-gat": {"relation_aware": False},
    "dream-tgru": {"temporal": "gru"},
    "dream-s1": {"sessions": 1},
    "dream-s3": {"sessions": 3},
}


def variant_config(name, **overrides):
    """Named ablation on top of ``overrides`` (the name wins on conflicts)."""
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return VariantConfig(**{**overrides, **VARIANTS[name]})


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Every learnable tensor, addressable by a stable dotted name."""

    def __init__(self, tensors, buffers=None):
        self.tensors = dict(tensors)
        self.buffers = dict(buffers or {})

    @classmethod
    def init(cls, n_users, n_items, dim, variant, seed=0, init_range=0.05):
        rng = np.random.default_rng([seed, 0xD7EA])
        t = {
            "user_emb": nk.Tensor(rng.uniform(-init_range, init_range, (n_users, dim)), requires_grad=True),
            "item_emb": nk.Tensor(rng.uniform(-init_range, init_range, (n_items, dim)), requires_grad=True),
        }
        t.update(GruParams.init(dim, rng).named("gru"))
        t.update(RgatParams.init(dim, rng).named("rgat"))
        if variant.temporal == "tie":
            n_tie = variant.sessions if variant.per_session_params else 1
            for k in range(n_tie):
                t.update(TieParams.init(dim, rng).named(f"tie{k}"))
        elif variant.temporal == "gru":
            t.update(GruParams.init(dim, rng).named("tgru"))
        if variant.head == "mlp":
            s = 1.0 / np.sqrt(dim)
            t["head.w1"] = nk.Tensor(rng.uniform(-s, s, (2 * dim, dim)), requires_grad=True)
            t["head.b1"] = nk.Tensor(np.zeros(dim), requires_grad=True)
            t["head.w2"] = nk.Tensor(rng.uniform(-s, s, (dim, 1)), requires_grad=True)
            t["head.b2"] = nk.Tensor(np.zeros(1), requires_grad=True)
        buffers = {}
        if variant.batch_norm:
            t["bn.gamma"] = nk.Tensor(np.ones(dim), requires_grad=True)
            t["bn.beta"] = nk.Tensor(np.zeros(dim), requires_grad=True)
            buffers = {"bn.mean": np.zeros(dim), "bn.var": np.ones(dim)}
        return cls(t, buffers)

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    @property
    def dim(self):
        return self.tensors["user_emb"].shape[1]

    def gru(self, prefix="gru"):
        return GruParams(**{f.name: self.tensors[f"{prefix}.{f.name}"] for f in fields(GruParams)})

    def rgat(self):
        return RgatParams(**{f.name: self.tensors[f"rgat.{f.name}"] for f in fields(RgatParams)})

    def tie(self, k=0):
        return TieParams(**{f.name: self.tensors[f"tie{k}.{f.name}"] for f in fields(TieParams)})

    def zero_grad(self):
        for p in self.tensors.values():
            p.zero_grad()

    def copy(self):
        return ParamStore({k: nk.Tensor(v.data, requires_grad=True) for k, v in self.tensors.items()},
                          {k: v.copy() for k, v in self.buffers.items()})

    def l2(self):
        return nk.sum(nk.concat([nk.reshape(nk.sumsq(p), (1,)) for p in self.tensors.values()]))


def _encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(blob):
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).astype(np.float64)


def save_checkpoint(path, store, meta=None):
    """Write tensors as base64 little-endian float64 inside JSON (bit-exact)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tensors": {k: _encode_array(v.data) for k, v in sorted(store.tensors.items())},
        "buffers": {k: _encode_array(v) for k, v in sorted(store.buffers.items())},
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1))


def load_checkpoint(path):
    """Returns ``(ParamStore, meta)``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    tensors = {k: nk.Tensor(_decode_array(v), requires_grad=True) for k, v in payload["tensors"].items()}
    buffers = {k: _decode_array(v) for k, v in payload["buffers"].items()}
    return ParamStore(tensors, buffers), payload["meta"]


# ---------------------------------------------------------------------------
# instances


@dataclass
class Instance:
    user: int
    event: int
    context: tuple
    positive: int
    negatives: np.ndarray = None


def context_for(seq, window, n_sessions):
    """The ``n_sessions`` latest sessions strictly before ``window``.

    Short histories are front-padded with the earliest available session.
    Returns None when nothing precedes the window.
    """
    j = bisect.bisect_left(seq.windows(), window)
    if j == 0:
        return None
    ctx = list(range(max(0, j - n_sessions), j))
    return tuple([ctx[0]] * (n_sessions - len(ctx)) + ctx)


def make_instances(ds, labels, sequences, n_sessions, split_code, granularity="month"):
    """Target events of one split with their training-session context.

    Returns ``(instances, skipped)`` where ``skipped`` counts events whose
    user has no earlier training session.
    """
    rows = np.flatnonzero(np.asarray(labels) == split_code)
    windows = window_of(ds.events[rows, 2], granularity)
    out, skipped = [], 0
    for row, w in zip(rows.tolist(), windows.tolist()):
        u, item = int(ds.events[row, 0]), int(ds.events[row, 1])
        ctx = context_for(sequences[u], w, n_sessions)
        if ctx is None:
            skipped += 1
            continue
        out.append(Instance(u, row, ctx, item))
    return out, skipped


def attach_negatives(ds, instances, n_negatives, seed):
    for inst in instances:
        free = ds.n_items - len(ds.interacted(inst.user))
        inst.negatives = sample_negatives(ds, inst.user, min(n_negatives, free), (seed, inst.event))
    return instances


def make_training_instances(ds, labels, sequences, n_sessions, n_negatives=4, seed=0,
                            granularity="month"):
    """Training targets with context and ``n_negatives`` unrated items each."""
    instances, skipped = make_instances(ds, labels, sequences, n_sessions, TRAIN, granularity)
    return attach_negatives(ds, instances, n_negatives, seed), skipped


# ---------------------------------------------------------------------------
# forward


class DreamNetwork:
    """Batched forward pass over padded ego graphs."""

    def __init__(self, store, variant, completer, sequences, max_session_len=MAX_SESSION_LEN):
        self.store = store
        self.variant = variant
        self.completer = completer
        self.sequences = sequences
        self.max_session_len = max_session_len

    def _graphs(self, instances):
        graphs = []
        for inst in instances:
            if len(inst.context) != self.variant.sessions:
                raise ModelingError(f"user {inst.user}: context has {len(inst.context)} sessions, "
                                    f"model expects {self.variant.sessions}")
            try:
                graphs.append([self.completer.graph(inst.user, s) for s in inst.context])
            except (IndexError, KeyError) as exc:
                raise ModelingError(f"user {inst.user}: unresolvable context {inst.context}") from exc
        return graphs

    def _node_table(self, graphs):
        enc_keys, fb_users = {}, {}
        for per_user in graphs:
            for g in per_user:
                for nb in g.neighbors:
                    if nb.session is None:
                        fb_users.setdefault(nb.user, len(fb_users))
                    else:
                        enc_keys.setdefault((nb.user, nb.session), len(enc_keys))
        s = self.store
        sessions = [self.sequences[f].sessions[j].items for f, j in enc_keys]
        enc = encode_batch(s.gru(), s["item_emb"], sessions, self.max_session_len)
        fb = nk.gather(s["user_emb"], np.fromiter(fb_users, dtype=np.intp, count=len(fb_users)))
        table = nk.concat([enc, fb, nk.Tensor(np.zeros((1, s.dim)))], axis=0)
        base = len(enc_keys)
        pad_row = base + len(fb_users)

        def row(nb):
            if nb.session is None:
                return base + fb_users[nb.user]
            return enc_keys[(nb.user, nb.session)]

        return table, row, pad_row

    def _batch_norm(self, pre, training):
        s = self.store
        if training:
            out, mu, var = nk.batch_norm(pre, s["bn.gamma"], s["bn.beta"])
            s.buffers["bn.mean"] = (1 - BN_MOMENTUM) * s.buffers["bn.mean"] + BN_MOMENTUM * mu
            s.buffers["bn.var"] = (1 - BN_MOMENTUM) * s.buffers["bn.var"] + BN_MOMENTUM * var
            return out
        inv = 1.0 / np.sqrt(s.buffers["bn.var"] + 1e-5)
        return (pre - s.buffers["bn.mean"]) * inv * s["bn.gamma"] + s["bn.beta"]

    def represent(self, instances, training=False):
        """User vectors used for ranking, ``B x d``."""
        v = self.variant
        s = self.store
        graphs = self._graphs(instances)
        table, row, pad_row = self._node_table(graphs)
        k = max((len(g.neighbors) for per in graphs for g in per), default=0)
        b = len(instances)
        state = nk.gather(s["user_emb"], [inst.user for inst in instances])
        rgat = s.rgat()
        out = None
        for t in range(v.sessions):
            idx = np.full((b, k), pad_row, dtype=np.intp)
            rel = np.full((b, k), PAD, dtype=np.int64)
            for bi, per in enumerate(graphs):
                for j, nb in enumerate(per[t].neighbors):
                    idx[bi, j] = row(nb)
                    rel[bi, j] = RELATION_CODES[nb.relation]
            batch = EgoBatch(state, nk.gather(table, idx.reshape(-1)), rel)
            out, _, pre = rgat_forward(rgat, batch, v.relation_aware, v.aggregate_projected)
            if v.batch_norm:
                out = nk.tanh(self._batch_norm(pre, training))
            if t == v.sessions - 1 and not v.predict_from_tie_state:
                break
            if v.temporal == "tie":
                state = tie_step(s.tie(t if v.per_session_params else 0), state, out,
                                 v.literal_linear_gates)
            elif v.temporal == "gru":
                state = gru_cell(s.gru("tgru"), out, state)
        return state if v.predict_from_tie_state else out

    def logits(self, reps, items):
        """Ranking scores ``f(u, v)`` for a ``B x C`` item grid."""
        s = self.store
        items = np.asarray(items, dtype=np.intp)
        b, c = items.shape
        d = s.dim
        vecs = nk.gather(s["item_emb"], items.reshape(-1))
        if self.variant.head == "dot":
            return nk.sum(nk.reshape(reps, (b, 1, d)) * nk.reshape(vecs, (b, c, d)), axis=2)
        users = nk.gather(reps, np.repeat(np.arange(b), c))
        hidden = nk.relu(nk.concat([users, vecs], axis=1) @ s["head.w1"] + s["head.b1"])
        return nk.reshape(hidden @ s["head.w2"] + s["head.b2"], (b, c))

    def loss(self, instances, l2=1e-5, training=True):
        """Mean sigmoid cross-entropy over positives and sampled negatives plus L2.

        Instances may carry fewer negatives when a user has rated most of the
        catalogue; every (instance, item) pair then weighs the same.
        """
        reps = self.represent(instances, training)
        widths = np.array([1 + len(inst.negatives) for inst in instances])
        total = widths.sum()
        data = None
        for w in np.unique(widths):
            rows = np.flatnonzero(widths == w)
            items = np.stack([np.concatenate([[instances[r].positive], instances[r].negatives])
                              for r in rows]).astype(np.intp)
            targets = np.zeros(items.shape)
            targets[:, 0] = 1.0
            part = nk.sigmoid_cross_entropy(self.logits(nk.gather(reps, rows), items), targets)
            if len(rows) != len(instances):
                part = part * (items.size / total)
            data = part if data is None else data + part
        if l2 > 0:
            return data + l2 * self.store.l2()
        return data

    def predict(self, rep, item):
        """Click probability for one user vector and one item."""
        logit = self.logits(nk.reshape(nk.constant(rep), (1, -1)), [[item]])
        return float(nk.logistic(logit).data[0, 0])
