"""GRU summary of a friend's previous session (their short-term interest)."""

from dataclasses import dataclass, fields

import numpy as np

from . import numkernel as nk

MAX_SESSION_LEN = 20


@dataclass
class GruParams:
    """Row-vector GRU: ``x @ w_* + h @ u_* + b_*`` for update, reset, candidate."""

    w_z: nk.Tensor
    u_z: nk.Tensor
    b_z: nk.Tensor
    w_r: nk.Tensor
    u_r: nk.Tensor
    b_r: nk.Tensor
    w_n: nk.Tensor
    u_n: nk.Tensor
    b_n: nk.Tensor

    @classmethod
    def init(cls, dim, rng, scale=None):
        scale = 1.0 / np.sqrt(dim) if scale is None else scale
        kw = {}
        for f in fields(cls):
            if f.name.startswith("b_"):
                kw[f.name] = nk.Tensor(np.zeros(dim), requires_grad=True)
            else:
                kw[f.name] = nk.Tensor(rng.uniform(-scale, scale, (dim, dim)), requires_grad=True)
        return cls(**kw)

    @classmethod
    def zeros(cls, dim):
        return cls(**{f.name: nk.Tensor(np.zeros(dim if f.name.startswith("b_") else (dim, dim)),
                                        requires_grad=True) for f in fields(cls)})

    def named(self, prefix="gru"):
        return {f"{prefix}.{f.name}": getattr(self, f.name) for f in fields(self)}

    @property
    def dim(self):
        return self.b_z.shape[0]


def gru_cell(p, x, h):
    """One step for a batch of rows; ``z = 1`` takes the candidate outright."""
    z = nk.logistic(x @ p.w_z + h @ p.u_z + p.b_z)
    r = nk.logistic(x @ p.w_r + h @ p.u_r + p.b_r)
    n = nk.tanh(x @ p.w_n + (r * h) @ p.u_n + p.b_n)
    return (1.0 - z) * h + z * n


def encode_session(params, item_vectors, max_len=MAX_SESSION_LEN):
    """Final hidden state after reading a session's item vectors in order.

    ``item_vectors`` is an ``L x d`` tensor; only the last ``max_len`` rows
    are read.  The initial state is zero.
    """
    item_vectors = nk.constant(item_vectors)
    length = item_vectors.shape[0]
    if length == 0:
        raise ValueError("cannot encode an empty session")
    start = max(0, length - max_len)
    h = nk.Tensor(np.zeros((1, params.dim)))
    for pos in range(start, length):
        h = gru_cell(params, nk.gather(item_vectors, [pos]), h)
    return nk.reshape(h, (params.dim,))


def encode_batch(params, item_table, sessions, max_len=MAX_SESSION_LEN):
    """Encode many item-index sessions at once; returns ``S x d``.

    Sessions are truncated to their most recent ``max_len`` items and
    right-padded; padded steps leave the hidden state untouched.
    """
    if not sessions:
        return nk.Tensor(np.zeros((0, params.dim)))
    clipped = [tuple(s)[-max_len:] for s in sessions]
    if any(len(s) == 0 for s in clipped):
        raise ValueError("cannot encode an empty session")
    lengths = np.array([len(s) for s in clipped])
    steps = int(lengths.max())
    index = np.zeros((len(clipped), steps), dtype=np.intp)
    for row, s in enumerate(clipped):
        index[row, :len(s)] = s
    h = nk.Tensor(np.zeros((len(clipped), params.dim)))
    for pos in range(steps):
        step = gru_cell(params, nk.gather(item_table, index[:, pos]), h)
        active = lengths > pos
        h = step if active.all() else nk.where(active[:, None], step, h)
    return h
