"""Relation-aware graph attention over completed ego networks.

Batches are padded: ``B`` centres with ``K`` neighbour slots each.  Slot
relations are coded ``0`` real, ``1`` virtual, ``-1`` padding.  The centre's
own attention logit is placed in the last column.
"""

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .completion import REAL, VIRTUAL

RELATION_CODES = {REAL: 0, VIRTUAL: 1}
PAD = -1


@dataclass
class RgatParams:
    p_real: nk.Tensor
    p_virtual: nk.Tensor
    w_real: nk.Tensor
    w_virtual: nk.Tensor
    w_self: nk.Tensor

    @classmethod
    def init(cls, dim, rng, scale=None):
        scale = 1.0 / np.sqrt(dim) if scale is None else scale

        def t(shape):
            return nk.Tensor(rng.uniform(-scale, scale, shape), requires_grad=True)

        return cls(t((dim, dim)), t((dim, dim)), t(2 * dim), t(2 * dim), t(2 * dim))

    def named(self, prefix="rgat"):
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}

    @property
    def dim(self):
        return self.p_real.shape[0]


@dataclass
class EgoBatch:
    center: nk.Tensor      # B x d, the carried user state
    neighbors: nk.Tensor   # (B*K) x d, friends' node inputs
    relations: np.ndarray  # B x K relation codes

    @classmethod
    def single(cls, center, neighbors, relations):
        """One ego network from a d-vector, a k x d matrix and relation names."""
        center = nk.reshape(nk.constant(center), (1, -1))
        d = center.shape[1]
        neighbors = nk.constant(neighbors) if len(relations) else nk.Tensor(np.zeros((0, d)))
        codes = np.array([[RELATION_CODES[r] for r in relations]], dtype=np.int64).reshape(1, -1)
        return cls(center, neighbors, codes)

    @property
    def mask(self):
        b = self.relations.shape[0]
        return np.concatenate([self.relations != PAD, np.ones((b, 1), dtype=bool)], axis=1)


def _halves(w, d):
    first = nk.reshape(nk.gather(w, np.arange(d)), (d, 1))
    second = nk.reshape(nk.gather(w, np.arange(d, 2 * d)), (d, 1))
    return first, second


def project(params, batch, relation_aware=True):
    """``P_r h_j`` for every slot (row-vector form ``h_j P_r^T``)."""
    z_real = batch.neighbors @ nk.transpose(params.p_real)
    if not relation_aware:
        return z_real
    z_virtual = batch.neighbors @ nk.transpose(params.p_virtual)
    virtual = (batch.relations.reshape(-1) == RELATION_CODES[VIRTUAL])[:, None]
    return nk.where(virtual, z_virtual, z_real)


def attention_logits(params, batch, projected=None, relation_aware=True):
    """``leaky_relu(w_r . [h_u || z_j])`` for every slot plus the self term."""
    b, k = batch.relations.shape
    d = params.dim
    if projected is None:
        projected = project(params, batch, relation_aware)
    rows = np.repeat(np.arange(b), k)
    a_real, z_real = _halves(params.w_real, d)
    if relation_aware:
        a_virtual, z_virtual = _halves(params.w_virtual, d)
        a_self, z_self = _halves(params.w_self, d)
        virtual = (batch.relations.reshape(-1) == RELATION_CODES[VIRTUAL])[:, None]
        e_real = nk.gather(batch.center @ a_real, rows) + projected @ z_real
        e_virtual = nk.gather(batch.center @ a_virtual, rows) + projected @ z_virtual
        e_nb = nk.where(virtual, e_virtual, e_real)
    else:
        a_self, z_self = a_real, z_real
        e_nb = nk.gather(batch.center @ a_real, rows) + projected @ z_real
    e_self = batch.center @ a_self + batch.center @ z_self
    return nk.leaky_relu(nk.concat([nk.reshape(e_nb, (b, k)), e_self], axis=1))


def attention_scores(params, batch, relation_aware=True):
    """Attention weights ``B x (K+1)``; padded slots are exactly zero."""
    return nk.softmax(attention_logits(params, batch, relation_aware=relation_aware),
                      axis=1, mask=batch.mask)


def aggregate_linear(params, batch, alpha, projected=None):
    """Pre-activation ``sum_j alpha_uj h_j`` (self state in the last slot)."""
    b, k = batch.relations.shape
    d = batch.center.shape[1]
    nodes = batch.neighbors if projected is None else projected
    stacked = nk.concat([nk.reshape(nodes, (b, k, d)), nk.reshape(batch.center, (b, 1, d))], axis=1)
    return nk.sum(nk.reshape(alpha, (b, k + 1, 1)) * stacked, axis=1)


def aggregate(params, batch, alpha, projected=None):
    """``tanh`` of the attention-weighted sum of node inputs."""
    return nk.tanh(aggregate_linear(params, batch, alpha, projected))


def rgat_forward(params, batch, relation_aware=True, aggregate_projected=False):
    """Scores and aggregation in one pass; returns ``(h_u, alpha, pre_activation)``."""
    z = project(params, batch, relation_aware)
    alpha = nk.softmax(attention_logits(params, batch, z, relation_aware), axis=1, mask=batch.mask)
    pre = aggregate_linear(params, batch, alpha, z if aggregate_projected else None)
    return nk.tanh(pre), alpha, pre
