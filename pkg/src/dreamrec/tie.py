"""Temporal information encoding: gated fusion of successive session states."""

from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .exceptions import DimensionError


@dataclass
class TieParams:
    w_q: nk.Tensor
    w_e: nk.Tensor
    w_h: nk.Tensor
    u_h: nk.Tensor
    b_q: nk.Tensor
    b_e: nk.Tensor
    b_h: nk.Tensor

    @classmethod
    def init(cls, dim, rng, scale=None):
        scale = 1.0 / np.sqrt(dim) if scale is None else scale

        def mat():
            return nk.Tensor(rng.uniform(-scale, scale, (dim, dim)), requires_grad=True)

        def vec():
            return nk.Tensor(np.zeros(dim), requires_grad=True)

        return cls(mat(), mat(), mat(), mat(), vec(), vec(), vec())

    @classmethod
    def zeros(cls, dim):
        z = {k: nk.Tensor(np.zeros((dim, dim) if k[0] in "wu" else dim), requires_grad=True)
             for k in ("w_q", "w_e", "w_h", "u_h", "b_q", "b_e", "b_h")}
        return cls(**z)

    def named(self, prefix="tie"):
        return {f"{prefix}.{k}": v for k, v in vars(self).items()}


def _lin(m, x, b):
    # column-vector W x + b on row-major batches
    return x @ nk.transpose(m) + b


def tie_step(params, prev, current, literal_linear_gates=False, update_gate=None):
    """Fuse the carried state ``prev`` with the session output ``current``.

    Both are ``B x d`` (or ``d``).  ``update_gate`` overrides the interpolation
    gate with a constant, which pins the limits ``0 -> prev`` and
    ``1 -> candidate`` exactly.
    """
    prev, current = nk.constant(prev), nk.constant(current)
    if prev.shape != current.shape:
        raise DimensionError(f"TIE state {prev.shape} vs session output {current.shape}")
    vector = prev.data.ndim == 1
    if vector:
        prev, current = nk.reshape(prev, (1, -1)), nk.reshape(current, (1, -1))
    gate = (lambda v: v) if literal_linear_gates else nk.logistic
    if update_gate is None:
        u_q = gate(_lin(params.w_q, prev, params.b_q))
    else:
        u_q = nk.constant(np.broadcast_to(np.asarray(update_gate, dtype=np.float64), prev.shape))
    u_e = gate(_lin(params.w_e, current, params.b_e))
    cand = nk.tanh(_lin(params.w_h, current, params.b_h) + u_e * (prev @ nk.transpose(params.u_h)))
    out = (1.0 - u_q) * prev + u_q * cand
    return nk.reshape(out, (-1,)) if vector else out


def candidate(params, prev, current, literal_linear_gates=False):
    """The candidate state alone (what a unit update gate passes through)."""
    return tie_step(params, prev, current, literal_linear_gates, update_gate=1.0)


def tie_unroll(params, initial, outputs, literal_linear_gates=False):
    """Apply :func:`tie_step` along a sequence of session outputs.

    ``params`` may be a list with one entry per step.
    """
    if len(outputs) == 0:
        raise ValueError("TIE needs at least one session output")
    states = []
    state = initial
    for t, current in enumerate(outputs):
        p = params[t] if isinstance(params, (list, tuple)) else params
        state = tie_step(p, state, current, literal_linear_gates)
        states.append(state)
    return states
