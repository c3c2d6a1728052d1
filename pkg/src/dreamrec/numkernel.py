"""Dense float64 tensors with tape-based reverse-mode differentiation.

Ops record onto the innermost active :class:`Tape` (entered with ``with``).
Outside any tape the same functions just compute values, which is how
inference runs.  Only tensors that depend on a ``requires_grad`` leaf are
recorded.

    >>> w = Tensor([[2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum(mul(w, w))
    >>> backward(tape, loss)
    >>> w.grad
    array([[4.]])
"""

import contextvars
import os

import numpy as np

from .exceptions import DimensionError, NonFiniteError

LEAKY_SLOPE = 0.2

_active_tape = contextvars.ContextVar("dreamrec_active_tape", default=None)
_debug = bool(os.environ.get("DREAMREC_DEBUG"))


def set_debug(flag):
    """Toggle NaN/Inf checks after every op (also via ``DREAMREC_DEBUG=1``)."""
    global _debug
    _debug = bool(flag)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_produced")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._produced = False

    @classmethod
    def _wrap(cls, data, requires_grad):
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t.name = None
        t._produced = True
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def constant(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class _Record:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered log of differentiable ops for one forward pass."""

    def __init__(self):
        self.records = []
        self._token = None

    def __enter__(self):
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None
        return False

    def __len__(self):
        return len(self.records)


def _emit(op, data, inputs, backward_fn):
    if _debug and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires)
    tape = _active_tape.get()
    if tape is not None and requires:
        tape.records.append(_Record(out, inputs, backward_fn))
    return out


def backward(tape, loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Gradients add onto whatever is already stored; zero them between steps.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    seed = np.ones_like(loss.data)
    if not loss._produced:
        _accumulate_leaf(loss, seed)
        return
    pending = {id(loss): seed}
    # leaf totals are summed per pass, then added once, so repeated passes scale exactly
    leaves = {}
    for rec in reversed(tape.records):
        g = pending.pop(id(rec.out), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if inp._produced:
                pending[key] = pending[key] + gi if key in pending else gi
            elif key in leaves:
                leaves[key] = (inp, leaves[key][1] + gi)
            else:
                leaves[key] = (inp, gi)
    for inp, g in leaves.values():
        _accumulate_leaf(inp, g)


def _accumulate_leaf(t, g):
    g = np.asarray(g, dtype=np.float64).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary_shape(op, a, b):
    try:
        shape = np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match") from None
    if shape != a.shape and shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match")
    return shape


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    a, b = constant(a), constant(b)
    _binary_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = constant(a), constant(b)
    _binary_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = constant(a), constant(b)
    _binary_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b):
    a, b = constant(a), constant(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data
    return _emit("matmul", ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def tanh(x):
    x = constant(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _logistic(v):
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def logistic(x):
    x = constant(x)
    y = _logistic(x.data)
    return _emit("logistic", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    x = constant(x)
    on = x.data > 0
    return _emit("relu", np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def leaky_relu(x, slope=LEAKY_SLOPE):
    x = constant(x)
    k = np.where(x.data > 0, 1.0, slope)
    return _emit("leaky_relu", x.data * k, (x,), lambda g: (g * k,))


_UNARY = {"tanh": tanh, "logistic": logistic, "relu": relu, "leaky_relu": leaky_relu}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(tag, a, b=None):
    """Dispatch an elementwise op by name."""
    if tag in _BINARY:
        if b is None:
            raise ValueError(f"{tag} needs two operands")
        return _BINARY[tag](a, b)
    if tag in _UNARY:
        if b is not None:
            raise ValueError(f"{tag} takes one operand")
        return _UNARY[tag](a)
    raise ValueError(f"unknown elementwise op {tag!r}")


# ---------------------------------------------------------------------------
# reductions and normalisation


def softmax(x, axis=-1, mask=None):
    """Max-shifted softmax along ``axis``; masked-out entries get exactly 0.

    Every slice must keep at least one unmasked entry.
    """
    x = constant(x)
    if x.size == 0 or x.shape[axis] == 0:
        raise ValueError("softmax of an empty tensor")
    v = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), v.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax: a slice is fully masked")
        v = np.where(mask, v, -np.inf)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def grad(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", y, (x,), grad)


def sum(x, axis=None, keepdims=False):
    x = constant(x)
    shape = x.shape
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", np.asarray(out, dtype=np.float64), (x,), grad)


def sumsq(x):
    x = constant(x)
    d = x.data
    return _emit("sumsq", np.asarray(np.vdot(d, d)), (x,), lambda g: (2.0 * g * d,))


def sigmoid_cross_entropy(logits, targets):
    """Mean logistic loss, evaluated from logits in log-space."""
    logits = constant(logits)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise DimensionError(f"targets {y.shape} vs logits {logits.shape}")
    z = logits.data
    n = z.size
    losses = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    p = _logistic(z)
    return _emit("sigmoid_cross_entropy", np.asarray(losses.mean()), (logits,),
                 lambda g: (g * (p - y) / n,))


def batch_norm(x, gamma, beta, eps=1e-5):
    """Normalise rows of a 2-D batch with batch statistics.

    Returns ``(out, batch_mean, batch_var)``; the caller owns running stats.
    """
    x, gamma, beta = constant(x), constant(gamma), constant(beta)
    v = x.data
    mu = v.mean(axis=0)
    var = v.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv
    gd = gamma.data
    n = v.shape[0]

    def grad(g):
        gx = g * gd
        dx = inv / n * (n * gx - gx.sum(axis=0) - xhat * (gx * xhat).sum(axis=0))
        return dx, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _emit("batch_norm", xhat * gd + beta.data, (x, gamma, beta), grad), mu, var


# ---------------------------------------------------------------------------
# indexing and shape


def gather(x, index):
    """Rows ``x[index]`` for a 1-D integer index."""
    x = constant(x)
    idx = np.asarray(index, dtype=np.intp)
    shape = x.shape

    def grad(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("gather", x.data[idx], (x,), grad)


def concat(tensors, axis=0):
    tensors = tuple(constant(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum(sizes)[:-1]
    return _emit("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def reshape(x, shape):
    x = constant(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {exc}") from None
    return _emit("reshape", out, (x,), lambda g: (g.reshape(old),))


def transpose(x):
    x = constant(x)
    if x.data.ndim != 2:
        raise DimensionError("transpose expects a matrix")
    return _emit("transpose", x.data.T, (x,), lambda g: (g.T,))


def where(cond, a, b):
    """Select ``a`` where ``cond`` holds, else ``b``; bit-exact passthrough."""
    a, b = constant(a), constant(b)
    shape = _binary_shape("where", a, b)
    c = np.broadcast_to(np.asarray(cond, dtype=bool), shape)
    sa, sb = a.shape, b.shape
    return _emit("where", np.where(c, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(np.where(c, g, 0.0), sa),
                            _unbroadcast(np.where(c, 0.0, g), sb)))


# ---------------------------------------------------------------------------
# finite differences


def gradcheck(fn, params, eps=1e-5):
    """Compare tape gradients of scalar ``fn()`` against central differences.

    ``params`` maps names to leaf tensors.  Returns, per name, the max
    absolute discrepancy divided by the larger of the two gradients' max
    magnitudes (0 when both vanish).
    """
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = fn()
    backward(tape, loss)
    report = {}
    for name, p in params.items():
        analytic = np.zeros(p.shape) if p.grad is None else p.grad.copy()
        numeric = np.zeros(p.shape)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = float(fn().data)
            flat[k] = orig - eps
            down = float(fn().data)
            flat[k] = orig
            nflat[k] = (up - down) / (2.0 * eps)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
        err = np.abs(analytic - numeric).max(initial=0.0)
        report[name] = 0.0 if scale == 0.0 else err / scale
    return report
