"""Dense float64 tensors with an eager reverse-mode gradient tape.

Operations record themselves on the active :class:`GradTape` when at least one
input requires a gradient. Outside a tape every op is a plain numpy call, so
evaluation code pays nothing for differentiability.

    with GradTape() as tape:
        loss = total(...)
    grads = tape.backward(loss)
"""
import threading

import numpy as np

from . import kernels

_state = threading.local()


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


def _active_tape():
    return getattr(_state, "tape", None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node_id", "__weakref__")
    __array_ufunc__ = None  # make ndarray (op) Tensor defer to Tensor's reflected ops

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.node_id = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def tensor(data, requires_grad=False):
    return Tensor(data, requires_grad=requires_grad)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class GradTape:
    """Ordered record of primitive ops; one per training step."""

    def __init__(self):
        self.nodes = []
        self._prev = None

    def __enter__(self):
        self._prev = _active_tape()
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False

    def record(self, inputs, output, backward):
        output.node_id = len(self.nodes)
        output.requires_grad = True
        self.nodes.append(_Node(inputs, output, backward))

    def backward(self, loss):
        """Propagate d(loss)/d(.) to every leaf that requires a gradient.

        Returns a dict mapping each such leaf tensor to its gradient array and
        also stores it on ``leaf.grad``.
        """
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        nid = loss.node_id
        if nid is None or nid >= len(self.nodes) or self.nodes[nid].output is not loss:
            raise TapeError("loss is not on this tape (detached or from another tape)")
        grads = {id(loss): np.ones_like(loss.data)}
        leaves = {}
        for node in reversed(self.nodes[: nid + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for x, gx in zip(node.inputs, in_grads):
                if gx is None or not isinstance(x, Tensor) or not x.requires_grad:
                    continue
                key = id(x)
                if key in grads:
                    grads[key] = grads[key] + gx
                else:
                    grads[key] = gx
                if x.node_id is None:
                    leaves[key] = x
        out = {}
        for key, leaf in leaves.items():
            leaf.grad = grads[key]
            out[leaf] = grads[key]
        return out


def backward(tape, loss):
    return tape.backward(loss)


def _make(data, inputs, backward_fn):
    out = Tensor(data)
    tape = _active_tape()
    if tape is not None and any(isinstance(x, Tensor) and x.requires_grad for x in inputs):
        tape.record(inputs, out, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# element-wise arithmetic
# ---------------------------------------------------------------------------


def add(a, b):
    ad, bd = _data(a), _data(b)
    out = ad + bd
    return _make(out, (a, b), lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(g, bd.shape)))


def sub(a, b):
    ad, bd = _data(a), _data(b)
    out = ad - bd
    return _make(out, (a, b), lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(-g, bd.shape)))


def mul(a, b):
    ad, bd = _data(a), _data(b)
    out = ad * bd
    return _make(out, (a, b), lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    ad, bd = _data(a), _data(b)
    out = ad / bd
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape)),
    )


def neg(a):
    return _make(-_data(a), (a,), lambda g: (-g,))


def power(a, k):
    """``a ** k`` for a constant exponent; the derivative at 0 is taken as 0 for k > 1."""
    ad = _data(a)
    k = float(k)
    out = ad**k

    def bw(g):
        if k == 0.0:
            return (np.zeros_like(ad),)
        if k == 1.0:
            return (g,)
        if k.is_integer() and k > 1.0:
            return (g * k * ad ** (k - 1.0),)
        safe = np.where(ad > 0, ad, 1.0)
        d = np.where(ad > 0, k * safe ** (k - 1.0), 0.0)
        return (g * d,)

    return _make(out, (a,), bw)


def exp(a):
    out = np.exp(_data(a))
    return _make(out, (a,), lambda g: (g * out,))


def expm1(a):
    ad = _data(a)
    out = np.expm1(ad)
    return _make(out, (a,), lambda g: (g * np.exp(ad),))


def log(a):
    ad = _data(a)
    return _make(np.log(ad), (a,), lambda g: (g / ad,))


def clip(a, lo, hi):
    ad = _data(a)
    out = np.clip(ad, lo, hi)
    return _make(out, (a,), lambda g: (g * ((ad >= lo) & (ad <= hi)),))


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = _sigmoid(_data(a))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a):
    out = np.tanh(_data(a))
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a):
    ad = _data(a)
    out = np.maximum(ad, 0.0)
    return _make(out, (a,), lambda g: (g * (ad > 0),))


def activation(x, kind):
    fns = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}
    try:
        return fns[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(fns)}") from None


def softplus(a):
    ad = _data(a)
    out = np.maximum(ad, 0.0) + np.log1p(np.exp(-np.abs(ad)))
    return _make(out, (a,), lambda g: (g * _sigmoid(ad),))


def bce_with_logits(logits, y):
    """Binary cross-entropy of ``sigmoid(logits)`` against constant labels ``y``."""
    zd = _data(logits)
    yd = np.asarray(y, dtype=np.float64)
    out = np.maximum(zd, 0.0) - zd * yd + np.log1p(np.exp(-np.abs(zd)))
    return _make(out, (logits,), lambda g: (g * (_sigmoid(zd) - yd),))


# ---------------------------------------------------------------------------
# reductions and normalisation
# ---------------------------------------------------------------------------


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    ad = _data(a)
    out = ad.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape).copy(),)

    return _make(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    ad = _data(a)
    n = ad.size if axis is None else np.prod([ad.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def max(a, axis, keepdims=False):  # noqa: A001
    """Maximum along one axis; the gradient goes to the first arg-max."""
    ad = _data(a)
    idx = np.argmax(ad, axis=axis)
    out = np.take_along_axis(ad, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        gx = np.zeros_like(ad)
        np.put_along_axis(gx, np.expand_dims(idx, axis), g, axis=axis)
        return (gx,)

    return _make(out, (a,), bw)


def softmax(a, axis=-1, mask=None):
    """Max-subtracted softmax. Masked-out entries get weight exactly 0; a slice
    with nothing unmasked yields all zeros."""
    ad = _data(a)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), ad.shape)
        filled = np.where(mask, ad, -np.inf)
        mx = np.max(filled, axis=axis, keepdims=True)
        mx = np.where(np.isfinite(mx), mx, 0.0)
        e = np.where(mask, np.exp(np.where(mask, ad, 0.0) - mx), 0.0)
        s = e.sum(axis=axis, keepdims=True)
        out = np.divide(e, s, out=np.zeros_like(e), where=s > 0)
    else:
        e = np.exp(ad - ad.max(axis=axis, keepdims=True))
        out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def matmul(a, b):
    ad, bd = _data(a), _data(b)
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {ad.shape} x {bd.shape}")
    out = ad @ bd
    return _make(out, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def reshape(a, shape):
    ad = _data(a)
    return _make(ad.reshape(shape), (a,), lambda g: (g.reshape(ad.shape),))


def transpose(a, axes=None):
    ad = _data(a)
    out = np.transpose(ad, axes)
    inv = None if axes is None else np.argsort(axes)
    return _make(out, (a,), lambda g: (np.transpose(g, inv),))


def expand_dims(a, axis):
    ad = _data(a)
    return reshape(a, np.expand_dims(ad, axis).shape)


def getitem(a, idx):
    ad = _data(a)
    out = ad[idx]

    def bw(g):
        gx = np.zeros_like(ad)
        if _needs_add_at(idx):
            np.add.at(gx, idx, g)
        else:
            gx[idx] = g
        return (gx,)

    return _make(np.array(out, copy=True), (a,), bw)


def _needs_add_at(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=-1):
    datas = [_data(t) for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = np.cumsum([d.shape[axis] for d in datas])[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, sizes, axis=axis)))


def stack(tensors, axis=0):
    datas = [_data(t) for t in tensors]
    out = np.stack(datas, axis=axis)
    n = len(datas)
    return _make(
        out,
        tuple(tensors),
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)),
    )


# ---------------------------------------------------------------------------
# fused recurrent gate
# ---------------------------------------------------------------------------


def gru_gates(gx, gh, h):
    """Gate arithmetic of a GRU cell given both pre-activation blocks.

    ``gx`` and ``gh`` are ``B x 3H`` laid out as [reset | update | candidate].
    """
    gxd, ghd, hd = _data(gx), _data(gh), _data(h)
    if gxd.shape != ghd.shape or gxd.shape[1] != 3 * hd.shape[1] or gxd.shape[0] != hd.shape[0]:
        raise ShapeError(f"gru_gates shape mismatch: gx {gxd.shape}, gh {ghd.shape}, h {hd.shape}")
    gxd = np.ascontiguousarray(gxd)
    ghd = np.ascontiguousarray(ghd)
    hd = np.ascontiguousarray(hd)
    h_new, r, z, n = kernels.gru_gates_forward(gxd, ghd, hd)

    def bw(g):
        return kernels.gru_gates_backward(np.ascontiguousarray(g), ghd, hd, r, z, n)

    return _make(h_new, (gx, gh, h), bw)


def numerical_gradient(f, x, eps=1e-5):
    """Central finite differences of scalar ``f()`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2.0 * eps)
    return g
