"""Dense tensors with a define-by-run reverse-mode gradient tape.

Every op computes its result eagerly with numpy.  While a ``GradTape`` is
active and at least one input requires a gradient, the op also appends a
node holding its inputs, outputs and a backward closure.  Nodes are appended
in execution order, so the tape is topologically sorted by construction and
``backward`` is a single reverse sweep.

Ops with several outputs (the fused LIF scan) are supported: a node's
backward receives one gradient slot per output, ``None`` for outputs that
received no gradient.

Example::

    w = Tensor([1.0, -2.0], requires_grad=True)
    with GradTape() as tape:
        loss = (w * w).sum()
    grads = tape.backward(loss)
    grads[w]          # array([ 2., -4.])
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, NumericError

# Upper bound on im2col buffer elements; conv ops process the batch in chunks.
COL_BUDGET = 1 << 24

_ACTIVE_TAPES: list["GradTape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{rg}{tag})"

    def __len__(self):
        return len(self.data)

    # arithmetic
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        if exponent != 2:
            raise NotImplementedError("only squaring is supported")
        return square(self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self):
        return total(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


@dataclass
class Node:
    op: str
    inputs: tuple
    outputs: tuple
    backward: Callable

    @property
    def input_ids(self):
        return tuple(id(t) for t in self.inputs)

    @property
    def output_ids(self):
        return tuple(id(t) for t in self.outputs)


class GradTape:
    """Records ops executed inside a ``with`` block."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.remove(self)
        return False

    def record(self, node):
        self.nodes.append(node)

    def backward(self, loss, params=None, retain=False):
        return backward(self, loss, params, retain)


def active_tape():
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


@contextmanager
def no_grad():
    """Suspend recording on every active tape."""
    saved = _ACTIVE_TAPES[:]
    _ACTIVE_TAPES.clear()
    try:
        yield
    finally:
        _ACTIVE_TAPES[:] = saved


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None and np.ndim(x) == 0 else None
    return Tensor(np.asarray(x, dtype=dtype))


def apply_op(op, inputs, outputs, backward_fn):
    """Wrap raw output arrays as Tensors and record the op if needed.

    ``backward_fn(grads_out)`` receives one gradient (or None) per output and
    returns one gradient (or None) per input.
    """
    outs = tuple(Tensor(o) for o in outputs)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        for o in outs:
            o.requires_grad = True
        tape.record(Node(op, tuple(inputs), outs, backward_fn))
    return outs


def _single(op, inputs, out, backward_fn):
    return apply_op(op, inputs, (out,), lambda g: backward_fn(g[0]))[0]


def backward(tape, loss, params=None, retain=False):
    """Reverse sweep over ``tape``; returns a dict mapping Tensor -> grad.

    Leaves that require gradients also get ``.grad`` set.  Tensors listed in
    ``params`` that the loss does not depend on receive zero gradients.
    Gradients of intermediate tensors are dropped once consumed unless
    ``retain`` is set.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    keep: dict[int, Tensor] = {}
    produced = set()
    if loss.requires_grad:
        grads[id(loss)] = np.ones_like(loss.data)
        keep[id(loss)] = loss
    for node in reversed(tape.nodes):
        gouts = [grads.get(id(o)) for o in node.outputs]
        for o in node.outputs:
            produced.add(id(o))
        if all(g is None for g in gouts):
            continue
        gins = node.backward(gouts)
        if not retain:
            for o in node.outputs:
                grads.pop(id(o), None)
        for inp, g in zip(node.inputs, gins):
            if g is None or not inp.requires_grad:
                continue
            if g.shape != inp.shape:
                raise DimensionError(
                    f"{node.op}: gradient shape {g.shape} != input shape {inp.shape}"
                )
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
                keep[key] = inp
    result = {}
    for key, g in grads.items():
        t = keep[key]
        result[t] = g
        if key not in produced:
            t.grad = g
    for p in params or ():
        if p not in result:
            g = np.zeros_like(p.data)
            result[p] = g
            p.grad = g
    return result


# ---------------------------------------------------------------------------
# elementwise and structural ops


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    sa, sb = a.shape, b.shape
    return _single(
        "add", (a, b), a.data + b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    sa, sb = a.shape, b.shape
    return _single(
        "sub", (a, b), a.data - b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b):
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _single("mul", (a, b), ad * bd, bw)


def square(a):
    d = a.data
    return _single("square", (a,), d * d, lambda g: (2 * d * g,))


def absolute(a):
    # np.sign(0) == 0: the subgradient at zero is taken as 0
    d = a.data
    return _single("abs", (a,), np.abs(d), lambda g: (np.sign(d) * g,))


def exp(a):
    out = np.exp(a.data)
    return _single("exp", (a,), out, lambda g: (out * g,))


def relu(a):
    mask = a.data > 0
    return _single("relu", (a,), np.where(mask, a.data, 0).astype(a.dtype), lambda g: (g * mask,))


def total(a):
    shape, dtype = a.shape, a.dtype
    out = np.asarray(a.data.sum(dtype=dtype), dtype=dtype)
    return _single("sum", (a,), out, lambda g: (np.broadcast_to(g, shape).astype(dtype),))


def reshape(a, shape):
    src = a.shape
    out = a.data.reshape(shape)
    return _single("reshape", (a,), out, lambda g: (g.reshape(src),))


def take(a, index):
    src, dtype = a.shape, a.dtype

    def bw(g):
        full = np.zeros(src, dtype=dtype)
        full[index] = g
        return (full,)

    return _single("getitem", (a,), a.data[index], bw)


# ---------------------------------------------------------------------------
# linear maps


def affine(x, weights, bias=None):
    """``x @ weights (+ bias)`` for x of shape (N, I) and weights (I, J)."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise DimensionError(f"affine: input {x.shape} incompatible with weights {weights.shape}")
    if bias is not None and bias.shape != (weights.shape[1],):
        raise DimensionError(f"affine: bias {bias.shape} does not match weights {weights.shape}")
    xd, wd = x.data, weights.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data
    inputs = (x, weights) if bias is None else (x, weights, bias)

    def bw(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if weights.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _single("affine", inputs, out, bw)


def _chunk(batch, per_item):
    return max(1, min(batch, COL_BUDGET // max(per_item, 1)))


def _im2col(x, k):
    b, c, h, w = x.shape
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # b, c, ho, wo, k, k
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * (h - k + 1) * (w - k + 1), c * k * k)


def conv2d_array(x, kernels):
    """Valid stride-1 cross-correlation of (B,C,H,W) with (O,C,k,k)."""
    b, c, h, w = x.shape
    o, c2, k, k2 = kernels.shape
    if c != c2 or k != k2:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernels {kernels.shape}")
    if h < k or w < k:
        raise DimensionError(f"conv2d: input {x.shape} smaller than {k}x{k} kernel")
    ho, wo = h - k + 1, w - k + 1
    kmat = kernels.reshape(o, c * k * k).T
    out = np.empty((b, o, ho, wo), dtype=np.result_type(x, kernels))
    step = _chunk(b, ho * wo * c * k * k)
    for s in range(0, b, step):
        cols = _im2col(x[s : s + step], k)
        res = cols @ kmat
        out[s : s + step] = res.reshape(-1, ho, wo, o).transpose(0, 3, 1, 2)
    return out


def deconv2d_array(x, kernels):
    """Stride-1 transposed convolution of (B,Cin,H,W) with (Cin,Cout,k,k).

    out[b, o, y+i, x+j] += x[b, c, y, x] * kernels[c, o, i, j]; this is the
    adjoint of ``conv2d_array`` with the same kernel array.
    """
    b, cin, h, w = x.shape
    cin2, cout, k, k2 = kernels.shape
    if cin != cin2 or k != k2:
        raise DimensionError(f"deconv2d: input {x.shape} incompatible with kernels {kernels.shape}")
    out = np.zeros((b, cout, h + k - 1, w + k - 1), dtype=np.result_type(x, kernels))
    kmat = kernels.reshape(cin, cout * k * k)
    step = _chunk(b, h * w * cout * k * k)
    for s in range(0, b, step):
        xs = x[s : s + step]
        n = xs.shape[0]
        spread = (xs.transpose(0, 2, 3, 1).reshape(-1, cin) @ kmat).reshape(n, h, w, cout, k, k)
        spread = spread.transpose(0, 3, 4, 5, 1, 2)  # n, cout, k, k, h, w
        dst = out[s : s + step]
        for i in range(k):
            for j in range(k):
                dst[:, :, i : i + h, j : j + w] += spread[:, :, i, j]
    return out


def _conv_kernel_grad(x, g, k):
    """d/dK of sum(g * conv2d(x, K)); shape (O, C, k, k)."""
    b, c = x.shape[:2]
    o, ho, wo = g.shape[1:]
    acc = np.zeros((o, c * k * k), dtype=np.result_type(x, g))
    step = _chunk(b, ho * wo * c * k * k)
    for s in range(0, b, step):
        cols = _im2col(x[s : s + step], k)
        gm = g[s : s + step].transpose(0, 2, 3, 1).reshape(-1, o)
        acc += gm.T @ cols
    return acc.reshape(o, c, k, k)


def _deconv_kernel_grad(x, g, k):
    """d/dK of sum(g * deconv2d(x, K)); shape (Cin, Cout, k, k)."""
    b, cin, h, w = x.shape
    cout = g.shape[1]
    acc = np.zeros((cin, cout * k * k), dtype=np.result_type(x, g))
    step = _chunk(b, h * w * cout * k * k)
    for s in range(0, b, step):
        cols = _im2col(g[s : s + step], k)
        xm = x[s : s + step].transpose(0, 2, 3, 1).reshape(-1, cin)
        acc += xm.T @ cols
    return acc.reshape(cin, cout, k, k)


def conv2d(x, kernels):
    if x.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input and kernels, got {x.shape}, {kernels.shape}")
    xd, kd = x.data, kernels.data
    k = kd.shape[-1]

    def bw(g):
        gx = deconv2d_array(g, kd).astype(xd.dtype, copy=False) if x.requires_grad else None
        gk = _conv_kernel_grad(xd, g, k).astype(kd.dtype, copy=False) if kernels.requires_grad else None
        return gx, gk

    return _single("conv2d", (x, kernels), conv2d_array(xd, kd), bw)


def deconv2d(x, kernels):
    if x.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(f"deconv2d: expected 4-D input and kernels, got {x.shape}, {kernels.shape}")
    xd, kd = x.data, kernels.data
    k = kd.shape[-1]

    def bw(g):
        gx = conv2d_array(g, kd).astype(xd.dtype, copy=False) if x.requires_grad else None
        gk = _deconv_kernel_grad(xd, g, k).astype(kd.dtype, copy=False) if kernels.requires_grad else None
        return gx, gk

    return _single("deconv2d", (x, kernels), deconv2d_array(xd, kd), bw)


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], h=1e-5, indices=None):
    """Compare tape gradients of ``f`` with central differences.

    ``f`` must be deterministic (seed any RNG inside it).  ``indices`` may map
    a parameter to a subset of flat positions to probe.  Returns the max over
    probed entries of ``|analytic - numeric| / max(1, |analytic|)``.
    """
    params = list(params)
    if not params:
        return 0.0
    with GradTape() as tape:
        loss = f()
    grads = tape.backward(loss, params)
    worst = 0.0
    for p in params:
        analytic = grads[p].reshape(-1)
        flat = p.data.reshape(-1)
        probe = range(flat.size) if indices is None or p not in indices else indices[p]
        for i in probe:
            orig = flat[i]
            flat[i] = orig + h
            up = float(f().data)
            flat[i] = orig - h
            down = float(f().data)
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            if not (math.isfinite(up) and math.isfinite(down)):
                raise NumericError(f"non-finite loss while probing {p.name or 'parameter'}[{i}]")
            err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
            worst = max(worst, err)
    return worst
