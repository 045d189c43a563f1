"""Reverse-mode automatic differentiation over dense numpy tensors.

The operation set is closed and fixed: ``linear``, ``matmul``, elementwise
``add``/``sub``/``mul``/``scale``, activations (``relu``, ``silu``,
``softmax``), ``log``, reductions ``mean``/``total``, ``concat`` and
``cast``. Operations executed inside a ``Tape`` context are recorded as a
Wengert list; ``backward`` replays the list once in reverse.

Training runs in float32. ``softmax`` always returns float64 so that
probability rows sum to 1 at far better than float32 precision; its
backward rule casts gradients back to the input dtype, keeping the heavy
matmul paths in float32.
"""

import numpy as np

from .errors import ContractError, DimensionError

DEFAULT_DTYPE = np.float32

_SOFTMAX_FLOOR = 1e-12


class Tensor:
    """Dense n-dimensional array with an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


class ParameterSet:
    """Named, insertion-ordered map of trainable tensors."""

    def __init__(self):
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        if not isinstance(value, Tensor):
            value = Tensor(value, requires_grad=True)
        value.requires_grad = True
        self._params[name] = value
        return value

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grads(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def num_entries(self):
        return sum(t.size for t in self._params.values())

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    @staticmethod
    def union(*groups):
        """Combine ``(prefix, ParameterSet)`` pairs into one set sharing the
        underlying tensors."""
        merged = ParameterSet()
        for prefix, ps in groups:
            for name, t in ps.items():
                merged._params[f"{prefix}.{name}"] = t
        return merged


_TAPE_STACK = []


class Tape:
    """Ordered record of executed operations for one backward pass."""

    def __init__(self):
        self._ops = []
        self._watched = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def watch(self, *targets):
        """Register tensors (or ParameterSets) so backward always assigns
        them a gradient, zero if the loss never reaches them."""
        for target in targets:
            if isinstance(target, ParameterSet):
                self._watched.extend(target.tensors())
            else:
                self._watched.append(target)

    def __len__(self):
        return len(self._ops)


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make_output(data, inputs, backward_fn):
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires, dtype=data.dtype)
    tape = _active_tape()
    if tape is not None and requires:
        tape._ops.append((inputs, out, backward_fn))
    return out


def backward(loss, tape):
    """Populate ``grad`` on every requires_grad tensor the tape touched.

    Gradients hold d(loss)/d(tensor); tensors unreachable from the loss
    (including explicitly watched ones) receive zeros. Existing grads are
    overwritten, not accumulated across calls.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("backward expects a scalar loss tensor")
    seen = {}
    for inputs, out, _ in tape._ops:
        for t in inputs:
            seen.setdefault(id(t), t)
        seen.setdefault(id(out), out)
    for t in tape._watched:
        seen.setdefault(id(t), t)

    grads = {id(loss): np.ones_like(loss.data)}
    for inputs, out, backward_fn in reversed(tape._ops):
        g = grads.get(id(out))
        if g is None:
            continue
        for t, ig in zip(inputs, backward_fn(g)):
            if ig is None or not t.requires_grad:
                continue
            prev = grads.get(id(t))
            # never mutate stored arrays in place; closures may alias them
            grads[id(t)] = ig if prev is None else prev + ig
    for t in seen.values():
        if t.requires_grad:
            g = grads.get(id(t))
            t.grad = np.zeros_like(t.data) if g is None else np.asarray(g, dtype=t.dtype)


def _check_same_dtype(op, *tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"{op}: mixed dtypes {sorted(map(str, dtypes))}; insert an explicit cast")


# ---------------------------------------------------------------------------
# operations


def linear(x, w, b=None):
    """out[i, j] = sum_k x[i, k] * w[k, j] (+ b[j])."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError(f"linear expects 2-d x and w, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: inner axes disagree, x has {x.shape[1]} columns but w has {w.shape[0]} rows")
    if b is not None:
        if b.data.ndim != 1 or b.shape[0] != w.shape[1]:
            raise DimensionError(f"linear: bias length {b.shape} does not match output width {w.shape[1]}")
        _check_same_dtype("linear", x, w, b)
        out = x.data @ w.data + b.data
    else:
        _check_same_dtype("linear", x, w)
        out = x.data @ w.data

    xd, wd = x.data, w.data
    inputs = (x, w) if b is None else (x, w, b)

    def back(g):
        gx = g @ wd.T
        gw = xd.T @ g
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return _make_output(out, inputs, back)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    _check_same_dtype("matmul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return _make_output(ad @ bd, (a, b), back)


def add(a, b):
    """Elementwise sum; also supports the bias broadcast [n, d] + [d]."""
    _check_same_dtype("add", a, b)
    if a.shape == b.shape:
        def back(g):
            return g, g
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        def back(g):
            return g, g.sum(axis=0)
    else:
        raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return _make_output(a.data + b.data, (a, b), back)


def sub(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    _check_same_dtype("sub", a, b)

    def back(g):
        return g, -g

    return _make_output(a.data - b.data, (a, b), back)


def mul(a, b):
    """Hadamard product; also supports the row broadcast [n, d] * [n, 1]."""
    _check_same_dtype("mul", a, b)
    ad, bd = a.data, b.data
    if a.shape == b.shape:
        def back(g):
            return g * bd, g * ad
    elif a.data.ndim == 2 and b.shape == (a.shape[0], 1):
        def back(g):
            return g * bd, (g * ad).sum(axis=1, keepdims=True)
    else:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _make_output(ad * bd, (a, b), back)


def scale(a, s):
    s = float(s)

    def back(g):
        return (g * s,)

    return _make_output(a.data * s, (a,), back)


def relu(x):
    if x.size == 0:
        raise DimensionError("relu: empty tensor")
    mask = x.data > 0

    def back(g):
        return (g * mask,)

    return _make_output(np.where(mask, x.data, 0), (x,), back)


def silu(x):
    if x.size == 0:
        raise DimensionError("silu: empty tensor")
    sig = 1.0 / (1.0 + np.exp(-x.data))
    out = x.data * sig

    def back(g):
        return (g * (sig * (1.0 + x.data * (1.0 - sig))),)

    return _make_output(out, (x,), back)


def softmax(x):
    """Row softmax over the last axis, computed and returned in float64."""
    if x.size == 0 or x.shape[-1] < 1:
        raise DimensionError("softmax: empty tensor")
    z = x.data.astype(np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)
    in_dtype = x.dtype

    def back(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((out * (g - dot)).astype(in_dtype),)

    return _make_output(out, (x,), back)


def log(x):
    """Natural log with inputs floored at 1e-12 before the logarithm."""
    clipped = np.maximum(x.data, _SOFTMAX_FLOOR)
    inv = np.where(x.data > _SOFTMAX_FLOOR, 1.0 / clipped, 0.0)

    def back(g):
        return (g * inv,)

    return _make_output(np.log(clipped), (x,), back)


def mean(x):
    n = x.size
    if n == 0:
        raise DimensionError("mean: empty tensor")
    shape = x.shape

    def back(g):
        return (np.full(shape, g / n, dtype=g.dtype),)

    return _make_output(np.asarray(x.data.mean()), (x,), back)


def total(x):
    """Sum of all elements."""
    if x.size == 0:
        raise DimensionError("total: empty tensor")
    shape = x.shape

    def back(g):
        return (np.full(shape, g, dtype=g.dtype),)

    return _make_output(np.asarray(x.data.sum()), (x,), back)


def concat(parts, axis=1):
    if not parts:
        raise DimensionError("concat: no tensors given")
    _check_same_dtype("concat", *parts)
    extents = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + extents)

    def back(g):
        slicer = [slice(None)] * g.ndim
        outs = []
        for i in range(len(extents)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            outs.append(g[tuple(slicer)])
        return tuple(outs)

    data = np.concatenate([p.data for p in parts], axis=axis)
    return _make_output(data, tuple(parts), back)


def cast(x, dtype):
    dtype = np.dtype(dtype)
    in_dtype = x.dtype

    def back(g):
        return (g.astype(in_dtype),)

    return _make_output(x.data.astype(dtype), (x,), back)
