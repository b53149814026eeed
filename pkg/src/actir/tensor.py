"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded on it; the
tape is then walked backwards by :func:`backward`. A tape is built per forward
pass and thrown away afterwards::

    with Tape() as tape:
        loss = softmax_xent(forward_mlp(layers, x), y)
    grads = tape.gradient(loss, params)

Second-order derivatives are not supported. Where a gradient has to be
differentiated (gradient penalties), build it explicitly from these ops.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels

_ids = itertools.count()
_tapes: list["Tape"] = []


class Tensor:
    """Immutable float64 array with an identity used for gradient bookkeeping."""

    __slots__ = ("value", "id")

    def __init__(self, value):
        arr = np.array(value, dtype=np.float64)
        arr.setflags(write=False)
        self.value = arr
        self.id = next(_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value)

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        return f"Tensor(shape={self.shape}, value={self.value!r})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass(frozen=True)
class TapeEntry:
    kind: str
    inputs: tuple[int, ...]
    output: int
    vjp: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of operations; entries are appended in execution order."""

    def __init__(self):
        self.entries: list[TapeEntry] = []

    def __enter__(self) -> "Tape":
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        _tapes.remove(self)
        return False

    def __len__(self):
        return len(self.entries)

    def gradient(self, output: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        grads = backward(self, output)
        return [grads.get(s.id, np.zeros(s.shape)) for s in sources]


def _record(kind: str, inputs: Sequence[Tensor], value, vjp) -> Tensor:
    out = Tensor(value)
    if _tapes:
        _tapes[-1].entries.append(TapeEntry(kind, tuple(t.id for t in inputs), out.id, vjp))
    return out


def backward(tape: Tape, output: Tensor) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``output`` w.r.t. every node recorded on ``tape``.

    Returns a mapping from tensor id to gradient array. Leaves that do not
    influence ``output`` are absent; :meth:`Tape.gradient` fills them with zeros.
    """
    if output.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {output.id: np.ones(output.shape)}
    for entry in reversed(tape.entries):
        g = grads.get(entry.output)
        if g is None:
            continue
        for node, gin in zip(entry.inputs, entry.vjp(g)):
            if gin is None:
                continue
            if node in grads:
                grads[node] = grads[node] + gin
            else:
                grads[node] = gin
    return grads


# --------------------------------------------------------------------------
# elementary ops


def constant(value) -> Tensor:
    return Tensor(value)


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.value)


def _check_same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ValueError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a bias vector matching ``a``'s last axis."""
    if a.shape == b.shape:
        return _record("add", (a, b), a.value + b.value, lambda g: (g, g))
    if b.ndim == 1 and a.ndim == 2 and a.shape[1] == b.shape[0]:
        return _record("add_bias", (a, b), a.value + b.value, lambda g: (g, g.sum(axis=0)))
    raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _record("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _record("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", (a,), a.value * c, lambda g: (g * c,))


def scale_rows(a: Tensor, s) -> Tensor:
    """Multiply row ``i`` of a matrix by the constant ``s[i]``."""
    s = np.asarray(s, dtype=np.float64)
    if a.ndim != 2 or s.shape != (a.shape[0],):
        raise ValueError(f"scale_rows: {a.shape} with factors {s.shape}")
    return _record("scale_rows", (a,), a.value * s[:, None], lambda g: (g * s[:, None],))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def vjp(g):
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        if bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        return g * bv, g * av

    return _record("matmul", (a, b), av @ bv, vjp)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine layer ``x @ w.T + b`` for a single vector or a batch of rows."""
    xv, wv = x.value, w.value
    single = xv.ndim == 1
    x2 = xv[None, :] if single else xv
    out = kernels.dense_forward(x2, wv, b.value)

    def vjp(g):
        g2 = g[None, :] if single else g
        gx = g2 @ wv
        return (gx[0] if single else gx), g2.T @ x2, g2.sum(axis=0)

    return _record("dense", (x, w, b), out[0] if single else out, vjp)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ValueError("transpose needs a matrix")
    return _record("transpose", (a,), a.value.T, lambda g: (g.T,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0
    return _record("relu", (a,), np.where(mask, a.value, 0.0), lambda g: (g * mask,))


def square(a: Tensor) -> Tensor:
    av = a.value
    return _record("square", (a,), av * av, lambda g: (2.0 * g * av,))


def absolute(a: Tensor) -> Tensor:
    sgn = np.sign(a.value)
    return _record("abs", (a,), np.abs(a.value), lambda g: (g * sgn,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record("sum", (a,), a.value.sum(), lambda g: (np.full(shape, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return _record("mean", (a,), a.value.mean(), lambda g: (np.full(shape, float(g) / n),))


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``a[..., start:stop]``."""
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _record("columns", (a,), a.value[..., start:stop], vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    av = a.value
    e = np.exp(av - av.max(axis=-1, keepdims=True))
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record("softmax", (a,), s, vjp)


def softmax_xent(logits: Tensor, y) -> Tensor:
    """Cross-entropy ``-log softmax(logits)[y]``.

    A vector of logits with an integer class gives the per-example loss; a
    matrix of logits with a label array gives the mean over rows.
    """
    lv = logits.value
    single = lv.ndim == 1
    l2 = lv[None, :] if single else lv
    yv = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if l2.ndim != 2 or yv.shape != (l2.shape[0],):
        raise ValueError(f"softmax_xent: logits {lv.shape} with labels {yv.shape}")
    k = l2.shape[1]
    if yv.size and (yv.min() < 0 or yv.max() >= k):
        raise ValueError(f"softmax_xent: class index out of range [0, {k})")
    n = l2.shape[0]
    if n == 0:
        raise ValueError("softmax_xent: empty batch")
    losses, probs = kernels.softmax_xent(np.ascontiguousarray(l2), yv)

    def vjp(g):
        d = probs.copy()
        d[np.arange(n), yv] -= 1.0
        d *= float(g) / n
        return (d[0] if single else d,)

    return _record("softmax_xent", (logits,), losses.mean(), vjp)


def group_center(a: Tensor, labels, n_groups: int) -> Tensor:
    """Subtract from each row the mean of rows with the same label.

    The centering map is a symmetric projection, so it is its own adjoint.
    """
    lab = np.asarray(labels, dtype=np.int64)
    if a.ndim != 2 or lab.shape != (a.shape[0],):
        raise ValueError(f"group_center: rows {a.shape} with labels {lab.shape}")
    out = kernels.group_center(np.ascontiguousarray(a.value), lab, n_groups)
    return _record(
        "group_center", (a,), out, lambda g: (kernels.group_center(np.ascontiguousarray(g), lab, n_groups),)
    )


# --------------------------------------------------------------------------
# composites


def forward_mlp(layers: Sequence[tuple[Tensor, Tensor]], x: Tensor) -> Tensor:
    """Run an MLP with rectifiers between layers and a linear final layer.

    ``layers`` holds ``(weight, bias)`` pairs with weight shape (out, in).
    """
    h = x
    width = x.shape[-1]
    for i, (w, b) in enumerate(layers):
        if w.ndim != 2 or w.shape[1] != width:
            raise ValueError(
                f"layer {i}: weight shape {w.shape} does not accept input width {width}"
            )
        if b.shape != (w.shape[0],):
            raise ValueError(f"layer {i}: bias shape {b.shape}, expected ({w.shape[0]},)")
        h = dense(h, w, b)
        if i < len(layers) - 1:
            h = relu(h)
        width = w.shape[0]
    return h


def grad_check(loss_fn, params: Sequence, step: float = 1e-5, grads=None, floor: float = 0.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error of one entry is ``|a - n| / max(|a| + |n| + 1e-12, floor)``. A
    positive ``floor`` stops entries that are zero up to differencing noise
    from dominating the statistic.
    ``loss_fn`` maps a list of Tensors to a scalar Tensor. ``grads`` overrides
    the analytic gradients (used to check that corruption is detected).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    arrays = [np.array(p.value if isinstance(p, Tensor) else p, dtype=np.float64) for p in params]
    if grads is None:
        leaves = [Tensor(a) for a in arrays]
        with Tape() as tape:
            out = loss_fn(leaves)
        grads = tape.gradient(out, leaves)
    worst = 0.0
    for i, a in enumerate(arrays):
        flat = a.reshape(-1)
        analytic = np.asarray(grads[i], dtype=np.float64).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus = loss_fn([Tensor(x) for x in arrays]).item()
            flat[j] = orig - step
            minus = loss_fn([Tensor(x) for x in arrays]).item()
            flat[j] = orig
            numeric = (plus - minus) / (2.0 * step)
            err = abs(analytic[j] - numeric) / max(abs(analytic[j]) + abs(numeric) + 1e-12, floor)
            worst = max(worst, err)
    return worst
