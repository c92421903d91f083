"""Dense float64 tensors with a reverse-mode gradient tape.

A Tape records backward closures in execution order; backward() replays
them in reverse, which is a valid topological order because an output
cannot be used before it is created. Tensors without a tape attachment
are constants: ops on them evaluate eagerly and record nothing.
"""

from __future__ import annotations

import numpy as np

#: Large negative fill used instead of -inf before softmax, so the
#: backward pass never produces inf - inf.
MASK_FILL = -1e30


class ShapeMismatchError(ValueError):
    pass


class NotScalarError(ValueError):
    pass


class TapeConsumedError(RuntimeError):
    pass


class NotRecordedError(RuntimeError):
    pass


class EmptyLossError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: "Tape | None" = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        taped = "" if self.tape is None else ", taped"
        return f"Tensor(shape={self.data.shape}{taped})"


class Tape:
    """Ordered record of operations with backward closures."""

    def __init__(self):
        self._ops: list = []
        self._consumed = False

    def watch(self, *tensors: Tensor) -> None:
        """Attach tensors (typically parameters) so ops on them record
        to this tape and backward() populates their grads."""
        for t in tensors:
            t.tape = self
            t.grad = None

    def record(self, out: "Tensor", fn) -> None:
        self._ops.append((out, fn))

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise TapeConsumedError("tape already replayed; build a new one")
        if loss.tape is not self:
            raise NotRecordedError("loss was not recorded on this tape")
        if loss.data.size != 1:
            raise NotScalarError(f"loss has shape {loss.data.shape}, need a scalar")
        self._consumed = True
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn()


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor recorded on the loss's tape."""
    if loss.tape is None:
        raise NotRecordedError("loss is a constant; nothing to differentiate")
    loss.tape.backward(loss)


# -- plumbing ----------------------------------------------------------


def _tape_of(*tensors) -> Tape | None:
    tape = None
    for t in tensors:
        if isinstance(t, Tensor) and t.tape is not None:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ValueError("operands recorded on different tapes")
    return tape


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.tape is None:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (got, want) in enumerate(zip(g.shape, shape)) if want == 1 and got != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- primitive ops -----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 1:
        raise ShapeMismatchError(f"matmul needs >=2-D lhs and >=1-D rhs: {a.shape} x {b.shape}")
    inner = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if a.shape[-1] != inner:
        raise ShapeMismatchError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    tape = _tape_of(a, b)
    out = Tensor(a.data @ b.data, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            if b.ndim == 1:
                _accum(a, g[..., None] * b.data)
                contrib = a.data * g[..., None]
                _accum(b, contrib.reshape(-1, a.shape[-1]).sum(axis=0))
            else:
                _accum(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape))
                _accum(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape))
        tape.record(out, bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatchError(f"add cannot broadcast {a.shape} with {b.shape}") from None
    out = Tensor(data, tape)
    if tape is not None:
        def bwd():
            _accum(a, _unbroadcast(out.grad, a.shape))
            _accum(b, _unbroadcast(out.grad, b.shape))
        tape.record(out, bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    tape = _tape_of(a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatchError(f"mul cannot broadcast {a.shape} with {b.shape}") from None
    out = Tensor(data, tape)
    if tape is not None:
        def bwd():
            _accum(a, _unbroadcast(out.grad * b.data, a.shape))
            _accum(b, _unbroadcast(out.grad * a.data, b.shape))
        tape.record(out, bwd)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    tape = _tape_of(x)
    out = Tensor(x.data * c, tape)
    if tape is not None:
        def bwd():
            _accum(x, out.grad * c)
        tape.record(out, bwd)
    return out


def relu(x: Tensor) -> Tensor:
    tape = _tape_of(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0), tape)
    if tape is not None:
        def bwd():
            _accum(x, out.grad * mask)
        tape.record(out, bwd)
    return out


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    tape = _tape_of(x)
    out = Tensor(x.data.transpose(axes), tape)
    if tape is not None:
        inverse = tuple(np.argsort(axes))
        def bwd():
            _accum(x, out.grad.transpose(inverse))
        tape.record(out, bwd)
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    tape = _tape_of(x)
    out = Tensor(x.data.reshape(shape), tape)
    if tape is not None:
        def bwd():
            _accum(x, out.grad.reshape(x.shape))
        tape.record(out, bwd)
    return out


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    tape = _tape_of(*tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tape)
    if tape is not None:
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]
        def bwd():
            for t, piece in zip(tensors, np.split(out.grad, splits, axis=axis)):
                _accum(t, piece)
        tape.record(out, bwd)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    tape = _tape_of(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            _accum(x, (g - (g * s).sum(axis=axis, keepdims=True)) * s)
        tape.record(out, bwd)
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    tape = _tape_of(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    ls = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(ls, tape)
    if tape is not None:
        sm = np.exp(ls)
        def bwd():
            g = out.grad
            _accum(x, g - sm * g.sum(axis=axis, keepdims=True))
        tape.record(out, bwd)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis. The eps floor keeps near-constant
    inputs (variance ~ 0) finite in both passes."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatchError(
            f"layer_norm gain/bias {gain.shape}/{bias.shape} must be ({d},)"
        )
    tape = _tape_of(x, gain, bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(xhat * gain.data + bias.data, tape)
    if tape is not None:
        def bwd():
            g = out.grad
            _accum(gain, _unbroadcast(g * xhat, gain.shape))
            _accum(bias, _unbroadcast(g, bias.shape))
            dxhat = g * gain.data
            dx = inv_std * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
            _accum(x, dx)
        tape.record(out, bwd)
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup into (V, d) table with integer ids of any shape."""
    if table.ndim != 2:
        raise ShapeMismatchError(f"embedding table must be 2-D, got {table.shape}")
    ids = np.asarray(ids)
    tape = _tape_of(table)
    out = Tensor(table.data[ids], tape)
    if tape is not None:
        def bwd():
            g = np.zeros_like(table.data)
            np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.shape[-1]))
            _accum(table, g)
        tape.record(out, bwd)
    return out


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True by a constant."""
    mask = np.asarray(mask, dtype=bool)
    tape = _tape_of(x)
    try:
        data = np.where(mask, value, x.data)
    except ValueError:
        raise ShapeMismatchError(
            f"mask {mask.shape} does not broadcast with {x.shape}"
        ) from None
    out = Tensor(data, tape)
    if tape is not None:
        def bwd():
            _accum(x, _unbroadcast(np.where(mask, 0.0, out.grad), x.shape))
        tape.record(out, bwd)
    return out


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    tape = _tape_of(x)
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims), tape)
    if tape is not None:
        count = x.data.size if axis is None else np.prod(
            [x.shape[a] for a in np.atleast_1d(axis)]
        )
        def bwd():
            g = out.grad
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.shape) / count)
        tape.record(out, bwd)
    return out


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    tape = _tape_of(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), tape)
    if tape is not None:
        def bwd():
            g = out.grad
            if not keepdims and axis is not None:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.shape).copy())
        tape.record(out, bwd)
    return out


def cross_entropy(
    logits: Tensor, targets: np.ndarray, ignore_index: int | None = None
) -> Tensor:
    """Mean negative log-likelihood over (N, V) rows.

    Rows whose target equals ignore_index do not contribute; raises
    EmptyLossError when no row contributes.
    """
    if logits.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy wants (N, V) logits, got {logits.shape}")
    targets = np.asarray(targets)
    if targets.shape != (logits.shape[0],):
        raise ShapeMismatchError(
            f"targets {targets.shape} do not match logits rows {logits.shape}"
        )
    if ignore_index is None:
        keep = np.ones(targets.shape, dtype=bool)
    else:
        keep = targets != ignore_index
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise EmptyLossError("no contributing rows in cross_entropy")
    safe_targets = np.where(keep, targets, 0)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    ls = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    picked = ls[np.arange(len(targets)), safe_targets]
    tape = _tape_of(logits)
    out = Tensor(-(picked * keep).sum() / n_keep, tape)
    if tape is not None:
        sm = np.exp(ls)
        def bwd():
            g = float(out.grad)
            dlogits = sm.copy()
            dlogits[np.arange(len(targets)), safe_targets] -= 1.0
            dlogits *= (keep[:, None] * (g / n_keep))
            _accum(logits, dlogits)
        tape.record(out, bwd)
    return out
