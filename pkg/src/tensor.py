#!/usr/bin/env python3
"""
Minimal dense-tensor engine with reverse-mode differentiation.

Tensors hold float64 numpy buffers. A Tensor created by `Tape.watch` is a
parameter; every kernel applied to a taped input records a vector-Jacobian
product on that tape, and `backward` replays the records in reverse.
Tensors without a tape are constants and cost nothing to differentiate.

Broadcasting is limited to scalar-with-tensor and (1, d) row vector with (n, d)
matrix, in the second operand of add / subtract / multiply.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

NORMALIZE_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible for a kernel."""


class DomainError(ValueError):
    """Kernel input outside the kernel's mathematical domain."""


class TapeError(RuntimeError):
    """Misuse of a Tape (non-scalar loss, reused tape, mixed tapes)."""


VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tensor:
    """Dense float64 tensor, optionally recorded on a Tape."""

    __slots__ = ("name", "tape", "values")

    def __init__(self, values, tape: Tape | None = None, name: str | None = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            msg = f"item() needs a single value, tensor has shape {self.shape}"
            raise ShapeError(msg)
        return float(self.values.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, taped={self.tape is not None})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    @property
    def T(self):  # noqa: N802
        return transpose(self)


@dataclass
class _Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    vjp: VJP


class Tape:
    """Ordered record of primitive applications, replayed once by `backward`."""

    def __init__(self):
        self._records: list[_Record] = []
        self._watched: dict[str, Tensor] = {}
        self._consumed = False

    def watch(self, values, name: str) -> Tensor:
        """Register a parameter leaf under `name`."""
        if name in self._watched:
            msg = f"parameter {name!r} is already watched on this tape"
            raise TapeError(msg)
        if self._consumed:
            msg = "cannot watch parameters on a tape that already ran backward"
            raise TapeError(msg)
        tensor = Tensor(np.array(values, dtype=np.float64, copy=True), tape=self, name=name)
        self._watched[name] = tensor
        return tensor

    @property
    def parameters(self) -> dict[str, Tensor]:
        return dict(self._watched)

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, output: Tensor, inputs: tuple[Tensor, ...], vjp: VJP) -> None:
        if self._consumed:
            msg = "tape already ran backward; build a new tape for a new forward pass"
            raise TapeError(msg)
        self._records.append(_Record(output, inputs, vjp))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _apply(values: np.ndarray, inputs: tuple[Tensor, ...], vjp: VJP) -> Tensor:
    tape = None
    for tensor in inputs:
        if tensor.tape is None:
            continue
        if tape is not None and tensor.tape is not tape:
            msg = "kernel inputs belong to different tapes"
            raise TapeError(msg)
        tape = tensor.tape
    output = Tensor(values, tape=tape)
    if tape is not None:
        tape._record(output, inputs, vjp)
    return output


def _require_matrix(x: Tensor, kernel: str) -> None:
    if x.values.ndim != 2:
        msg = f"{kernel} expects a 2-D tensor, got shape {x.shape}"
        raise ShapeError(msg)


def _check_broadcast(a: Tensor, b: Tensor, kernel: str) -> None:
    if a.shape == b.shape or b.values.ndim == 0:
        return
    if a.values.ndim == 2 and b.shape == (1, a.shape[1]):
        return
    msg = f"{kernel}: cannot combine shapes {a.shape} and {b.shape}"
    raise ShapeError(msg)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    return grad.sum(axis=0, keepdims=True)


def _binary_operands(a, b, kernel: str) -> tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim == 0 and b.values.ndim > 0 and kernel != "subtract":
        a, b = b, a
    _check_broadcast(a, b, kernel)
    return a, b


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    """a + b; b may be a scalar or a (1, d) row vector."""
    a, b = _binary_operands(a, b, "add")
    return _apply(a.values + b.values, (a, b), lambda g: (g, _unbroadcast(g, b.shape)))


def subtract(a, b) -> Tensor:
    """a - b; b may be a scalar or a (1, d) row vector."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "subtract")
    return _apply(a.values - b.values, (a, b), lambda g: (g, -_unbroadcast(g, b.shape)))


def multiply(a, b) -> Tensor:
    """Elementwise product; b may be a scalar or a (1, d) row vector."""
    a, b = _binary_operands(a, b, "multiply")
    av, bv = a.values, b.values
    return _apply(av * bv, (a, b), lambda g: (g * bv, _unbroadcast(g * av, b.shape)))


def scale(x, factor: float) -> Tensor:
    """Multiply by a Python scalar."""
    x = as_tensor(x)
    factor = float(factor)
    return _apply(x.values * factor, (x,), lambda g: (g * factor,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.values > 0
    return _apply(np.where(active, x.values, 0.0), (x,), lambda g: (g * active,))


def absolute(x) -> Tensor:
    """|x| with subgradient 0 at 0."""
    x = as_tensor(x)
    sign = np.sign(x.values)
    return _apply(np.abs(x.values), (x,), lambda g: (g * sign,))


def sqrt(x) -> Tensor:
    """Square root; inputs must be strictly positive."""
    x = as_tensor(x)
    if np.any(x.values <= 0):
        msg = "sqrt requires strictly positive inputs (add epsilon before sqrt)"
        raise DomainError(msg)
    root = np.sqrt(x.values)
    return _apply(root, (x,), lambda g: (g * 0.5 / root,))


def power(x, exponent: float) -> Tensor:
    """
    x ** exponent.

    Non-integer exponents need nonnegative inputs. Where x == 0 and the
    exponent is below 1 the derivative is taken as 0.
    """
    x = as_tensor(x)
    exponent = float(exponent)
    if not exponent.is_integer() and np.any(x.values < 0):
        msg = f"power with exponent {exponent} needs nonnegative inputs"
        raise DomainError(msg)
    values = np.power(x.values, exponent)

    def vjp(g):
        if exponent == 0:
            return (np.zeros_like(g),)
        base = x.values
        if exponent < 1:
            safe = np.where(base == 0, 1.0, base)
            local = np.where(base == 0, 0.0, exponent * np.power(safe, exponent - 1))
        else:
            local = exponent * np.power(base, exponent - 1)
        return (g * local,)

    return _apply(values, (x,), vjp)


def exp(x) -> Tensor:
    x = as_tensor(x)
    values = np.exp(x.values)
    return _apply(values, (x,), lambda g: (g * values,))


def log(x) -> Tensor:
    """Natural log; inputs must be strictly positive."""
    x = as_tensor(x)
    if np.any(x.values <= 0):
        msg = "log requires strictly positive inputs"
        raise DomainError(msg)
    return _apply(np.log(x.values), (x,), lambda g: (g / x.values,))


# ---------------------------------------------------------------- structural


def matmul(a, b) -> Tensor:
    """(n, k) @ (k, m) -> (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    _require_matrix(a, "matmul")
    _require_matrix(b, "matmul")
    if a.shape[1] != b.shape[0]:
        msg = f"matmul: inner dimensions differ, {a.shape} @ {b.shape}"
        raise ShapeError(msg)
    av, bv = a.values, b.values
    return _apply(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(x) -> Tensor:
    x = as_tensor(x)
    _require_matrix(x, "transpose")
    return _apply(x.values.T.copy(), (x,), lambda g: (g.T,))


def row_slice(x, start: int, stop: int) -> Tensor:
    """Rows [start, stop) of a matrix."""
    x = as_tensor(x)
    _require_matrix(x, "row_slice")
    if not 0 <= start <= stop <= x.shape[0]:
        msg = f"row_slice [{start}, {stop}) outside {x.shape[0]} rows"
        raise ShapeError(msg)

    def vjp(g):
        full = np.zeros_like(x.values)
        full[start:stop] = g
        return (full,)

    return _apply(x.values[start:stop].copy(), (x,), vjp)


def concat_rows(tensors: Sequence) -> Tensor:
    """Stack matrices with equal column counts vertically."""
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        msg = "concat_rows needs at least one tensor"
        raise ShapeError(msg)
    for part in parts:
        _require_matrix(part, "concat_rows")
        if part.shape[1] != parts[0].shape[1]:
            msg = f"concat_rows: column counts differ, {part.shape} vs {parts[0].shape}"
            raise ShapeError(msg)
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def vjp(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _apply(np.concatenate([p.values for p in parts]), parts, vjp)


# ---------------------------------------------------------------- reductions


def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001
    """Sum of all entries (scalar), of each column (axis=0, 1 x d) or each row (axis=1, n x 1)."""
    x = as_tensor(x)
    if axis is None:
        return _apply(np.asarray(x.values.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    _require_matrix(x, "sum")
    values = x.values.sum(axis=axis, keepdims=True)
    return _apply(values, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x) -> Tensor:
    """Mean of all entries."""
    x = as_tensor(x)
    count = x.values.size
    return scale(sum(x), 1.0 / count)


def mean_axis0(x) -> Tensor:
    """Column means, shape (1, d)."""
    x = as_tensor(x)
    _require_matrix(x, "mean_axis0")
    n = x.shape[0]
    if n == 0:
        msg = "mean_axis0 of an empty matrix"
        raise DomainError(msg)
    return _apply(x.values.mean(axis=0, keepdims=True), (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def var_axis0(x) -> Tensor:
    """Unbiased column variances (1/(n-1)), shape (1, d)."""
    x = as_tensor(x)
    _require_matrix(x, "var_axis0")
    n = x.shape[0]
    if n < 2:
        msg = f"var_axis0 needs at least 2 rows, got {n}"
        raise DomainError(msg)
    deviation = x.values - x.values.mean(axis=0, keepdims=True)
    values = (deviation**2).sum(axis=0, keepdims=True) / (n - 1)
    return _apply(values, (x,), lambda g: (g * 2.0 * deviation / (n - 1),))


# ---------------------------------------------------------------- row-wise


def l2_row_normalize(x) -> Tensor:
    """Each row divided by max(||row||_2, 1e-12)."""
    x = as_tensor(x)
    _require_matrix(x, "l2_row_normalize")
    norms = np.linalg.norm(x.values, axis=1, keepdims=True)
    clipped = norms < NORMALIZE_EPS
    denom = np.where(clipped, NORMALIZE_EPS, norms)
    y = x.values / denom

    def vjp(g):
        projected = g - y * (g * y).sum(axis=1, keepdims=True)
        return (np.where(clipped, g, projected) / denom,)

    return _apply(y, (x,), vjp)


def log_softmax_rows(x, mask: np.ndarray | None = None) -> Tensor:
    """
    Row-wise log-softmax.

    With a boolean `mask`, entries where mask is False are excluded from the
    normalization, read as 0 in the output, and receive no gradient.
    """
    x = as_tensor(x)
    _require_matrix(x, "log_softmax_rows")
    keep = np.ones(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if keep.shape != x.shape:
        msg = f"log_softmax_rows mask shape {keep.shape} differs from input {x.shape}"
        raise ShapeError(msg)
    if not keep.any(axis=1).all():
        msg = "log_softmax_rows mask leaves a row empty"
        raise DomainError(msg)

    masked = np.where(keep, x.values, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    shifted = np.exp(masked - row_max)
    log_norm = row_max + np.log(shifted.sum(axis=1, keepdims=True))
    out = np.where(keep, x.values - log_norm, 0.0)
    probs = np.where(keep, np.exp(out), 0.0)

    def vjp(g):
        g = np.where(keep, g, 0.0)
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return _apply(out, (x,), vjp)


# ---------------------------------------------------------------- graph kernels


def segment_mean(data, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Row s of the output is the mean of data rows whose id is s."""
    data = as_tensor(data)
    _require_matrix(data, "segment_mean")
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape != (data.shape[0],):
        msg = f"segment_mean: {ids.shape[0] if ids.ndim else 0} ids for {data.shape[0]} rows"
        raise ShapeError(msg)
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        msg = f"segment ids outside [0, {num_segments})"
        raise ShapeError(msg)
    counts = np.bincount(ids, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        msg = f"segment {empty} is empty"
        raise DomainError(msg)

    totals = np.zeros((num_segments, data.shape[1]))
    np.add.at(totals, ids, data.values)
    inverse = (1.0 / counts)[:, None]

    return _apply(totals * inverse, (data,), lambda g: ((g * inverse)[ids],))


def aggregate_neighbors(features, directed_edges: np.ndarray) -> Tensor:
    """Output row v is the sum of features[u] over directed edges (u, v)."""
    features = as_tensor(features)
    _require_matrix(features, "aggregate_neighbors")
    edges = np.asarray(directed_edges, dtype=np.int64).reshape(-1, 2)
    n = features.shape[0]
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        msg = f"aggregate_neighbors: edge index outside [0, {n})"
        raise ShapeError(msg)
    src, dst = edges[:, 0], edges[:, 1]

    out = np.zeros_like(features.values)
    np.add.at(out, dst, features.values[src])

    def vjp(g):
        grad = np.zeros_like(features.values)
        np.add.at(grad, src, g[dst])
        return (grad,)

    return _apply(out, (features,), vjp)


# ---------------------------------------------------------------- differentiation


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """
    Gradients of a scalar `loss` for every parameter watched on `tape`.

    Parameters the loss does not depend on get zero gradients.
    """
    if loss.values.size != 1:
        msg = f"backward needs a scalar loss, got shape {loss.shape}"
        raise TapeError(msg)
    if tape._consumed:
        msg = "backward already ran on this tape"
        raise TapeError(msg)

    grads: dict[int, np.ndarray] = {}
    if loss.tape is tape:
        grads[id(loss)] = np.ones_like(loss.values)
    elif loss.tape is not None:
        msg = "loss was recorded on a different tape"
        raise TapeError(msg)

    for record in reversed(tape._records):
        upstream = grads.pop(id(record.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(record.inputs, record.vjp(upstream), strict=True):
            if grad is None or tensor.tape is None:
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else np.array(grad, dtype=np.float64)

    tape._consumed = True
    return {
        name: grads.get(id(tensor), np.zeros_like(tensor.values)).reshape(tensor.shape)
        for name, tensor in tape._watched.items()
    }


def finite_difference_check(f: Callable[[Tensor], Tensor], point, step: float = 1e-5) -> float:
    """
    Compare backward gradients of scalar `f` at `point` to central differences.

    Returns:
        max over coordinates of |a - b| / max(1, |a|, |b|)
    """
    base = np.array(as_tensor(point).values, dtype=np.float64, copy=True)
    tape = Tape()
    analytic = backward(tape, f(tape.watch(base, "x")))["x"]

    numeric = np.zeros_like(base)
    flat = numeric.reshape(-1)
    for index in range(base.size):
        shifted = base.copy().reshape(-1)
        shifted[index] += step
        upper = f(Tensor(shifted.reshape(base.shape))).item()
        shifted[index] -= 2 * step
        lower = f(Tensor(shifted.reshape(base.shape))).item()
        flat[index] = (upper - lower) / (2 * step)

    if base.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
