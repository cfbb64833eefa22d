"""Dense float64 matrices with reverse-mode gradient accumulation.

Every operation used by the model's forward pass lives here. Results are
2-D numpy arrays wrapped in :class:`Matrix`; when any operand belongs to a
:class:`GradientTape`, the operation appends a backward closure to that tape.
Replaying the tape in reverse from a scalar loss yields one gradient per
registered parameter.

Gradient dictionaries built during backward are never mutated in place:
accumulation always rebinds ``grads[node] = old + delta``, so closures may
hand out views (column slices, broadcasts) safely.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import (
    AllMaskedError,
    EmptyAxis,
    NonFiniteError,
    NotScalarError,
    ShapeMismatch,
)

BCE_EPS = 1e-7


class Matrix:
    """A rows x cols float64 array, finite everywhere.

    ``tape`` is None for constants; operations propagate the tape of their
    inputs so gradients flow only where a parameter is involved.
    """

    __slots__ = ("data", "tape")

    def __init__(self, data, tape: "GradientTape | None" = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise ShapeMismatch(f"matrices are 2-D, got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise NonFiniteError("matrix contains NaN or Inf")
        self.data = arr
        self.tape = tape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise NotScalarError(f"item() on shape {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


class GradientTape:
    """Ordered record of executed operations plus a parameter registry.

    Construction order of the graph is a topological order, so walking the
    record backwards is a valid reverse traversal; no sorting is needed.
    """

    def __init__(self):
        self._records: list[tuple[Matrix, object]] = []
        self._params: dict[str, Matrix] = {}
        self._recording = True

    def parameter(self, name: str, values) -> Matrix:
        if name in self._params:
            raise ValueError(f"parameter {name!r} registered twice")
        mat = Matrix(np.array(values, dtype=np.float64), tape=self)
        self._params[name] = mat
        return mat

    @property
    def parameters(self) -> dict[str, Matrix]:
        return dict(self._params)

    def record(self, output: Matrix, backward_fn) -> None:
        if self._recording:
            self._records.append((output, backward_fn))

    def reset(self) -> None:
        """Drop recorded operations; registered parameters are kept."""
        self._records.clear()

    @contextmanager
    def no_grad(self):
        prev = self._recording
        self._recording = False
        try:
            yield
        finally:
            self._recording = prev

    def backward(self, loss: Matrix) -> dict[str, np.ndarray]:
        """Gradients of the scalar ``loss`` for every registered parameter.

        Parameters not on the path to ``loss`` receive zero gradients.
        """
        if loss.shape != (1, 1):
            raise NotScalarError(f"backward from shape {loss.shape}")
        grads: dict[Matrix, np.ndarray] = {loss: np.ones((1, 1))}
        for output, backward_fn in reversed(self._records):
            g = grads.get(output)
            if g is None:
                continue
            backward_fn(g, grads)
        return {
            name: np.array(grads.get(p, np.zeros(p.shape)))
            for name, p in self._params.items()
        }


def backward(loss: Matrix, tape: GradientTape) -> dict[str, np.ndarray]:
    """Module-level alias for :meth:`GradientTape.backward`."""
    return tape.backward(loss)


# -- internal helpers ---------------------------------------------------------

def _tape_of(*mats: Matrix) -> GradientTape | None:
    tape = None
    for m in mats:
        if m.tape is not None:
            if tape is not None and tape is not m.tape:
                raise ValueError("operands belong to different tapes")
            tape = m.tape
    return tape


def _acc(grads: dict, m: Matrix, delta: np.ndarray) -> None:
    if m.tape is None:
        return
    cur = grads.get(m)
    grads[m] = delta if cur is None else cur + delta


def _out(data: np.ndarray, tape: GradientTape | None, backward_fn) -> Matrix:
    mat = Matrix(data, tape=tape)
    if tape is not None:
        tape.record(mat, backward_fn)
    return mat


def _as_mask(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.float64).reshape(-1)
    if mask.shape[0] != n:
        raise ShapeMismatch(f"mask length {mask.shape[0]} != {n} columns")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("mask values must be 0 or 1")
    if not mask.any():
        raise AllMaskedError("mask has no unmasked position")
    return mask


# -- operations ---------------------------------------------------------------

def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeMismatch(f"matmul {a.shape} x {b.shape}")
    tape = _tape_of(a, b)

    def bwd(g, grads):
        _acc(grads, a, g @ b.data.T)
        _acc(grads, b, a.data.T @ g)

    return _out(a.data @ b.data, tape, bwd)


def transpose(x: Matrix) -> Matrix:
    def bwd(g, grads):
        _acc(grads, x, g.T)

    return _out(x.data.T.copy(), _tape_of(x), bwd)


def add(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} + {b.shape}")

    def bwd(g, grads):
        _acc(grads, a, g)
        _acc(grads, b, g)

    return _out(a.data + b.data, _tape_of(a, b), bwd)


def add_bias(x: Matrix, b: Matrix) -> Matrix:
    """x + b with the 1 x r bias broadcast over rows."""
    if b.rows != 1 or b.cols != x.cols:
        raise ShapeMismatch(f"bias {b.shape} against {x.shape}")

    def bwd(g, grads):
        _acc(grads, x, g)
        _acc(grads, b, g.sum(axis=0, keepdims=True))

    return _out(x.data + b.data, _tape_of(x, b), bwd)


def scale(x: Matrix, c: float) -> Matrix:
    c = float(c)

    def bwd(g, grads):
        _acc(grads, x, c * g)

    return _out(c * x.data, _tape_of(x), bwd)


def affine(x: Matrix, W: Matrix, b: Matrix) -> Matrix:
    """x @ W + b with the bias broadcast over rows."""
    return add_bias(matmul(x, W), b)


def apply_activation(kind: str, x: Matrix, slope: float = 0.01) -> Matrix:
    """Elementwise relu / leaky_relu / sigmoid / tanh.

    relu's derivative at exactly 0 is taken as 0.
    """
    tape = _tape_of(x)
    xd = x.data
    if kind == "relu":
        y = np.where(xd > 0, xd, 0.0)

        def bwd(g, grads):
            _acc(grads, x, np.where(xd > 0, g, 0.0))

    elif kind == "leaky_relu":
        if not 0.0 < slope < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0,1), got {slope}")
        y = np.where(xd > 0, xd, slope * xd)

        def bwd(g, grads):
            _acc(grads, x, np.where(xd > 0, g, slope * g))

    elif kind == "sigmoid":
        # Stable two-branch form avoids exp overflow for large |x|.
        y = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                     np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))

        def bwd(g, grads):
            _acc(grads, x, g * y * (1.0 - y))

    elif kind == "tanh":
        y = np.tanh(xd)

        def bwd(g, grads):
            _acc(grads, x, g * (1.0 - y * y))

    else:
        raise ValueError(f"unknown activation {kind!r}")
    return _out(y, tape, bwd)


def relu(x: Matrix) -> Matrix:
    return apply_activation("relu", x)


def leaky_relu(x: Matrix, slope: float = 0.01) -> Matrix:
    return apply_activation("leaky_relu", x, slope)


def sigmoid(x: Matrix) -> Matrix:
    return apply_activation("sigmoid", x)


def tanh(x: Matrix) -> Matrix:
    return apply_activation("tanh", x)


def row_softmax_masked(x: Matrix, mask) -> Matrix:
    """Per-row softmax over unmasked columns; masked columns get exactly 0.

    Row maxima are subtracted before exponentiation for overflow safety;
    masked positions are sent to -inf first so their exp is an exact zero.
    """
    mask = _as_mask(mask, x.cols)
    on = mask.astype(bool)
    tape = _tape_of(x)
    shifted = np.where(on, x.data, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bwd(g, grads):
        inner = (g * y).sum(axis=1, keepdims=True)
        _acc(grads, x, y * (g - inner))

    return _out(y, tape, bwd)


def row_softmax(x: Matrix) -> Matrix:
    return row_softmax_masked(x, np.ones(x.cols))


def row_average(x: Matrix) -> Matrix:
    """Arithmetic mean of each row, as a rows x 1 matrix."""
    if x.cols == 0:
        raise EmptyAxis("row_average over zero columns")
    n = x.cols

    def bwd(g, grads):
        _acc(grads, x, np.broadcast_to(g / n, x.shape))

    return _out(x.data.mean(axis=1, keepdims=True), _tape_of(x), bwd)


def concat_cols(parts) -> Matrix:
    parts = list(parts)
    if not parts:
        raise ShapeMismatch("concat_cols of nothing")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeMismatch(f"concat_cols row counts {[p.rows for p in parts]}")
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def bwd(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _acc(grads, p, g[:, lo:hi])

    data = np.concatenate([p.data for p in parts], axis=1)
    return _out(data, _tape_of(*parts), bwd)


def concat_rows(parts) -> Matrix:
    """Vertical concatenation; the column-wise twin of :func:`concat_cols`."""
    parts = list(parts)
    if not parts:
        raise ShapeMismatch("concat_rows of nothing")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise ShapeMismatch(f"concat_rows col counts {[p.cols for p in parts]}")
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def bwd(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _acc(grads, p, g[lo:hi, :])

    data = np.concatenate([p.data for p in parts], axis=0)
    return _out(data, _tape_of(*parts), bwd)


def scale_rows(x: Matrix, s: Matrix) -> Matrix:
    """Multiply row j of x by the scalar s[j, 0]."""
    if s.cols != 1 or s.rows != x.rows:
        raise ShapeMismatch(f"scale_rows {x.shape} by {s.shape}")

    def bwd(g, grads):
        _acc(grads, x, g * s.data)
        _acc(grads, s, (g * x.data).sum(axis=1, keepdims=True))

    return _out(x.data * s.data, _tape_of(x, s), bwd)


def row_dot(a: Matrix, b: Matrix) -> Matrix:
    """Paired per-row dot products, as a rows x 1 matrix (not a matmul)."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"row_dot {a.shape} . {b.shape}")

    def bwd(g, grads):
        _acc(grads, a, g * b.data)
        _acc(grads, b, g * a.data)

    data = (a.data * b.data).sum(axis=1, keepdims=True)
    return _out(data, _tape_of(a, b), bwd)


def tile_rows(x: Matrix, n: int) -> Matrix:
    """Repeat a 1 x d row n times."""
    if x.rows != 1:
        raise ShapeMismatch(f"tile_rows of {x.shape}")

    def bwd(g, grads):
        _acc(grads, x, g.sum(axis=0, keepdims=True))

    return _out(np.tile(x.data, (n, 1)), _tape_of(x), bwd)


def embedding_lookup(table: Matrix, ids) -> Matrix:
    """Gather rows of ``table`` by integer index; gradients scatter-add back."""
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.rows):
        raise ShapeMismatch(f"index out of range for {table.rows} rows")

    def bwd(g, grads):
        delta = np.zeros(table.shape)
        np.add.at(delta, ids, g)
        _acc(grads, table, delta)

    return _out(table.data[ids], _tape_of(table), bwd)


def bce_sum(p: Matrix, z) -> Matrix:
    """Summed binary cross-entropy of probabilities ``p`` against targets ``z``.

    ``p`` is clamped into [eps, 1-eps] before the logs; inside the clamped
    region the gradient is the usual (p - z) / (p (1 - p)).
    """
    zd = z.data if isinstance(z, Matrix) else np.asarray(z, dtype=np.float64)
    if zd.ndim == 1:
        zd = zd.reshape(1, -1) if p.rows == 1 else zd.reshape(-1, 1)
    if zd.shape != p.shape:
        raise ShapeMismatch(f"bce_sum {p.shape} vs targets {zd.shape}")
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    val = -(zd * np.log(pc) + (1.0 - zd) * np.log(1.0 - pc)).sum()
    inside = (p.data > BCE_EPS) & (p.data < 1.0 - BCE_EPS)

    def bwd(g, grads):
        dp = np.where(inside, (pc - zd) / (pc * (1.0 - pc)), 0.0)
        _acc(grads, p, g[0, 0] * dp)

    return _out(np.array([[val]]), _tape_of(p), bwd)


def sum_all(x: Matrix) -> Matrix:
    def bwd(g, grads):
        _acc(grads, x, np.full(x.shape, g[0, 0]))

    return _out(np.array([[x.data.sum()]]), _tape_of(x), bwd)
