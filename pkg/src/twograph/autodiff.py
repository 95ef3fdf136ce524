"""Dense 2-D matrices with reverse-mode automatic differentiation.

The engine is deliberately small: a ``Tape`` records every operation of a
forward pass (define-by-run), each node caching its output array and a
closure that maps the output adjoint to the parent adjoints.  ``backward``
walks the tape once in reverse and accumulates adjoints into
``Parameter.grad``.  All arithmetic is 64-bit; shapes must match exactly
(no broadcasting beyond the explicit row-bias op).

``grad_check`` provides the central-difference oracle used throughout the
test suite to validate gradients end to end.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    EmptySelectionError,
    NumericError,
    ParameterError,
    ShapeError,
    ValidationError,
)

Array = np.ndarray


def as_array2d(values, name: str = "matrix") -> Array:
    """Coerce to a validated 2-D float64 array (finite entries, both dims >= 1)."""
    if isinstance(values, Matrix):
        return values.data
    if isinstance(values, Var):
        return values.value
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


class Matrix:
    """A dense real matrix: the universal value type for signals and weights.

    Wraps a C-ordered float64 array and validates shape and finiteness on
    construction.  Instances are treated as immutable; share freely.
    """

    __slots__ = ("data",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"Matrix must be 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"Matrix dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("Matrix entries must be finite")
        self.data = arr

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def eye(cls, n: int) -> "Matrix":
        return cls(np.eye(n))

    @classmethod
    def from_flat(cls, rows: int, cols: int, values: Sequence[float]) -> "Matrix":
        """Build from row-major flat values; length must equal rows*cols."""
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim != 1 or vals.size != rows * cols:
            raise ShapeError(
                f"expected {rows * cols} row-major values for a "
                f"{rows}x{cols} matrix, got {vals.size}"
            )
        return cls(vals.reshape(rows, cols))

    def flat(self) -> list[float]:
        """Row-major values as a plain list (serialization helper)."""
        return self.data.reshape(-1).tolist()

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return self.data.astype(dtype)
        return self.data

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


class Parameter:
    """A learnable matrix with an accumulated gradient of the same shape."""

    __slots__ = ("value", "grad", "name")

    def __init__(self, value, name: str = "param"):
        self.value = as_array2d(value, name).copy()
        self.grad = np.zeros_like(self.value)
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def reset_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name}, {self.value.shape[0]}x{self.value.shape[1]})"


def reset_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.reset_grad()


class Var:
    """Handle to one node on a tape.  ``value`` is the cached output array."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> Array:
        return self.tape._nodes[self.index].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        v = self.value
        if v.shape != (1, 1):
            raise ShapeError(f"item() requires a 1x1 node, got {v.shape}")
        return float(v[0, 0])

    def to_matrix(self) -> Matrix:
        return Matrix(self.value)

    # Operator sugar; delegates to the owning tape.
    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __mul__(self, other):
        return self.tape.hadamard(self, other)

    def T(self):
        return self.tape.transpose(self)


class _Node:
    __slots__ = ("op", "parents", "value", "vjp", "param")

    def __init__(self, op, parents, value, vjp, param=None):
        self.op = op
        self.parents = parents
        self.value = value
        self.vjp = vjp
        self.param = param


_ACTIVATIONS = ("relu", "tanh", "identity")


class Tape:
    """Recorded computation graph for one forward pass.

    Nodes are appended in execution order, so parent indices always precede
    their children and a single reverse sweep propagates every adjoint.
    Tapes are single-threaded and rebuilt for every forward pass.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def _push(self, op, parents, value, vjp, param=None) -> Var:
        self._nodes.append(_Node(op, parents, value, vjp, param))
        return Var(self, len(self._nodes) - 1)

    def _lift(self, x, name: str = "operand") -> Var:
        """Return x as a Var on this tape, wrapping raw values as constants."""
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValidationError("operands belong to different tapes")
            return x
        return self.constant(x, name)

    # ------------------------------------------------------------------ leaves

    def constant(self, values, name: str = "const") -> Var:
        arr = as_array2d(values, name)
        return self._push("const", (), arr, None)

    def param(self, p: Parameter) -> Var:
        """Leaf node bound to a Parameter; backward accumulates into p.grad."""
        return self._push("param", (), p.value, None, param=p)

    # -------------------------------------------------------------- linear ops

    def matmul(self, a, b) -> Var:
        a, b = self._lift(a, "a"), self._lift(b, "b")
        av, bv = a.value, b.value
        if av.shape[1] != bv.shape[0]:
            raise ShapeError(
                f"matmul inner dimensions disagree: {av.shape} @ {bv.shape}"
            )
        out = av @ bv

        def vjp(g):
            return g @ bv.T, av.T @ g

        return self._push("matmul", (a.index, b.index), out, vjp)

    def transpose(self, a) -> Var:
        a = self._lift(a)
        return self._push("transpose", (a.index,), a.value.T.copy(), lambda g: (g.T,))

    def reshape_cm(self, a, rows: int, cols: int) -> Var:
        """Column-major reshape; covers vec and unvec of latent signals."""
        a = self._lift(a)
        av = a.value
        if av.size != rows * cols:
            raise ShapeError(
                f"cannot reshape {av.shape} into {rows}x{cols}: size mismatch"
            )
        out = av.reshape((rows, cols), order="F").copy()
        in_shape = av.shape

        def vjp(g):
            return (g.reshape(in_shape, order="F"),)

        return self._push("reshape", (a.index,), out, vjp)

    def concat_rows(self, parts: Sequence) -> Var:
        """Stack nodes vertically; the adjoint is sliced back row-wise."""
        parts = [self._lift(p) for p in parts]
        if not parts:
            raise EmptySelectionError("concat_rows needs at least one operand")
        cols = parts[0].value.shape[1]
        for p in parts:
            if p.value.shape[1] != cols:
                raise ShapeError("concat_rows operands must share column count")
        out = np.concatenate([p.value for p in parts], axis=0)
        offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

        def vjp(g):
            return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(parts)))

        return self._push("concat_rows", tuple(p.index for p in parts), out, vjp)

    def gather_rows(self, a, rows: Sequence[int]) -> Var:
        """Select rows by index, in the given order (bit-exact row copies)."""
        a = self._lift(a)
        idx = _check_index_list(rows, a.value.shape[0], "gather_rows")
        out = a.value[idx].copy()

        def vjp(g):
            ga = np.zeros_like(a.value)
            np.add.at(ga, idx, g)
            return (ga,)

        return self._push("gather_rows", (a.index,), out, vjp)

    def scatter_rows(self, a, dest: Sequence[int], out_rows: int) -> Var:
        """Copy row i of ``a`` into row dest[i] of an otherwise-zero matrix."""
        a = self._lift(a)
        av = a.value
        if len(dest) != av.shape[0]:
            raise ShapeError(
                f"scatter_rows needs one destination per row: "
                f"{len(dest)} destinations for {av.shape[0]} rows"
            )
        idx = _check_index_list(dest, out_rows, "scatter_rows")
        if len(set(idx.tolist())) != idx.size:
            raise ValidationError("scatter_rows destinations must be distinct")
        out = np.zeros((out_rows, av.shape[1]))
        out[idx] = av

        def vjp(g):
            return (g[idx].copy(),)

        return self._push("scatter_rows", (a.index,), out, vjp)

    # --------------------------------------------------------- pointwise ops

    def add(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        _check_same_shape(a.value, b.value, "add")
        return self._push(
            "add", (a.index, b.index), a.value + b.value, lambda g: (g, g)
        )

    def sub(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        _check_same_shape(a.value, b.value, "sub")
        return self._push(
            "sub", (a.index, b.index), a.value - b.value, lambda g: (g, -g)
        )

    def hadamard(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        _check_same_shape(av, bv, "hadamard")
        return self._push(
            "hadamard", (a.index, b.index), av * bv, lambda g: (g * bv, g * av)
        )

    def scale(self, alpha: float, a) -> Var:
        a = self._lift(a)
        alpha = float(alpha)
        return self._push(
            "scale", (a.index,), alpha * a.value, lambda g: (alpha * g,)
        )

    def add_row(self, a, bias) -> Var:
        """a + 1 * b^T for a 1 x F bias row (the only broadcast in the engine)."""
        a, bias = self._lift(a), self._lift(bias)
        av, bv = a.value, bias.value
        if bv.shape != (1, av.shape[1]):
            raise ShapeError(
                f"bias must be 1x{av.shape[1]}, got {bv.shape[0]}x{bv.shape[1]}"
            )

        def vjp(g):
            return g, g.sum(axis=0, keepdims=True)

        return self._push("add_row", (a.index, bias.index), av + bv, vjp)

    def relu(self, a) -> Var:
        a = self._lift(a)
        av = a.value
        mask = av > 0  # derivative at exactly 0 is defined as 0
        return self._push("relu", (a.index,), np.where(mask, av, 0.0),
                          lambda g: (g * mask,))

    def tanh(self, a) -> Var:
        a = self._lift(a)
        t = np.tanh(a.value)
        return self._push("tanh", (a.index,), t, lambda g: (g * (1.0 - t * t),))

    def identity(self, a) -> Var:
        a = self._lift(a)
        return self._push("identity", (a.index,), a.value, lambda g: (g,))

    def activate(self, kind: str, a) -> Var:
        if kind not in _ACTIVATIONS:
            raise ValidationError(
                f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}"
            )
        return getattr(self, kind)(a)

    # ---------------------------------------------------------------- losses

    def frobenius_sq(self, a) -> Var:
        a = self._lift(a)
        av = a.value
        out = np.array([[float(np.sum(av * av))]])
        return self._push("frobenius_sq", (a.index,), out,
                          lambda g: (2.0 * g[0, 0] * av,))

    def trace(self, a) -> Var:
        a = self._lift(a)
        av = a.value
        n = av.shape[0]
        if av.shape[1] != n:
            raise ShapeError(f"trace requires a square matrix, got {av.shape}")
        out = np.array([[float(np.trace(av))]])

        def vjp(g):
            return (g[0, 0] * np.eye(n),)

        return self._push("trace", (a.index,), out, vjp)

    def mean_sq_error(self, a, b, rows: Sequence[int] | None = None) -> Var:
        """Mean of squared differences over the selected rows (all columns).

        ``rows=None`` means every row.  An explicitly empty selection is an
        error; a loss over nothing is always a bug upstream.
        """
        a, b = self._lift(a), self._lift(b)
        av, bv = a.value, b.value
        _check_same_shape(av, bv, "mean_sq_error")
        if rows is None:
            idx = np.arange(av.shape[0])
        else:
            idx = _check_rows(rows, av.shape[0], "mean_sq_error", allow_empty=False)
        diff = av[idx] - bv[idx]
        denom = float(diff.size)
        out = np.array([[float(np.sum(diff * diff)) / denom]])

        def vjp(g):
            ga = np.zeros_like(av)
            ga[idx] = (2.0 / denom) * diff
            ga *= g[0, 0]
            return ga, -ga

        return self._push("mse", (a.index, b.index), out, vjp)

    def softmax_cross_entropy(self, logits, labels: Sequence[int],
                              rows: Sequence[int] | None = None) -> Var:
        """Mean over selected rows of -log softmax(logits)[row, label].

        Stabilized by row-max subtraction, so saturated logits stay finite.
        """
        logits = self._lift(logits)
        lv = logits.value
        n, c = lv.shape
        lab = np.asarray(labels, dtype=np.int64)
        if lab.ndim != 1 or lab.size != n:
            raise ShapeError(f"expected {n} labels, got shape {lab.shape}")
        if np.any(lab < 0) or np.any(lab >= c):
            bad = int(lab[(lab < 0) | (lab >= c)][0])
            raise ValidationError(f"label {bad} outside [0, {c})")
        if rows is None:
            idx = np.arange(n)
        else:
            idx = _check_rows(rows, n, "softmax_cross_entropy", allow_empty=False)

        sel = lv[idx]
        shifted = sel - sel.max(axis=1, keepdims=True)
        expv = np.exp(shifted)
        probs = expv / expv.sum(axis=1, keepdims=True)
        logz = np.log(expv.sum(axis=1))
        picked = shifted[np.arange(idx.size), lab[idx]]
        out = np.array([[float(np.mean(logz - picked))]])

        def vjp(g):
            grad_sel = probs.copy()
            grad_sel[np.arange(idx.size), lab[idx]] -= 1.0
            grad_sel /= idx.size
            gl = np.zeros_like(lv)
            gl[idx] = g[0, 0] * grad_sel
            return (gl,)

        return self._push("softmax_xent", (logits.index,), out, vjp)

    # -------------------------------------------------------------- backward

    def backward(self, loss: Var) -> None:
        """Accumulate d(loss)/d(param) into every reachable Parameter.grad.

        Repeated calls without a grad reset add up, which is exactly what a
        summed multi-term loss needs.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ValidationError("loss must be a node of this tape")
        if loss.value.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.value.shape}")
        adjoints: list[Array | None] = [None] * len(self._nodes)
        adjoints[loss.index] = np.ones((1, 1))
        for i in range(loss.index, -1, -1):
            g = adjoints[i]
            if g is None:
                continue
            node = self._nodes[i]
            if node.param is not None:
                node.param.grad += g
                continue
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if adjoints[parent] is None:
                    adjoints[parent] = pg.copy()
                else:
                    adjoints[parent] += pg


def _check_same_shape(a: Array, b: Array, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} operands differ in shape: {a.shape} vs {b.shape}")


def _check_rows(rows, n: int, op: str, allow_empty: bool = True) -> Array:
    """Validate a row *set* (mask semantics): sorted, distinct, in range."""
    idx = np.asarray(sorted(int(r) for r in rows), dtype=np.int64)
    if idx.size == 0:
        if allow_empty:
            return idx
        raise EmptySelectionError(f"{op}: row selection is empty")
    if idx.size != len(set(idx.tolist())):
        raise ValidationError(f"{op}: duplicate row indices")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValidationError(f"{op}: row index outside [0, {n})")
    return idx


def _check_index_list(rows, n: int, op: str) -> Array:
    """Validate an ordered index list (order is meaningful, kept as given)."""
    idx = np.asarray([int(r) for r in rows], dtype=np.int64)
    if idx.size == 0:
        raise EmptySelectionError(f"{op}: index list is empty")
    if np.any(idx < 0) or np.any(idx >= n):
        raise ValidationError(f"{op}: row index outside [0, {n})")
    return idx


def grad_check(loss_fn: Callable[[], Var], params: Sequence[Parameter],
               eps: float = 1e-5, max_entries: int = 50, seed: int = 0) -> float:
    """Compare backward gradients against central differences.

    ``loss_fn`` rebuilds the forward pass from the current parameter values
    and returns the scalar loss node.  At most ``max_entries`` entries per
    parameter are probed, chosen uniformly with a fixed seed so the oracle's
    cost stays bounded on wide layers.  Returns the maximum over probed
    entries of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
    """
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    params = list(params)
    reset_grads(params)
    loss = loss_fn()
    if loss.value.shape != (1, 1):
        raise ShapeError(f"loss_fn must return a scalar node, got {loss.value.shape}")
    loss.tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, g_ad_full in zip(params, analytic):
        flat_val = p.value.reshape(-1)
        flat_ad = g_ad_full.reshape(-1)
        size = flat_val.size
        if size <= max_entries:
            entries = np.arange(size)
        else:
            entries = rng.choice(size, size=max_entries, replace=False)
        for k in entries:
            orig = flat_val[k]
            flat_val[k] = orig + eps
            f_plus = loss_fn().item()
            flat_val[k] = orig - eps
            f_minus = loss_fn().item()
            flat_val[k] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericError(
                    f"non-finite loss while probing {p.name}[{k}]"
                )
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g_ad = flat_ad[k]
            err = abs(g_ad - g_fd) / max(1e-8, abs(g_ad) + abs(g_fd))
            worst = max(worst, err)
    reset_grads(params)
    return worst
