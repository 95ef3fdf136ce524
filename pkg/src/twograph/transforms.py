"""Latent-space transforms: map signals with N_in rows onto N_out rows.

These sit between the two GNN blocks.  Variants range from fixed
rearrangements (transpose, row copy by node correspondence, k-nearest
averaging) to learnable linear maps over the vectorized signal with
progressively more structure (dense, low-rank, Kronecker product/sum,
per-node linear).  All learnable variants are recorded on the tape so the
whole architecture trains jointly.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Matrix, Parameter, Tape, Var, as_array2d
from .errors import ParameterError, ShapeError, ValidationError
from .graphs import NodeMap
from .layers import GNNStack, dense_stack, glorot

TRANSFORM_KINDS = (
    "identity", "transpose", "linear_node", "kronecker_product",
    "kronecker_sum", "low_rank_vec", "dense_vec", "copy_common",
    "selection_knn", "row_mlp",
)


def vec(m) -> Matrix:
    """Column-major stacking of a matrix into an (a*b) x 1 column."""
    arr = as_array2d(m, "m")
    return Matrix(arr.reshape(-1, 1, order="F"))


def unvec(v, rows: int, cols: int) -> Matrix:
    """Inverse of ``vec``: refold a column into rows x cols, column-major."""
    arr = as_array2d(v, "v")
    if arr.shape[1] != 1 or arr.shape[0] != rows * cols:
        raise ShapeError(
            f"cannot unvec shape {arr.shape} into {rows}x{cols}"
        )
    return Matrix(arr.reshape(rows, cols, order="F"))


class Transform:
    """Base class; concrete variants implement apply() on a tape."""

    kind = "?"

    def parameters(self) -> list[Parameter]:
        return []

    def apply(self, tape: Tape, z) -> Var:
        raise NotImplementedError

    def describe(self) -> dict:
        """Topology descriptor used by checkpoints and configs."""
        return {"kind": self.kind}

    def _shape_in(self, tape: Tape, z, rows: int | None = None,
                  cols: int | None = None) -> Var:
        z = tape._lift(z, f"{self.kind} input")
        r, c = z.value.shape
        if rows is not None and r != rows:
            raise ShapeError(f"{self.kind}: expected {rows} input rows, got {r}")
        if cols is not None and c != cols:
            raise ShapeError(f"{self.kind}: expected {cols} input columns, got {c}")
        return z


class IdentityTransform(Transform):
    """Pass-through; for setups whose encoder outputs already line up."""

    kind = "identity"

    def apply(self, tape, z):
        return tape.identity(tape._lift(z))


class TransposeTransform(Transform):
    """Z -> Z^T, a fixed permutation of cells; forces F_in = N_out."""

    kind = "transpose"

    def apply(self, tape, z):
        return tape.transpose(tape._lift(z))


class LinearNodeTransform(Transform):
    """Z -> W_N @ Z with learnable W_N in R^{N_out x N_in}.

    Feature count is untouched; this is the Kronecker map I (x) W_N over
    the vectorized signal.
    """

    kind = "linear_node"

    def __init__(self, n_in: int, n_out: int, seed: int = 0,
                 init: str = "glorot"):
        if init == "identity":
            if n_in != n_out:
                raise ParameterError("identity init needs n_in == n_out")
            w = np.eye(n_out)
        elif init == "glorot":
            w = glorot(n_out, n_in, np.random.default_rng(seed))
        else:
            raise ParameterError(f"unknown init {init!r}")
        self.n_in, self.n_out = n_in, n_out
        self.init = init
        self.w_n = Parameter(w, name="psi_z.w_n")

    def parameters(self):
        return [self.w_n]

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in)
        return tape.matmul(tape.param(self.w_n), z)

    def describe(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out}


class KroneckerProductTransform(Transform):
    """Z -> W_N @ Z @ W_F^T: node mixing and feature mixing factorized.

    Equals the dense vectorized map with W = W_F (x) W_N.
    """

    kind = "kronecker_product"

    def __init__(self, n_in: int, n_out: int, f_in: int, f_out: int,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_in, self.n_out = n_in, n_out
        self.f_in, self.f_out = f_in, f_out
        self.w_n = Parameter(glorot(n_out, n_in, rng), name="psi_z.w_n")
        self.w_f = Parameter(glorot(f_out, f_in, rng), name="psi_z.w_f")

    def parameters(self):
        return [self.w_n, self.w_f]

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in, cols=self.f_in)
        h = tape.matmul(tape.param(self.w_n), z)
        return tape.matmul(h, tape.transpose(tape.param(self.w_f)))

    def describe(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "f_in": self.f_in, "f_out": self.f_out}


class KroneckerSumTransform(Transform):
    """Z -> W_N @ Z + Z @ W_F^T; only type-checks when output shape equals
    input shape, so it requires N_in = N_out and F_in = F_out."""

    kind = "kronecker_sum"

    def __init__(self, n: int, f: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n, self.f = n, f
        self.w_n = Parameter(glorot(n, n, rng), name="psi_z.w_n")
        self.w_f = Parameter(glorot(f, f, rng), name="psi_z.w_f")

    def parameters(self):
        return [self.w_n, self.w_f]

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n, cols=self.f)
        left = tape.matmul(tape.param(self.w_n), z)
        right = tape.matmul(z, tape.transpose(tape.param(self.w_f)))
        return tape.add(left, right)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "f": self.f}


class LowRankVecTransform(Transform):
    """vec(Z_out) = W_Y @ W_X^T @ vec(Z_in) with rank-K factors.

    Either factor may be frozen.  With ``inner_activation`` set, a pointwise
    nonlinearity is applied to the K-dimensional code between the factors,
    which turns the map into a two-layer perceptron over vec(Z).
    """

    kind = "low_rank_vec"

    def __init__(self, n_in: int, f_in: int, n_out: int, f_out: int, k: int,
                 seed: int = 0, learn_x: bool = True, learn_y: bool = True,
                 inner_activation: str | None = None):
        if k < 1:
            raise ParameterError(f"rank must be >= 1, got {k}")
        rng = np.random.default_rng(seed)
        self.n_in, self.f_in = n_in, f_in
        self.n_out, self.f_out = n_out, f_out
        self.k = k
        self.learn_x, self.learn_y = learn_x, learn_y
        self.inner_activation = inner_activation
        scale = 1.0 / np.sqrt(k)
        self.w_x = Parameter(glorot(n_in * f_in, k, rng, scale), name="psi_z.w_x")
        self.w_y = Parameter(glorot(n_out * f_out, k, rng, scale), name="psi_z.w_y")

    def parameters(self):
        out = []
        if self.learn_x:
            out.append(self.w_x)
        if self.learn_y:
            out.append(self.w_y)
        return out

    def _factor(self, tape, p: Parameter, learn: bool) -> Var:
        return tape.param(p) if learn else tape.constant(p.value)

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in, cols=self.f_in)
        col = tape.reshape_cm(z, self.n_in * self.f_in, 1)
        code = tape.matmul(tape.transpose(self._factor(tape, self.w_x, self.learn_x)), col)
        if self.inner_activation is not None:
            code = tape.activate(self.inner_activation, code)
        out = tape.matmul(self._factor(tape, self.w_y, self.learn_y), code)
        return tape.reshape_cm(out, self.n_out, self.f_out)

    def project_codes(self, tape: Tape, z_x, z_y) -> tuple[Var, Var]:
        """Map both views to the shared K-dimensional space as 1 x K rows."""
        z_x = self._shape_in(tape, z_x, rows=self.n_in, cols=self.f_in)
        z_y = tape._lift(z_y, "z_y")
        if z_y.value.shape != (self.n_out, self.f_out):
            raise ShapeError(
                f"low_rank_vec: z_y must be {self.n_out}x{self.f_out}, "
                f"got {z_y.value.shape}"
            )
        col_x = tape.reshape_cm(z_x, self.n_in * self.f_in, 1)
        col_y = tape.reshape_cm(z_y, self.n_out * self.f_out, 1)
        code_x = tape.matmul(tape.transpose(self._factor(tape, self.w_x, self.learn_x)), col_x)
        code_y = tape.matmul(tape.transpose(self._factor(tape, self.w_y, self.learn_y)), col_y)
        return tape.transpose(code_x), tape.transpose(code_y)

    def describe(self):
        return {"kind": self.kind, "n_in": self.n_in, "f_in": self.f_in,
                "n_out": self.n_out, "f_out": self.f_out, "k": self.k,
                "learn_x": self.learn_x, "learn_y": self.learn_y,
                "inner_activation": self.inner_activation}


class DenseVecTransform(Transform):
    """vec(Z_out) = W @ vec(Z_in): the fully general linear map."""

    kind = "dense_vec"

    def __init__(self, n_in: int, f_in: int, n_out: int, f_out: int,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.n_in, self.f_in = n_in, f_in
        self.n_out, self.f_out = n_out, f_out
        self.w = Parameter(glorot(n_out * f_out, n_in * f_in, rng),
                           name="psi_z.w")

    def parameters(self):
        return [self.w]

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in, cols=self.f_in)
        col = tape.reshape_cm(z, self.n_in * self.f_in, 1)
        out = tape.matmul(tape.param(self.w), col)
        return tape.reshape_cm(out, self.n_out, self.f_out)

    def describe(self):
        return {"kind": self.kind, "n_in": self.n_in, "f_in": self.f_in,
                "n_out": self.n_out, "f_out": self.f_out}


class CopyCommonTransform(Transform):
    """Copy rows along a node correspondence; unmapped output rows stay zero."""

    kind = "copy_common"

    def __init__(self, node_map: NodeMap, n_in: int, n_out: int):
        node_map.validate(n_in, n_out)
        self.node_map = node_map
        self.n_in, self.n_out = n_in, n_out

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in)
        if len(self.node_map) == 0:
            return tape.constant(np.zeros((self.n_out, z.value.shape[1])))
        src = [a for a, _ in self.node_map.pairs]
        dst = [b for _, b in self.node_map.pairs]
        return tape.scatter_rows(tape.gather_rows(z, src), dst, self.n_out)

    def describe(self):
        return {"kind": self.kind, "n_in": self.n_in, "n_out": self.n_out,
                "pairs": [list(p) for p in self.node_map.pairs]}


class SelectionKnnTransform(Transform):
    """Each output row is the mean of the k nearest input rows.

    Nearness is Euclidean distance between node coordinates; ties at the
    k-th distance break by ascending input node id.  The resulting
    averaging operator is fixed, so gradients flow through it untouched.
    """

    kind = "selection_knn"

    def __init__(self, coords_in, coords_out, k: int):
        ci = as_array2d(coords_in, "coords_in")
        co = as_array2d(coords_out, "coords_out")
        if ci.shape[1] != co.shape[1]:
            raise ShapeError("coordinate dimensions differ between graphs")
        if k < 1:
            raise ParameterError(f"k must be >= 1, got {k}")
        if k > ci.shape[0]:
            raise ParameterError(
                f"k={k} exceeds the {ci.shape[0]} available input nodes"
            )
        self.coords_in, self.coords_out, self.k = ci, co, k
        self.n_in, self.n_out = ci.shape[0], co.shape[0]
        weights = np.zeros((self.n_out, self.n_in))
        for j in range(self.n_out):
            d = np.linalg.norm(ci - co[j], axis=1)
            nearest = np.argsort(d, kind="stable")[:k]
            weights[j, nearest] = 1.0 / k
        self.weights = weights

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in)
        return tape.matmul(tape.constant(self.weights, "knn_weights"), z)

    def describe(self):
        return {"kind": self.kind, "k": self.k,
                "coords_in": self.coords_in.tolist(),
                "coords_out": self.coords_out.tolist()}


class RowMlpTransform(Transform):
    """Dense MLP over the node axis: applied to Z^T, then transposed back.

    First and last widths are N_in and N_out; every feature column passes
    through the same row network.
    """

    kind = "row_mlp"

    def __init__(self, widths: list[int], activation: str = "tanh",
                 seed: int = 0):
        if len(widths) < 2:
            raise ParameterError("row_mlp needs at least [N_in, N_out] widths")
        self.widths = list(widths)
        self.activation = activation
        self.n_in, self.n_out = widths[0], widths[-1]
        self.stack = dense_stack(widths, activation=activation, seed=seed,
                                 name="psi_z.row_mlp")

    def parameters(self):
        return self.stack.parameters()

    def apply(self, tape, z):
        z = self._shape_in(tape, z, rows=self.n_in)
        h = self.stack.forward(tape, tape.transpose(z))
        return tape.transpose(h)

    def describe(self):
        return {"kind": self.kind, "widths": self.widths,
                "activation": self.activation}


def symmetric_project(t: Transform, tape: Tape, z_x, z_y) -> tuple[Var, Var]:
    """Two-sided projection to the K-dim code space of a low-rank transform."""
    if not isinstance(t, LowRankVecTransform):
        raise ParameterError(
            f"symmetric projection needs a low_rank_vec transform, got {t.kind}"
        )
    return t.project_codes(tape, z_x, z_y)


def transform_from_spec(spec: dict, seed: int = 0) -> Transform:
    """Build a transform from its descriptor (config or checkpoint form)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "identity":
        return IdentityTransform()
    if kind == "transpose":
        return TransposeTransform()
    if kind == "linear_node":
        return LinearNodeTransform(spec["n_in"], spec["n_out"], seed=seed,
                                   init=spec.get("init", "glorot"))
    if kind == "kronecker_product":
        return KroneckerProductTransform(spec["n_in"], spec["n_out"],
                                         spec["f_in"], spec["f_out"], seed=seed)
    if kind == "kronecker_sum":
        return KroneckerSumTransform(spec["n"], spec["f"], seed=seed)
    if kind == "low_rank_vec":
        return LowRankVecTransform(
            spec["n_in"], spec["f_in"], spec["n_out"], spec["f_out"], spec["k"],
            seed=seed, learn_x=spec.get("learn_x", True),
            learn_y=spec.get("learn_y", True),
            inner_activation=spec.get("inner_activation"))
    if kind == "dense_vec":
        return DenseVecTransform(spec["n_in"], spec["f_in"],
                                 spec["n_out"], spec["f_out"], seed=seed)
    if kind == "copy_common":
        node_map = NodeMap([tuple(p) for p in spec["pairs"]])
        return CopyCommonTransform(node_map, spec["n_in"], spec["n_out"])
    if kind == "selection_knn":
        return SelectionKnnTransform(np.asarray(spec["coords_in"], dtype=float),
                                     np.asarray(spec["coords_out"], dtype=float),
                                     spec["k"])
    if kind == "row_mlp":
        return RowMlpTransform(spec["widths"],
                               activation=spec.get("activation", "tanh"),
                               seed=seed)
    raise ValidationError(
        f"unknown transform kind {kind!r}; expected one of {TRANSFORM_KINDS}"
    )
