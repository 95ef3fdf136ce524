"""Closed-form linear CCA, a Jacobi eigensolver, and a logistic classifier.

``linear_cca`` is the ground-truth oracle for everything the CCA training
mode learns: it whitens both views with inverse square roots of their
(ridge-stabilized) covariances and reads the canonical correlations off
the singular values of the coupling matrix.  The SVD itself is obtained
from the two symmetric eigenproblems, solved by cyclic Jacobi rotations,
so this module has no dependency on the training stack it validates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Matrix, Parameter, Tape, as_array2d
from .errors import NumericError, ParameterError, ShapeError, ValidationError
from .training import TrainConfig, make_optimizer

_MAX_SWEEPS = 100


def sym_eig(a, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs, rotating each one to zero, until
    every off-diagonal magnitude falls below ``tol``.  Returns eigenvalues
    in descending order and the matching orthonormal eigenvectors as
    columns.  Raises if the input is not symmetric (within 1e-10) or if
    100 sweeps do not converge.
    """
    m = as_array2d(a, "a").copy()
    n = m.shape[0]
    if m.shape[1] != n:
        raise ShapeError(f"sym_eig needs a square matrix, got {m.shape}")
    if np.max(np.abs(m - m.T)) > 1e-10:
        raise ValidationError("sym_eig input is not symmetric within 1e-10")
    m = 0.5 * (m + m.T)
    q = np.eye(n)
    if n == 1:
        return m.reshape(1), q
    for _ in range(_MAX_SWEEPS):
        off = np.abs(m - np.diag(np.diag(m))).max()
        if off < tol:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = m[p, r]
                if abs(apq) < tol * 1e-2:
                    continue
                theta = (m[r, r] - m[p, p]) / (2.0 * apq)
                t = np.sign(theta) if theta != 0 else 1.0
                t = t / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- G^T A G with the Givens rotation G in the (p,r) plane.
                col_p = m[:, p].copy()
                col_r = m[:, r].copy()
                m[:, p] = c * col_p - s * col_r
                m[:, r] = s * col_p + c * col_r
                row_p = m[p, :].copy()
                row_r = m[r, :].copy()
                m[p, :] = c * row_p - s * row_r
                m[r, :] = s * row_p + c * row_r
                m[p, r] = 0.0
                m[r, p] = 0.0
                qp = q[:, p].copy()
                qr = q[:, r].copy()
                q[:, p] = c * qp - s * qr
                q[:, r] = s * qp + c * qr
    else:
        raise NumericError(f"Jacobi did not converge in {_MAX_SWEEPS} sweeps")
    vals = np.diag(m).copy()
    order = np.argsort(-vals, kind="stable")
    return vals[order], q[:, order]


def _inv_sqrt_psd(cov: np.ndarray, context: str) -> np.ndarray:
    vals, vecs = sym_eig(cov)
    floor = 1e-14 * max(1.0, float(vals[0])) if vals[0] > 0 else 0.0
    if vals[-1] <= floor:
        raise NumericError(
            f"{context} covariance is singular; rerun with ridge > 0"
        )
    return (vecs / np.sqrt(vals)) @ vecs.T


@dataclass(frozen=True)
class CCASolution:
    """Projections U, V (directions as rows) plus canonical correlations."""

    u: Matrix
    v: Matrix
    correlations: tuple[float, ...]


def linear_cca(xs, ys, n_z: int, ridge: float = 1e-8) -> CCASolution:
    """Closed-form CCA on row-stacked samples.

    Views are mean-centered, covariances use the 1/P convention with
    ``ridge * I`` added to both auto-covariances, and the canonical pairs
    come from the SVD of inv_sqrt(Cxx) @ Cxy @ inv_sqrt(Cyy), computed via
    the symmetric eigenproblems of T T^T and T^T T.  Signs are aligned by
    making each left vector's largest-magnitude entry positive.
    """
    x = as_array2d(xs, "xs")
    y = as_array2d(ys, "ys")
    p = x.shape[0]
    if y.shape[0] != p:
        raise ShapeError(f"views have different sample counts: {p} vs {y.shape[0]}")
    if p < 2:
        raise ParameterError("linear_cca needs more than one sample")
    if ridge < 0:
        raise ParameterError(f"ridge must be >= 0, got {ridge}")
    n_x, n_y = x.shape[1], y.shape[1]
    if not 0 <= n_z <= min(n_x, n_y):
        raise ParameterError(
            f"n_z must lie in [0, {min(n_x, n_y)}], got {n_z}"
        )
    if n_z == 0:
        # Degenerate but legal: no directions, objective value 0.
        return CCASolution(Matrix(np.zeros((1, n_x))), Matrix(np.zeros((1, n_y))),
                           tuple())
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    cxx = xc.T @ xc / p + ridge * np.eye(n_x)
    cyy = yc.T @ yc / p + ridge * np.eye(n_y)
    cxy = xc.T @ yc / p
    isx = _inv_sqrt_psd(cxx, "first-view")
    isy = _inv_sqrt_psd(cyy, "second-view")
    t = isx @ cxy @ isy

    left_vals, left_vecs = sym_eig(t @ t.T)
    _, right_vecs = sym_eig(t.T @ t)
    u_cols = np.zeros((n_x, n_z))
    v_cols = np.zeros((n_y, n_z))
    corr = []
    for i in range(n_z):
        u = left_vecs[:, i]
        if u[np.argmax(np.abs(u))] < 0:
            u = -u
        sigma = float(np.sqrt(max(left_vals[i], 0.0)))
        cand = t.T @ u
        norm = float(np.sqrt(np.sum(cand * cand)))
        if norm > 1e-12:
            v = cand / norm
            sigma = norm
        else:
            v = right_vecs[:, i]
            if float(u @ t @ v) < 0:
                v = -v
        u_cols[:, i] = u
        v_cols[:, i] = v
        corr.append(min(max(sigma, 0.0), 1.0))
    u_dirs = (isx @ u_cols).T
    v_dirs = (isy @ v_cols).T
    return CCASolution(Matrix(u_dirs), Matrix(v_dirs), tuple(corr))


def sum_correlations(sol: CCASolution) -> float:
    """Total canonical correlation: the CCA objective at its optimum."""
    return float(sum(sol.correlations))


@dataclass
class LogisticModel:
    """Multinomial logistic weights (F x C) and bias row (1 x C)."""

    weights: Matrix
    bias: Matrix
    num_classes: int


def logistic_fit(features, labels, config: TrainConfig | None = None,
                 weight_decay: float = 1e-4) -> LogisticModel:
    """Fit a softmax classifier by full-batch gradient descent.

    Deterministic: parameters start at zero and the optimizer follows the
    given config (Adam by default).  A single observed class degenerates
    to a constant predictor, which is fine.
    """
    feats = as_array2d(features, "features")
    labs = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labs.size != feats.shape[0]:
        raise ShapeError(
            f"got {labs.size} labels for {feats.shape[0]} feature rows"
        )
    if np.any(labs < 0):
        raise ValidationError("labels must be non-negative")
    config = config or TrainConfig(epochs=300, lr=5e-2)
    n_classes = int(labs.max()) + 1
    w = Parameter(np.zeros((feats.shape[1], n_classes)), name="logistic.w")
    b = Parameter(np.zeros((1, n_classes)), name="logistic.b")
    opt = make_optimizer([w, b], config)
    for _ in range(config.epochs):
        w.reset_grad()
        b.reset_grad()
        tape = Tape()
        logits = tape.add_row(tape.matmul(tape.constant(feats), tape.param(w)),
                              tape.param(b))
        loss = tape.softmax_cross_entropy(logits, labs)
        if weight_decay > 0:
            loss = tape.add(loss,
                            tape.scale(weight_decay, tape.frobenius_sq(tape.param(w))))
        tape.backward(loss)
        opt.step()
    return LogisticModel(Matrix(w.value), Matrix(b.value), n_classes)


def logistic_predict(model: LogisticModel, features) -> np.ndarray:
    """Row-wise argmax of features @ W + b; ties go to the lowest class."""
    feats = as_array2d(features, "features")
    if feats.shape[1] != model.weights.rows:
        raise ShapeError(
            f"features have width {feats.shape[1]}, model expects "
            f"{model.weights.rows}"
        )
    scores = feats @ model.weights.data + model.bias.data
    return np.argmax(scores, axis=1)
