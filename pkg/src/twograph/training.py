"""Losses, optimizers, the training loop, and evaluation metrics.

Training is full-batch gradient descent with validation-based early
stopping; the best-validation parameters are restored at the end.  The
CCA objective follows the soft relaxation: squared view mismatch plus
lambda-weighted decorrelation penalties pushing each view's feature Gram
matrix toward the identity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .autodiff import Parameter, Tape, Var, as_array2d, reset_grads
from .errors import (
    ConfigError,
    EmptySelectionError,
    ParameterError,
    ShapeError,
    ValidationError,
)
from .graphs import Graph
from .model import IOModel

LOSS_KINDS = ("mse", "cross_entropy")


@dataclass
class TrainConfig:
    epochs: int = 300
    lr: float = 1e-2
    optimizer: str = "adam"  # or "sgd"
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 1e-3  # decorrelation weight for the CCA objective
    patience: int = 30
    seed: int = 0
    hidden: int = 16
    depth: int = 2
    activation: str = "tanh"

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class NodeSplit:
    """Disjoint train/val/test node-id sets over the output graph."""

    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def __init__(self, train, val, test):
        tr = tuple(sorted(int(i) for i in train))
        va = tuple(sorted(int(i) for i in val))
        te = tuple(sorted(int(i) for i in test))
        sets = [set(tr), set(va), set(te)]
        if (sets[0] & sets[1]) or (sets[0] & sets[2]) or (sets[1] & sets[2]):
            raise ValidationError("split sets must be pairwise disjoint")
        object.__setattr__(self, "train", tr)
        object.__setattr__(self, "val", va)
        object.__setattr__(self, "test", te)

    def validate(self, n: int) -> None:
        for part in (self.train, self.val, self.test):
            for i in part:
                if not 0 <= i < n:
                    raise ValidationError(f"split node {i} outside [0,{n})")


@dataclass
class RunReport:
    """Per-epoch traces plus the final evaluation of one training run."""

    trace: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int | None = None
    final_metrics: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    seed: int = 0


# ------------------------------------------------------------------- tasks


@dataclass
class SupervisedTask:
    """Pairs of (input signal, target signal/labels) with full supervision."""

    pairs: list[tuple]
    kind: str = "mse"
    g_x: Graph | None = None
    g_y: Graph | None = None
    val_pairs: list[tuple] | None = None

    def __post_init__(self):
        if not self.pairs:
            raise ParameterError("supervised task needs a non-empty dataset")
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")


@dataclass
class SemisupTask:
    """One (x, y) pair where the target is observed on a subset of nodes."""

    x: object
    y: object
    split: NodeSplit
    kind: str = "mse"
    g_x: Graph | None = None
    g_y: Graph | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if len(self.split.train) == 0:
            raise EmptySelectionError("semi-supervised task has no train nodes")


@dataclass
class CCATask:
    """View pairs for the correlation objective.

    ``sample_count`` overrides the Gram normalizer when a single pair packs
    many independent samples as rows (the classic vector-CCA layout).
    """

    pairs: list[tuple]
    sample_count: int | None = None
    g_x: Graph | None = None
    g_y: Graph | None = None

    def __post_init__(self):
        if not self.pairs:
            raise ParameterError("cca task needs a non-empty dataset")

    @property
    def p_count(self) -> int:
        return self.sample_count if self.sample_count is not None else len(self.pairs)


# ------------------------------------------------------------------- losses


def _pair_loss(tape: Tape, pred: Var, target, kind: str,
               rows: Sequence[int] | None = None) -> Var:
    if kind == "mse":
        return tape.mean_sq_error(pred, tape._lift(target), rows)
    if kind == "cross_entropy":
        labels = np.asarray(target, dtype=np.int64).reshape(-1)
        return tape.softmax_cross_entropy(pred, labels, rows)
    raise ConfigError(f"unknown loss kind {kind!r}")


def supervised_loss(tape: Tape, model: IOModel, pairs, kind: str,
                    g_x: Graph | None = None, g_y: Graph | None = None) -> Var:
    """Mean over the dataset of the per-pair loss."""
    if not pairs:
        raise ParameterError("supervised loss over an empty dataset")
    total = None
    for x, y in pairs:
        pred = model.forward(tape, x, g_x, g_y)
        term = _pair_loss(tape, pred, y, kind)
        total = term if total is None else tape.add(total, term)
    return tape.scale(1.0 / len(pairs), total)


def semisup_loss(tape: Tape, model: IOModel, x, y, nodes, kind: str,
                 g_x: Graph | None = None, g_y: Graph | None = None) -> Var:
    """Per-node loss averaged over the listed output rows only."""
    nodes = list(nodes)
    if not nodes:
        raise EmptySelectionError("semi-supervised loss over an empty node set")
    pred = model.forward(tape, x, g_x, g_y)
    return _pair_loss(tape, pred, y, kind, rows=nodes)


def cca_loss(tape: Tape, z_x_prime, z_y, lam: float, p_count: int = 1) -> Var:
    """Squared mismatch plus decorrelation penalties on both views.

    Views are row-stacked over samples; ``p_count`` is the number of
    samples P, so the loss is ||Zx - Zy||_F^2 / P plus
    lambda * (||Zx^T Zx / P - I||_F^2 + ||Zy^T Zy / P - I||_F^2).
    """
    if lam < 0:
        raise ParameterError(f"lambda must be >= 0, got {lam}")
    if p_count < 1:
        raise ParameterError(f"p_count must be >= 1, got {p_count}")
    zx = tape._lift(z_x_prime, "z_x_prime")
    zy = tape._lift(z_y, "z_y")
    if zx.value.shape != zy.value.shape:
        raise ShapeError(
            f"views differ in shape: {zx.value.shape} vs {zy.value.shape}"
        )
    inv_p = 1.0 / float(p_count)
    loss = tape.scale(inv_p, tape.frobenius_sq(tape.sub(zx, zy)))
    if lam > 0:
        eye = np.eye(zx.value.shape[1])
        for z in (zx, zy):
            gram = tape.scale(inv_p, tape.matmul(tape.transpose(z), z))
            dec = tape.frobenius_sq(tape.sub(gram, tape.constant(eye)))
            loss = tape.add(loss, tape.scale(lam, dec))
    return loss


def cca_objective(tape: Tape, model: IOModel, task: CCATask, lam: float) -> Var:
    """Forward every pair, stack the views by rows, apply the CCA loss."""
    views_x, views_y = [], []
    for x, y in task.pairs:
        vx, vy = model.cca_forward(tape, x, y, task.g_x, task.g_y)
        views_x.append(vx)
        views_y.append(vy)
    if len(views_x) == 1:
        zx, zy = views_x[0], views_y[0]
    else:
        zx = tape.concat_rows(views_x)
        zy = tape.concat_rows(views_y)
    return cca_loss(tape, zx, zy, lam, task.p_count)


# --------------------------------------------------------------- optimizers


class SGD:
    """Gradient descent with optional classical momentum."""

    def __init__(self, params: Sequence[Parameter], lr: float,
                 momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.buffers = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p, buf in zip(self.params, self.buffers):
            if self.momentum != 0.0:
                buf *= self.momentum
                buf += p.grad
                p.value -= self.lr * buf
            else:
                p.value -= self.lr * p.grad


class Adam:
    """Standard bias-corrected Adam."""

    def __init__(self, params: Sequence[Parameter], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(params: Sequence[Parameter], config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(params, config.lr, config.momentum)
    return Adam(params, config.lr, config.beta1, config.beta2, config.adam_eps)


def optimizer_step(opt) -> None:
    """Apply one update from the accumulated gradients."""
    opt.step()


# ------------------------------------------------------------ training loop


def _task_losses(model: IOModel, task, lam: float) -> tuple[Var, float]:
    """Fresh-tape train loss node plus the validation loss value."""
    tape = Tape()
    if isinstance(task, SupervisedTask):
        loss = supervised_loss(tape, model, task.pairs, task.kind,
                               task.g_x, task.g_y)
        if task.val_pairs:
            val = supervised_loss(Tape(), model, task.val_pairs, task.kind,
                                  task.g_x, task.g_y).item()
        else:
            val = loss.item()
        return loss, val
    if isinstance(task, SemisupTask):
        loss = semisup_loss(tape, model, task.x, task.y, task.split.train,
                            task.kind, task.g_x, task.g_y)
        if task.split.val:
            val = semisup_loss(Tape(), model, task.x, task.y, task.split.val,
                               task.kind, task.g_x, task.g_y).item()
        else:
            val = loss.item()
        return loss, val
    if isinstance(task, CCATask):
        loss = cca_objective(tape, model, task, lam)
        # No labels exist in this mode; the objective itself is monitored.
        return loss, loss.item()
    raise ConfigError(f"unknown task type {type(task).__name__}")


def _check_mode(model: IOModel, task) -> None:
    if isinstance(task, CCATask) and model.mode != "cca":
        raise ConfigError("cca task requires a cca-mode model")
    if isinstance(task, (SupervisedTask, SemisupTask)) and model.mode != "supervised":
        raise ConfigError(f"{type(task).__name__} requires a supervised-mode model")


def train(model: IOModel, task, config: TrainConfig,
          progress: TextIO | None = None) -> RunReport:
    """Full-batch training with early stopping on the validation loss.

    Deterministic given the model's initialization and the config; the
    parameters corresponding to the best validation loss are restored
    before returning.  With ``progress`` set, one ``epoch,train,val`` line
    per epoch is written to the stream.
    """
    _check_mode(model, task)
    t0 = time.perf_counter()
    params = model.parameters()
    opt = make_optimizer(params, config)
    report = RunReport(seed=config.seed)
    best_val = np.inf
    best_snapshot = None
    since_best = 0
    for epoch in range(config.epochs):
        loss, val = _task_losses(model, task, config.lam)
        train_val = loss.item()
        report.trace.append((epoch, train_val, val))
        if progress is not None:
            progress.write(f"{epoch},{train_val:.17g},{val:.17g}\n")
        if val < best_val:
            best_val = val
            best_snapshot = model.snapshot()
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
        reset_grads(params)
        loss.tape.backward(loss)
        opt.step()
    if best_snapshot is not None:
        model.restore(best_snapshot)
    reset_grads(params)
    report.wall_seconds = time.perf_counter() - t0
    return report


# --------------------------------------------------------------- evaluation


def _metric_value(pred: np.ndarray, target, metric: str, nodes,
                  weights=None) -> float:
    idx = np.asarray(sorted(int(i) for i in nodes), dtype=np.int64)
    if idx.size == 0:
        raise EmptySelectionError("evaluation over an empty node set")
    if metric == "accuracy":
        labels = np.asarray(target, dtype=np.int64).reshape(-1)
        hits = np.argmax(pred[idx], axis=1) == labels[idx]
        return float(np.mean(hits))
    tar = as_array2d(target, "target")
    if pred.shape != tar.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {tar.shape}")
    diff = pred[idx] - tar[idx]
    if metric == "mse":
        return float(np.mean(diff * diff))
    if metric == "weighted_mse":
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != pred.shape[0]:
            raise ShapeError("one weight per node is required")
        if np.any(w[idx] <= 0):
            raise ValidationError("weights must be positive")
        sq = np.sum(diff * diff, axis=1)
        return float(np.sum(w[idx] * sq) / (pred.shape[1] * np.sum(w[idx])))
    raise ConfigError(f"unknown metric {metric!r}")


def evaluate(model: IOModel, task, nodes=None, metric: str = "mse",
             weights=None) -> float:
    """Metric over the designated node set (or over a supervised dataset).

    ``accuracy`` is the fraction of argmax-correct rows, ``mse`` the plain
    per-entry mean, and ``weighted_mse`` the per-node weighted form
    sum_n w_n ||err_n||^2 / (F * sum_n w_n).
    """
    if isinstance(task, SupervisedTask):
        if metric not in ("mse", "accuracy", "weighted_mse"):
            raise ConfigError(f"unknown metric {metric!r}")
        vals = []
        for x, y in task.pairs:
            pred = model.forward(Tape(), x, task.g_x, task.g_y).value
            rows = nodes if nodes is not None else range(pred.shape[0])
            vals.append(_metric_value(pred, y, metric, rows, weights))
        return float(np.mean(vals))
    if isinstance(task, SemisupTask):
        pred = model.forward(Tape(), task.x, task.g_x, task.g_y).value
        rows = nodes if nodes is not None else task.split.test
        return _metric_value(pred, task.y, metric, rows, weights)
    raise ConfigError(f"evaluate does not support {type(task).__name__}")
