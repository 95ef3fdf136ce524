"""End-to-end experiment runners built on the config and training layers.

These encode the package's standard experiment shapes: semi-supervised
prediction across two subgraphs or a coarse/fine grid pair, the two-view
correlation recovery check, and the self-supervised pipeline (correlation
training followed by a small logistic classifier on the embeddings).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .cca import linear_cca, logistic_fit, logistic_predict, sum_correlations
from .config import DataBundle, bundle_from_coarse_fine, bundle_from_subgraph
from .datagen import CoarseFineTask, SSLTask, SubgraphTask, parent_copy_prediction
from .errors import ConfigError
from .graphs import NodeMap, induced_subgraph
from .layers import GNNStack, LayerSpec
from .model import IOModel
from .training import (
    CCATask,
    SemisupTask,
    TrainConfig,
    evaluate,
    train,
)
from .transforms import (
    CopyCommonTransform,
    IdentityTransform,
    LinearNodeTransform,
    SelectionKnnTransform,
    TransposeTransform,
)

ARCHS = ("gcn", "mlp")


def _enc_specs(kind: str, widths: list[int], activation: str,
               final_activation: str) -> list[LayerSpec]:
    specs = []
    for i, (fin, fout) in enumerate(zip(widths, widths[1:])):
        act = final_activation if i == len(widths) - 2 else activation
        specs.append(LayerSpec(kind, fin, fout, activation=act))
    return specs


def build_io_model(arch: str, transform_kind: str, bundle: DataBundle,
                   cfg: TrainConfig, out_features: int,
                   final_activation: str = "identity",
                   mode: str = "supervised", knn_k: int = 2) -> IOModel:
    """IOGCN / IOMLP with a configurable latent transform.

    The encoder keeps its hidden width except under the transpose
    transform, which forces the encoder output width to N_y (and the
    decoder input width to N_x).
    """
    if arch not in ARCHS:
        raise ConfigError(f"unknown architecture {arch!r}; expected gcn or mlp")
    kind = "gcn" if arch == "gcn" else "dense"
    dims = bundle.dims
    n_x, n_y = dims.get("n_x"), dims.get("n_y")
    f_x = dims["f_x"]
    h = cfg.hidden
    act = cfg.activation

    if transform_kind == "transpose":
        z_x_width, z_y_width = n_y, n_x
        transform = TransposeTransform()
    elif transform_kind == "linear_node":
        z_x_width = z_y_width = h
        transform = LinearNodeTransform(n_x, n_y, seed=cfg.seed + 2)
    elif transform_kind == "copy_common":
        if bundle.node_map is None:
            raise ConfigError("copy_common needs a dataset node correspondence")
        z_x_width = z_y_width = h
        transform = CopyCommonTransform(bundle.node_map, n_x, n_y)
    elif transform_kind == "selection_knn":
        if bundle.coords_x is None or bundle.coords_y is None:
            raise ConfigError("selection_knn needs node coordinates")
        z_x_width = z_y_width = h
        transform = SelectionKnnTransform(bundle.coords_x, bundle.coords_y,
                                          k=knn_k)
    elif transform_kind == "identity":
        z_x_width = z_y_width = h
        transform = IdentityTransform()
    else:
        raise ConfigError(f"unsupported transform {transform_kind!r} here")

    x_widths = [f_x] + [h] * (cfg.depth - 1) + [z_x_width]
    y_widths = [z_y_width] + [h] * (cfg.depth - 1) + [out_features]
    psi_x = GNNStack(_enc_specs(kind, x_widths, act, act), seed=cfg.seed,
                     name="psi_x")
    psi_y = GNNStack(_enc_specs(kind, y_widths, act, final_activation),
                     seed=cfg.seed + 1, name="psi_y")
    return IOModel(psi_x, transform, psi_y, mode=mode)


# ------------------------------------------------- semi-supervised runners


@dataclass
class SemisupOutcome:
    metric: float
    report: object
    model: IOModel


def run_subgraph_experiment(task: SubgraphTask, arch: str,
                            transform_kind: str, cfg: TrainConfig
                            ) -> SemisupOutcome:
    """Train on the output subgraph's train nodes; report test accuracy."""
    bundle = bundle_from_subgraph(task)
    model = build_io_model(arch, transform_kind, bundle, cfg,
                           out_features=task.n_classes)
    sem = SemisupTask(task.x, task.labels, task.split, kind="cross_entropy",
                      g_x=task.g_x, g_y=task.g_y)
    report = train(model, sem, cfg)
    acc = evaluate(model, sem, metric="accuracy")
    return SemisupOutcome(acc, report, model)


def run_coarse_fine_experiment(task: CoarseFineTask, arch: str,
                               transform_kind: str, cfg: TrainConfig
                               ) -> SemisupOutcome:
    """Train the interpolator; report weighted MSE over the test nodes."""
    bundle = bundle_from_coarse_fine(task)
    model = build_io_model(arch, transform_kind, bundle, cfg,
                           out_features=task.y.cols)
    sem = SemisupTask(task.x, task.y, task.split, kind="mse",
                      g_x=task.g_coarse, g_y=task.g_fine)
    report = train(model, sem, cfg)
    wmse = evaluate(model, sem, metric="weighted_mse", weights=task.weights)
    return SemisupOutcome(wmse, report, model)


def coarse_fine_baseline_wmse(task: CoarseFineTask) -> float:
    """Weighted MSE of the copy-the-parent dummy over the test nodes."""
    pred = parent_copy_prediction(task).data
    idx = np.asarray(task.split.test, dtype=np.int64)
    diff = pred[idx] - task.y.data[idx]
    w = task.weights[idx]
    return float(np.sum(w * np.sum(diff * diff, axis=1))
                 / (task.y.cols * np.sum(w)))


# ------------------------------------------------------- two-view recovery


@dataclass
class RecoveryOutcome:
    oracle_sum: float
    learned_sum: float
    lam: float

    @property
    def ratio(self) -> float:
        return self.learned_sum / self.oracle_sum


def run_cca_recovery(xs, ys, n_z: int, lam: float, cfg: TrainConfig,
                     embed_dim: int | None = None) -> RecoveryOutcome:
    """Train linear encoders with the soft objective; score them against
    the closed-form oracle's total correlation on the raw views.

    The embedding is deliberately wider than n_z (2x by default).  The soft
    objective slowly shrinks weakly correlated embedding directions (their
    mismatch cost outweighs the lambda-weighted decorrelation penalty), and
    the spare width keeps the top n_z canonical directions intact while
    that happens; the oracle then reads the top n_z correlations off the
    learned views.
    """
    oracle = sum_correlations(linear_cca(xs, ys, n_z))
    k = embed_dim if embed_dim is not None else 2 * n_z
    f_x, f_y = np.asarray(xs).shape[1], np.asarray(ys).shape[1]
    p = np.asarray(xs).shape[0]
    psi_x = GNNStack([LayerSpec("dense", f_x, k, bias=True)],
                     seed=cfg.seed, name="psi_x")
    psi_y = GNNStack([LayerSpec("dense", f_y, k, bias=True)],
                     seed=cfg.seed + 1, name="psi_y")
    model = IOModel(psi_x, IdentityTransform(), psi_y, mode="cca")
    task = CCATask([(xs, ys)], sample_count=p)
    run_cfg = TrainConfig(epochs=cfg.epochs, lr=cfg.lr, optimizer=cfg.optimizer,
                          lam=lam, patience=cfg.patience, seed=cfg.seed)
    train(model, task, run_cfg)
    vx, vy = model.cca_forward(Tape(), xs, ys)
    learned = sum_correlations(linear_cca(vx.value, vy.value, n_z))
    return RecoveryOutcome(oracle, learned, lam)


# --------------------------------------------------------- SSL pipeline


@dataclass
class SSLOutcome:
    accuracy: float  # classifier on the trained embeddings
    accuracy_raw: float  # classifier on raw subgraph features
    report: object


def run_ssl_pipeline(task: SSLTask, cfg: TrainConfig, embed_dim: int = 16,
                     label_budget: int | None = None,
                     corrupted_second_view: bool = False) -> SSLOutcome:
    """Correlation training on two views, then logistic probing.

    The first view encodes the corrupted graph and is row-selected onto the
    subgraph nodes; the second encodes the clean subgraph, and its output
    is what the downstream classifier consumes, so corruption of the first
    view degrades the embeddings only through training.

    With ``corrupted_second_view`` the clean inputs are replaced by
    corrupted stand-ins (the subgraph induced from the corrupted graph,
    carrying the corrupted features) and the classifier consumes the
    selected first-view rows instead; this is the setting of augmentation
    methods that cannot use an error-free subgraph, and at zero corruption
    it coincides with the full pipeline.
    """
    selected = list(task.c.selected)
    n, n_s = task.g_prime.n, task.g_s.n
    f = task.x_prime.cols
    if corrupted_second_view:
        g_y = induced_subgraph(task.g_prime, selected)
        y = task.c.apply(task.x_prime)
    else:
        g_y = task.g_s
        y = task.y_s

    h = cfg.hidden
    psi_x = GNNStack(_enc_specs("gcn", [f, h, embed_dim], cfg.activation,
                                "identity"), seed=cfg.seed, name="psi_x")
    psi_y = GNNStack(_enc_specs("gcn", [f, h, embed_dim], cfg.activation,
                                "identity"), seed=cfg.seed + 1, name="psi_y")
    selector = CopyCommonTransform(
        NodeMap([(p, i) for i, p in enumerate(selected)]), n, n_s)
    model = IOModel(psi_x, selector, psi_y, mode="cca")
    cca_task = CCATask([(task.x_prime, y)], g_x=task.g_prime, g_y=g_y)
    report = train(model, cca_task, cfg)

    vx, vy = model.cca_forward(Tape(), task.x_prime, y, task.g_prime, g_y)
    embeddings = vx.value if corrupted_second_view else vy.value

    train_nodes = list(task.split.train)
    if label_budget is not None:
        if label_budget > len(train_nodes):
            raise ConfigError(
                f"label budget {label_budget} exceeds the {len(train_nodes)} "
                f"train nodes"
            )
        rng = np.random.default_rng(cfg.seed)
        train_nodes = sorted(rng.choice(train_nodes, size=label_budget,
                                        replace=False).tolist())
    test_nodes = list(task.split.test)

    probe_cfg = TrainConfig(epochs=200, lr=5e-2, seed=cfg.seed)
    acc = _probe_accuracy(embeddings, task.labels, train_nodes, test_nodes,
                          probe_cfg)
    acc_raw = _probe_accuracy(task.y_s.data, task.labels, train_nodes,
                              test_nodes, probe_cfg)
    return SSLOutcome(acc, acc_raw, report)


def _probe_accuracy(features, labels, train_nodes, test_nodes,
                    cfg: TrainConfig) -> float:
    feats = np.asarray(features, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    clf = logistic_fit(feats[train_nodes], labs[train_nodes], cfg)
    pred = logistic_predict(clf, feats[test_nodes])
    return float(np.mean(pred == labs[test_nodes]))
