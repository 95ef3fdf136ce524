"""Build datasets, models, and tasks from JSON-style configuration dicts.

Configs may reference dataset-dependent dimensions symbolically: any string
value starting with ``$`` (e.g. ``"$n_y"``, ``"$n_classes"``) is resolved
against the dimensions published by the data bundle, so a config written
before generation can still size its layers correctly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Matrix
from .dataio import (
    load_edge_list,
    load_labels_csv,
    load_matrix_csv,
    load_split_csv,
)
from .datagen import (
    CoarseFineTask,
    SSLTask,
    SubgraphTask,
    TwoViewDataset,
    gen_coarse_fine_task,
    gen_graph,
    gen_ssl_task,
    gen_subgraph_task,
    gen_two_view_cca,
)
from .errors import ConfigError
from .graphs import Graph, NodeMap, common_node_map
from .layers import GNNStack, LayerSpec
from .model import IOModel
from .training import (
    CCATask,
    NodeSplit,
    SemisupTask,
    SupervisedTask,
    TrainConfig,
)
from .transforms import transform_from_spec


@dataclass
class DataBundle:
    """Everything a command needs to know about its dataset."""

    dims: dict = field(default_factory=dict)
    g_x: Graph | None = None
    g_y: Graph | None = None
    x: Matrix | None = None
    y: Matrix | None = None
    labels: np.ndarray | None = None
    split: NodeSplit | None = None
    weights: np.ndarray | None = None
    node_map: NodeMap | None = None
    coords_x: np.ndarray | None = None
    coords_y: np.ndarray | None = None
    source: object = None  # the underlying generated task, if any
    pairs: list | None = None  # cca view pairs
    sample_count: int | None = None


def resolve_dims(value, dims: dict):
    """Recursively substitute ``$name`` strings with dataset dimensions."""
    if isinstance(value, str) and value.startswith("$"):
        key = value[1:]
        if key not in dims or dims[key] is None:
            raise ConfigError(
                f"symbol ${key} is not defined by this dataset "
                f"(available: {sorted(k for k, v in dims.items() if v is not None)})"
            )
        return dims[key]
    if isinstance(value, dict):
        return {k: resolve_dims(v, dims) for k, v in value.items()}
    if isinstance(value, list):
        return [resolve_dims(v, dims) for v in value]
    return value


# ------------------------------------------------------------------ dataset


def build_data(data_cfg: dict, seed: int) -> DataBundle:
    if not isinstance(data_cfg, dict):
        raise ConfigError("config needs a 'data' object")
    cfg = dict(data_cfg)
    if "generator" in cfg:
        return _build_generated(cfg, seed)
    if any(k in cfg for k in ("graph_x", "x")):
        return _build_from_files(cfg)
    raise ConfigError("data section needs either 'generator' or file paths")


_GENERATORS = ("subgraph_task", "coarse_fine", "two_view_cca", "ssl_task",
               "graph")


def _build_generated(cfg: dict, seed: int) -> DataBundle:
    name = cfg.pop("generator")
    cfg.setdefault("seed", seed)
    if name == "subgraph_task":
        task = gen_subgraph_task(**cfg)
        return bundle_from_subgraph(task)
    if name == "coarse_fine":
        task = gen_coarse_fine_task(**cfg)
        return bundle_from_coarse_fine(task)
    if name == "two_view_cca":
        ds, _, _ = gen_two_view_cca(**cfg)
        return bundle_from_two_view(ds)
    if name == "ssl_task":
        task = gen_ssl_task(**cfg)
        return bundle_from_ssl(task)
    if name == "graph":
        out = gen_graph(cfg.pop("kind", "sbm"), **cfg)
        dims = {"n_x": out.graph.n}
        return DataBundle(dims=dims, g_x=out.graph, source=out,
                          labels=out.communities, coords_x=out.coords)
    raise ConfigError(
        f"unknown generator {name!r}; valid names: {', '.join(_GENERATORS)}"
    )


def bundle_from_subgraph(task: SubgraphTask) -> DataBundle:
    dims = {"n_x": task.g_x.n, "n_y": task.g_y.n, "f_x": task.x.cols,
            "n_classes": task.n_classes, "f_y": task.n_classes}
    return DataBundle(dims=dims, g_x=task.g_x, g_y=task.g_y, x=task.x,
                      labels=task.labels, split=task.split,
                      node_map=common_node_map(task.map_x, task.map_y),
                      source=task)


def bundle_from_coarse_fine(task: CoarseFineTask) -> DataBundle:
    dims = {"n_x": task.g_coarse.n, "n_y": task.g_fine.n, "f_x": task.x.cols,
            "f_y": task.y.cols}
    return DataBundle(dims=dims, g_x=task.g_coarse, g_y=task.g_fine, x=task.x,
                      y=task.y, split=task.split, weights=task.weights,
                      coords_x=task.coords_coarse, coords_y=task.coords_fine,
                      source=task)


def bundle_from_two_view(ds: TwoViewDataset) -> DataBundle:
    dims = {"f_x": ds.xs.cols, "f_y": ds.ys.cols, "latent_dim": ds.latent_dim}
    return DataBundle(dims=dims, pairs=[(ds.xs, ds.ys)],
                      sample_count=ds.p_count, source=ds)


def bundle_from_ssl(task: SSLTask) -> DataBundle:
    dims = {"n_x": task.g_prime.n, "n_y": task.g_s.n, "f_x": task.x_prime.cols,
            "f_y": task.y_s.cols, "n_classes": task.n_classes}
    node_map = NodeMap([(p, i) for i, p in enumerate(task.c.selected)])
    return DataBundle(dims=dims, g_x=task.g_prime, g_y=task.g_s,
                      x=task.x_prime, y=task.y_s, labels=task.labels,
                      split=task.split, node_map=node_map, source=task)


def _build_from_files(cfg: dict) -> DataBundle:
    bundle = DataBundle()
    if "graph_x" in cfg:
        bundle.g_x = load_edge_list(cfg["graph_x"])
        bundle.dims["n_x"] = bundle.g_x.n
    if "graph_y" in cfg:
        bundle.g_y = load_edge_list(cfg["graph_y"])
        bundle.dims["n_y"] = bundle.g_y.n
    if "x" in cfg:
        bundle.x = load_matrix_csv(cfg["x"])
        bundle.dims["f_x"] = bundle.x.cols
    if "y" in cfg:
        bundle.y = load_matrix_csv(cfg["y"])
        bundle.dims["f_y"] = bundle.y.cols
    if "labels" in cfg:
        bundle.labels = load_labels_csv(cfg["labels"])
        bundle.dims["n_classes"] = int(bundle.labels.max()) + 1
        bundle.dims["f_y"] = bundle.dims["n_classes"]
    if "split" in cfg:
        bundle.split = load_split_csv(cfg["split"])
    if "weights" in cfg:
        bundle.weights = load_matrix_csv(cfg["weights"]).data.reshape(-1)
    return bundle


# -------------------------------------------------------------------- model


def build_stack(cfg: dict, dims: dict, name: str, seed: int) -> GNNStack:
    cfg = resolve_dims(cfg or {}, dims)
    specs = [
        LayerSpec(d["kind"], int(d["in"]), int(d["out"]),
                  activation=d.get("activation", "identity"),
                  bias=d.get("bias"), order=int(d.get("order", 1)))
        for d in cfg.get("layers", [])
    ]
    return GNNStack(specs, seed=seed, gso_kind=cfg.get("gso_kind", "adjacency"),
                    name=name)


def build_transform(cfg: dict, dims: dict, bundle: DataBundle, seed: int):
    cfg = resolve_dims(dict(cfg or {"kind": "identity"}), dims)
    kind = cfg.get("kind")
    if kind == "copy_common":
        # the node correspondence comes from the dataset, not the config
        if bundle.node_map is None:
            raise ConfigError("copy_common needs a dataset with a node map")
        cfg.setdefault("pairs", [list(p) for p in bundle.node_map.pairs])
        cfg.setdefault("n_in", dims.get("n_x"))
        cfg.setdefault("n_out", dims.get("n_y"))
    if kind == "selection_knn":
        if bundle.coords_x is None or bundle.coords_y is None:
            raise ConfigError("selection_knn needs node coordinates")
        cfg.setdefault("coords_in", bundle.coords_x.tolist())
        cfg.setdefault("coords_out", bundle.coords_y.tolist())
        cfg.setdefault("k", 2)
    return transform_from_spec(cfg, seed=seed)


def build_model(model_cfg: dict, bundle: DataBundle, seed: int) -> IOModel:
    if not isinstance(model_cfg, dict):
        raise ConfigError("config needs a 'model' object")
    dims = bundle.dims
    psi_x = build_stack(model_cfg.get("psi_x"), dims, "psi_x", seed)
    psi_y = build_stack(model_cfg.get("psi_y"), dims, "psi_y", seed + 1)
    psi_z = build_transform(model_cfg.get("transform"), dims, bundle, seed + 2)
    return IOModel(psi_x, psi_z, psi_y,
                   mode=model_cfg.get("mode", "supervised"),
                   transform_side=model_cfg.get("transform_side", "x"),
                   symmetric_codes=model_cfg.get("symmetric_codes", False))


def build_train_config(train_cfg: dict | None, seed: int | None = None
                       ) -> TrainConfig:
    cfg = dict(train_cfg or {})
    if "lambda" in cfg:
        cfg["lam"] = cfg.pop("lambda")
    if seed is not None:
        cfg["seed"] = seed
    try:
        return TrainConfig(**cfg)
    except TypeError as e:
        raise ConfigError(f"bad train section: {e}") from e


# -------------------------------------------------------------------- tasks


def build_task(task_cfg: dict, bundle: DataBundle, train_cfg: TrainConfig):
    if not isinstance(task_cfg, dict) or "kind" not in task_cfg:
        raise ConfigError("config needs a 'task' object with a 'kind'")
    kind = task_cfg["kind"]
    loss = task_cfg.get("loss", "mse")
    if kind == "semisup":
        target = bundle.labels if loss == "cross_entropy" else bundle.y
        if bundle.x is None or target is None or bundle.split is None:
            raise ConfigError("semisup task needs x, targets, and a split")
        return SemisupTask(bundle.x, target, bundle.split, kind=loss,
                           g_x=bundle.g_x, g_y=bundle.g_y)
    if kind == "supervised":
        target = bundle.labels if loss == "cross_entropy" else bundle.y
        if bundle.pairs is not None:
            pairs = bundle.pairs
        elif bundle.x is not None and target is not None:
            pairs = [(bundle.x, target)]
        else:
            raise ConfigError("supervised task needs paired inputs and targets")
        return SupervisedTask(pairs, kind=loss, g_x=bundle.g_x, g_y=bundle.g_y)
    if kind == "cca":
        if bundle.pairs is not None:
            pairs = bundle.pairs
        elif bundle.x is not None and bundle.y is not None:
            pairs = [(bundle.x, bundle.y)]
        else:
            raise ConfigError("cca task needs two views")
        return CCATask(pairs, sample_count=bundle.sample_count,
                       g_x=bundle.g_x, g_y=bundle.g_y)
    raise ConfigError(f"unknown task kind {kind!r}")
