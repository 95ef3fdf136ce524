"""Command-line interface: generate, train, eval, ssl, gradcheck.

One JSON config file drives every command; the ``--seed`` and ``--out``
flags override the config's seed and output directory.  Exit codes: 0
success, 1 configuration/validation error, 2 I/O or parse error, 3
numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import dataio
from .autodiff import Tape, grad_check
from .config import (
    DataBundle,
    build_data,
    build_model,
    build_task,
    build_train_config,
)
from .datagen import SSLTask, gen_ssl_task
from .errors import (
    ConfigError,
    NumericError,
    ParameterError,
    ParseError,
    ShapeError,
    TwoGraphError,
    ValidationError,
)
from .pipeline import run_ssl_pipeline
from .training import (
    CCATask,
    SemisupTask,
    SupervisedTask,
    cca_objective,
    evaluate,
    semisup_loss,
    supervised_loss,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON ({e})")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return cfg


def _prepare(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out_dir"] = args.out
    cfg.setdefault("seed", 0)
    cfg.setdefault("out_dir", "out")
    return cfg

def _outdir(cfg: dict) -> str:
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


# ----------------------------------------------------------------- generate


def cmd_generate(cfg: dict, args) -> int:
    cfg = _prepare(cfg, args)
    out = _outdir(cfg)
    bundle = build_data(cfg.get("data"), cfg["seed"])
    written = []

    def emit(name, writer, *wargs):
        path = os.path.join(out, name)
        writer(*wargs, path)
        written.append(path)

    if bundle.g_x is not None:
        emit("graph_x.edges", dataio.save_edge_list, bundle.g_x)
    if bundle.g_y is not None:
        emit("graph_y.edges", dataio.save_edge_list, bundle.g_y)
    if bundle.x is not None:
        emit("x.csv", dataio.save_matrix_csv, bundle.x)
    if bundle.y is not None:
        emit("y.csv", dataio.save_matrix_csv, bundle.y)
    if bundle.pairs is not None and bundle.x is None:
        xs, ys = bundle.pairs[0]
        emit("x.csv", dataio.save_matrix_csv, xs)
        emit("y.csv", dataio.save_matrix_csv, ys)
    if bundle.labels is not None:
        emit("labels.csv", dataio.save_labels_csv, bundle.labels)
    if bundle.split is not None:
        emit("split.csv", dataio.save_split_csv, bundle.split)
    if bundle.weights is not None:
        emit("weights.csv", dataio.save_matrix_csv,
             bundle.weights.reshape(-1, 1))
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# -------------------------------------------------------------------- train


def _dry_run_check(model, task) -> None:
    """Build one loss term to force the full shape chain, without training."""
    tape = Tape()
    if isinstance(task, SemisupTask):
        semisup_loss(tape, model, task.x, task.y, task.split.train, task.kind,
                     task.g_x, task.g_y)
    elif isinstance(task, SupervisedTask):
        supervised_loss(tape, model, task.pairs[:1], task.kind, task.g_x,
                        task.g_y)
    elif isinstance(task, CCATask):
        cca_objective(tape, model, task, lam=0.0)


def cmd_train(cfg: dict, args) -> int:
    cfg = _prepare(cfg, args)
    out = _outdir(cfg)
    bundle = build_data(cfg.get("data"), cfg["seed"])
    train_cfg = build_train_config(cfg.get("train"), seed=cfg["seed"])
    model = build_model(cfg.get("model"), bundle, seed=cfg["seed"])
    task = build_task(cfg.get("task"), bundle, train_cfg)
    _dry_run_check(model, task)
    if args.dry_run:
        print("dry run ok: configuration and shape chain are valid")
        return EXIT_OK
    report = train(model, task, train_cfg, progress=sys.stdout)
    ck_path = os.path.join(out, "checkpoint.json")
    dataio.save_checkpoint(model, ck_path, bundle.g_x, bundle.g_y)
    trace_path = os.path.join(out, "trace.csv")
    dataio.save_metrics_csv(report, trace_path)
    final_val = report.trace[-1][2] if report.trace else float("nan")
    print(f"final_val_loss={final_val:.17g}")
    print(f"wrote {ck_path}")
    print(f"wrote {trace_path}")
    return EXIT_OK


# --------------------------------------------------------------------- eval


def cmd_eval(cfg: dict, args) -> int:
    cfg = _prepare(cfg, args)
    out = _outdir(cfg)
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint <path>")
    bundle = build_data(cfg.get("data"), cfg["seed"])
    meta = dataio.load_checkpoint_meta(args.checkpoint)
    dataio.validate_fingerprint(meta, bundle.g_x, bundle.g_y)
    model = dataio.load_checkpoint(args.checkpoint)
    train_cfg = build_train_config(cfg.get("train"), seed=cfg["seed"])
    task = build_task(cfg.get("task"), bundle, train_cfg)
    eval_cfg = cfg.get("eval", {})
    metric = eval_cfg.get("metric", "mse")
    nodes = None
    if isinstance(task, SemisupTask):
        which = eval_cfg.get("nodes", "test")
        if which == "all":
            nodes = range(np.asarray(task.y).shape[0]) \
                if task.kind == "mse" else range(len(np.asarray(task.y)))
        elif which in ("train", "val", "test"):
            nodes = getattr(task.split, which)
        else:
            raise ConfigError(f"unknown eval node set {which!r}")
    value = evaluate(model, task, nodes=nodes, metric=metric,
                     weights=bundle.weights)
    print(f"metric={value:.17g}")
    sweep_path = os.path.join(out, "metrics.csv")
    dataio.append_sweep_row(sweep_path, cfg.get("run_name", "eval"),
                            cfg["seed"], metric, value)
    return EXIT_OK


# ---------------------------------------------------------------------- ssl


def _ssl_cell(params: tuple) -> tuple:
    """One (ratio, seed) cell of the sweep; used by the worker pool."""
    ssl_cfg, train_cfg_dict, ratio, seed = params
    parent = dict(ssl_cfg.get("parent") or {})
    parent.setdefault("seed", seed)
    task = gen_ssl_task(
        parent=parent, drop_ratio=ratio, mask_ratio=ratio,
        node_ratio=ssl_cfg.get("node_ratio", 0.7), seed=seed,
        feature_noise_sd=ssl_cfg.get("feature_noise_sd", 3.5),
        feature_cols=ssl_cfg.get("feature_cols", 16))
    cfg = build_train_config(train_cfg_dict, seed=seed)
    budget = ssl_cfg.get("label_budget")
    out_full = run_ssl_pipeline(task, cfg,
                                embed_dim=ssl_cfg.get("embed_dim", 16),
                                label_budget=budget)
    out_abl = run_ssl_pipeline(task, cfg,
                               embed_dim=ssl_cfg.get("embed_dim", 16),
                               label_budget=budget,
                               corrupted_second_view=True)
    return (ratio, seed, out_full.accuracy, out_abl.accuracy,
            out_full.accuracy_raw)


def cmd_ssl(cfg: dict, args) -> int:
    cfg = _prepare(cfg, args)
    out = _outdir(cfg)
    ssl_cfg = cfg.get("ssl") or {}
    ratios = ssl_cfg.get("ratios", [0.0, 0.3, 0.6, 0.9])
    n_seeds = int(ssl_cfg.get("n_seeds", 1))
    base_seed = cfg["seed"]
    train_cfg_dict = dict(cfg.get("train") or {})
    train_cfg_dict.setdefault("lam", 1.0)
    cells = [(ssl_cfg, train_cfg_dict, float(r), base_seed + i)
             for r in ratios for i in range(n_seeds)]
    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_ssl_cell, cells))
    else:
        results = [_ssl_cell(c) for c in cells]
    results.sort(key=lambda t: (t[0], t[1]))
    sweep_path = os.path.join(out, "ssl_sweep.csv")
    if os.path.exists(sweep_path):
        os.remove(sweep_path)
    for ratio, seed, acc, acc_abl, acc_raw in results:
        run = f"r{ratio:g}"
        dataio.append_sweep_row(sweep_path, run, seed, "accuracy", acc)
        dataio.append_sweep_row(sweep_path, run, seed, "accuracy_ablation",
                                acc_abl)
        dataio.append_sweep_row(sweep_path, run, seed, "accuracy_raw", acc_raw)
    for ratio in ratios:
        accs = [a for r, _, a, _, _ in results if r == float(ratio)]
        print(f"ratio={ratio:g} mean_accuracy={np.mean(accs):.17g}")
    print(f"wrote {sweep_path}")
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(cfg: dict, args) -> int:
    cfg = _prepare(cfg, args)
    bundle = build_data(cfg.get("data"), cfg["seed"])
    train_cfg = build_train_config(cfg.get("train"), seed=cfg["seed"])
    model = build_model(cfg.get("model"), bundle, seed=cfg["seed"])
    task = build_task(cfg.get("task"), bundle, train_cfg)

    def loss():
        tape = Tape()
        if isinstance(task, SemisupTask):
            return semisup_loss(tape, model, task.x, task.y, task.split.train,
                                task.kind, task.g_x, task.g_y)
        if isinstance(task, SupervisedTask):
            return supervised_loss(tape, model, task.pairs, task.kind,
                                   task.g_x, task.g_y)
        return cca_objective(tape, model, task, train_cfg.lam)

    err = grad_check(loss, model.parameters())
    print(f"max_relative_error={err:.17g}")
    return EXIT_OK if err < 1e-4 else EXIT_NUMERIC


# --------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twograph",
        description="Train and evaluate neural mappings between signals "
                    "living on two different graphs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("generate", cmd_generate), ("train", cmd_train),
                     ("eval", cmd_eval), ("ssl", cmd_ssl),
                     ("gradcheck", cmd_gradcheck)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None,
                       help="override the config output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for sweeps")
        p.add_argument("--dry-run", action="store_true",
                       help="validate configuration and shapes, then exit")
        if name == "eval":
            p.add_argument("--checkpoint", default=None,
                           help="checkpoint file to evaluate")
        p.set_defaults(fn=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.fn(cfg, args)
    except (ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValidationError, ShapeError, ParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except TwoGraphError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
