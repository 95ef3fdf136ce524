"""File ingestion and serialization: graphs, signals, checkpoints, metrics.

Text formats only.  Edge lists are whitespace-separated ``u v w`` lines
(weight optional) with ``#`` comments and an optional ``n=<N>`` header;
matrices and labels are plain CSV.  Checkpoints are JSON documents whose
floats round-trip bit-exactly.  Metric CSVs print 17 significant digits,
which is lossless for 64-bit values.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .autodiff import Matrix, as_array2d
from .errors import ParseError, ValidationError
from .graphs import Graph
from .layers import stack_describe, stack_from_spec
from .model import IOModel
from .training import NodeSplit, RunReport
from .transforms import transform_from_spec

CHECKPOINT_VERSION = 1

_F = "{:.17g}"


# ------------------------------------------------------------------ loaders


def load_edge_list(path: str) -> Graph:
    """Parse a text edge list into a validated Graph.

    Node count defaults to 1 + max node id unless an ``n=<N>`` line is
    present.  Malformed lines report their line number; duplicate
    undirected edges are rejected.
    """
    entries = []
    declared_n = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("n="):
                try:
                    declared_n = int(line[2:].strip())
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad node count {line!r}")
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ParseError(
                    f"{path}:{lineno}: expected 'u v [w]', got {line!r}"
                )
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric field in {line!r}")
            entries.append((u, v, w))
    if declared_n is None:
        if not entries:
            raise ParseError(f"{path}: empty edge list and no n=<N> header")
        declared_n = 1 + max(max(u, v) for u, v, _ in entries)
    return Graph(declared_n, entries)


def load_matrix_csv(path: str) -> Matrix:
    """Comma-separated numeric rows of uniform width."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"{path}:{lineno}: ragged row ({len(cells)} cells, "
                    f"expected {width})"
                )
            parsed = []
            for col, cell in enumerate(cells):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"{path}:{lineno}: non-numeric cell at column {col + 1}: "
                        f"{cell!r}"
                    )
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return Matrix(rows)


def load_labels_csv(path: str) -> np.ndarray:
    """One integer label per line."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer label {line!r}")
    if not labels:
        raise ParseError(f"{path}: empty label file")
    return np.asarray(labels, dtype=np.int64)


def load_split_csv(path: str) -> NodeSplit:
    """Rows of ``node,set`` with set in train/val/test."""
    parts: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("node,"):
                continue
            cells = line.split(",")
            if len(cells) != 2 or cells[1] not in parts:
                raise ParseError(f"{path}:{lineno}: expected 'node,set', got {line!r}")
            try:
                parts[cells[1]].append(int(cells[0]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer node {cells[0]!r}")
    return NodeSplit(parts["train"], parts["val"], parts["test"])


# ------------------------------------------------------------------- savers


def save_edge_list(g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"n={g.n}\n")
        for u, v, w in g.edges:
            fh.write(f"{u} {v} {_F.format(w)}\n")


def save_matrix_csv(m, path: str) -> None:
    arr = as_array2d(m, "matrix")
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(",".join(_F.format(v) for v in row) + "\n")


def save_labels_csv(labels, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(labels).reshape(-1):
            fh.write(f"{int(v)}\n")


def save_split_csv(split: NodeSplit, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("node,set\n")
        for name in ("train", "val", "test"):
            for node in getattr(split, name):
                fh.write(f"{node},{name}\n")


def save_metrics_csv(report: RunReport, path: str) -> None:
    """Per-epoch trace: header then one row per epoch, 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, train, val in report.trace:
            fh.write(f"{epoch},{_F.format(train)},{_F.format(val)}\n")


def append_sweep_row(path: str, run: str, seed: int, metric: str,
                     value: float) -> None:
    """Append one ``run,seed,metric,value`` row, writing the header once."""
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write("run,seed,metric,value\n")
        fh.write(f"{run},{seed},{metric},{_F.format(value)}\n")


# -------------------------------------------------------------- checkpoints


def _fingerprint(g: Graph | None) -> dict | None:
    if g is None:
        return None
    return {"n": g.n, "edges": g.num_edges}


def save_checkpoint(model: IOModel, path: str, g_x: Graph | None = None,
                    g_y: Graph | None = None) -> None:
    """Write the model topology and all parameter values as JSON."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model": {
            "mode": model.mode,
            "transform_side": model.transform_side,
            "symmetric_codes": model.symmetric_codes,
            "psi_x": stack_describe(model.psi_x),
            "transform": model.psi_z.describe(),
            "psi_y": stack_describe(model.psi_y),
            "graph_x": _fingerprint(g_x),
            "graph_y": _fingerprint(g_y),
        },
        "parameters": [
            {"name": p.name, "rows": p.value.shape[0], "cols": p.value.shape[1],
             "values": p.value.reshape(-1).tolist()}
            for p in _all_parameters(model)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _all_parameters(model: IOModel):
    """Every parameter, including frozen transform factors."""
    params = list(model.psi_x.parameters())
    psi_z = model.psi_z
    if hasattr(psi_z, "w_x") and hasattr(psi_z, "w_y"):
        params.extend([psi_z.w_x, psi_z.w_y])
    else:
        params.extend(psi_z.parameters())
    params.extend(model.psi_y.parameters())
    return params


def load_checkpoint_meta(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid checkpoint JSON ({e})") from e
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParseError(f"{path}: not a checkpoint document")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise ValidationError(
            f"unsupported checkpoint version {doc['format_version']}; "
            f"this build reads version {CHECKPOINT_VERSION}"
        )
    return doc


def load_checkpoint(path: str) -> IOModel:
    """Rebuild a model whose forward outputs match the saved one bit-exactly."""
    doc = load_checkpoint_meta(path)
    meta = doc["model"]
    psi_x = stack_from_spec(meta["psi_x"], name="psi_x")
    psi_y = stack_from_spec(meta["psi_y"], name="psi_y")
    psi_z = transform_from_spec(meta["transform"])
    model = IOModel(psi_x, psi_z, psi_y, mode=meta["mode"],
                    transform_side=meta.get("transform_side", "x"),
                    symmetric_codes=meta.get("symmetric_codes", False))
    by_name = {p.name: p for p in _all_parameters(model)}
    seen = set()
    for rec in doc["parameters"]:
        name = rec["name"]
        if name not in by_name:
            raise ValidationError(f"checkpoint parameter {name!r} not in topology")
        p = by_name[name]
        rows, cols = int(rec["rows"]), int(rec["cols"])
        vals = np.asarray(rec["values"], dtype=np.float64)
        if vals.size != rows * cols or p.value.shape != (rows, cols):
            raise ValidationError(
                f"checkpoint parameter {name!r} has shape {rows}x{cols}, "
                f"topology expects {p.value.shape[0]}x{p.value.shape[1]}"
            )
        p.value[:] = vals.reshape(rows, cols)
        seen.add(name)
    missing = set(by_name) - seen
    if missing:
        raise ValidationError(f"checkpoint is missing parameters: {sorted(missing)}")
    return model


def validate_fingerprint(meta: dict, g_x: Graph | None, g_y: Graph | None) -> None:
    """Cheap topology guard: node and edge counts must match the checkpoint."""
    for key, g in (("graph_x", g_x), ("graph_y", g_y)):
        fp = meta["model"].get(key)
        if fp is None or g is None:
            continue
        if fp["n"] != g.n or fp["edges"] != g.num_edges:
            raise ValidationError(
                f"{key} fingerprint mismatch: checkpoint has n={fp['n']}, "
                f"{fp['edges']} edges; got n={g.n}, {g.num_edges} edges"
            )
