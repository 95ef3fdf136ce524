"""Undirected weighted graphs, shift operators, and graph surgery.

Covers the structural side of the package: building shift operator
matrices, running polynomial graph filters, and the sampling operations
the experiments rely on (snowball subgraphs, edge dropping, feature
masking, node sampling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Matrix, as_array2d
from .errors import ParameterError, ShapeError, ValidationError

GSO_KINDS = ("adjacency", "laplacian", "normalized_loaded_adjacency")


@dataclass(frozen=True)
class Graph:
    """Node count plus a weighted undirected edge list.

    Self-loops are forbidden (diagonal loading is applied by the operators
    that need it, never stored) and each undirected pair may appear once.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...] = ()

    def __init__(self, n: int, edges=()):
        if n < 1:
            raise ValidationError(f"graph needs at least one node, got n={n}")
        norm = []
        seen = set()
        for e in edges:
            if len(e) == 2:
                u, v = e
                w = 1.0
            else:
                u, v, w = e
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u},{v}) outside node range [0,{n})")
            if u == v:
                raise ValidationError(f"self-loop at node {u} is not allowed")
            if not (np.isfinite(w) and w > 0):
                raise ValidationError(f"edge ({u},{v}) has invalid weight {w}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValidationError(f"duplicate undirected edge ({u},{v})")
            seen.add(key)
            norm.append((key[0], key[1], w))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v, w in self.edges:
            a[u, v] = w
            a[v, u] = w
        return a


@dataclass(frozen=True)
class NodeMap:
    """Partial correspondence between two graphs: pairs (input id, output id)."""

    pairs: tuple[tuple[int, int], ...]

    def __init__(self, pairs):
        norm = tuple((int(a), int(b)) for a, b in pairs)
        if len({a for a, _ in norm}) != len(norm) or len({b for _, b in norm}) != len(norm):
            raise ValidationError("a node appears twice on one side of a NodeMap")
        object.__setattr__(self, "pairs", norm)

    def __len__(self) -> int:
        return len(self.pairs)

    def validate(self, n_in: int, n_out: int) -> None:
        for a, b in self.pairs:
            if not (0 <= a < n_in and 0 <= b < n_out):
                raise ValidationError(
                    f"NodeMap pair ({a},{b}) outside graphs of sizes {n_in}/{n_out}"
                )


@dataclass(frozen=True)
class SamplingMatrix:
    """Row selector C in {0,1}^(Ns x N), stored as the ordered selected ids."""

    selected: tuple[int, ...]
    n: int

    def __init__(self, selected, n: int):
        sel = tuple(int(i) for i in selected)
        if len(set(sel)) != len(sel):
            raise ValidationError("SamplingMatrix ids must be distinct")
        if len(sel) > n or any(not 0 <= i < n for i in sel):
            raise ValidationError(f"SamplingMatrix ids must lie in [0,{n})")
        object.__setattr__(self, "selected", sel)
        object.__setattr__(self, "n", n)

    @property
    def ns(self) -> int:
        return len(self.selected)

    def materialize(self) -> Matrix:
        c = np.zeros((self.ns, self.n))
        c[np.arange(self.ns), list(self.selected)] = 1.0
        return Matrix(c)

    def apply(self, x) -> Matrix:
        """C @ x as an exact row gather."""
        arr = as_array2d(x, "x")
        if arr.shape[0] != self.n:
            raise ShapeError(f"signal has {arr.shape[0]} rows, expected {self.n}")
        return Matrix(arr[list(self.selected)])


def gso(g: Graph, kind: str = "normalized_loaded_adjacency") -> Matrix:
    """Graph shift operator matrix of the requested kind.

    ``adjacency`` is the symmetric weight matrix, ``laplacian`` is D - A,
    and ``normalized_loaded_adjacency`` is D^{-1/2} (A + I) D^{-1/2} with
    D = diag((A + I) 1).  Diagonal loading keeps D strictly positive, so
    isolated nodes need no special casing.
    """
    a = g.adjacency()
    if kind == "adjacency":
        return Matrix(a)
    if kind == "laplacian":
        return Matrix(np.diag(a.sum(axis=1)) - a)
    if kind == "normalized_loaded_adjacency":
        loaded = a + np.eye(g.n)
        d_inv_sqrt = 1.0 / np.sqrt(loaded.sum(axis=1))
        return Matrix(loaded * np.outer(d_inv_sqrt, d_inv_sqrt))
    raise ParameterError(f"unknown GSO kind {kind!r}; expected one of {GSO_KINDS}")


def graph_filter(s, h, x) -> Matrix:
    """Apply the polynomial filter (sum_r h[r] S^r) to a signal.

    Uses iterated shifts x, Sx, S(Sx), ... so no explicit matrix power is
    ever materialized.
    """
    sm = as_array2d(s, "s")
    xm = as_array2d(x, "x")
    if sm.shape[0] != sm.shape[1]:
        raise ShapeError(f"shift operator must be square, got {sm.shape}")
    if xm.shape[0] != sm.shape[0]:
        raise ShapeError(
            f"signal rows ({xm.shape[0]}) must equal shift size ({sm.shape[0]})"
        )
    coeffs = [float(c) for c in h]
    if not coeffs:
        raise ParameterError("filter needs at least one coefficient")
    shifted = xm
    out = coeffs[0] * xm
    for c in coeffs[1:]:
        shifted = sm @ shifted
        out = out + c * shifted
    return Matrix(out)


def snowball_subgraph(g: Graph, root: int, k: int) -> tuple[Graph, list[int]]:
    """Induced subgraph on all nodes within k BFS hops of the root.

    Subgraph ids follow BFS order with frontier ties broken by ascending
    parent id, which keeps node maps reproducible across runs.  Returns the
    subgraph and the list mapping each new id to its parent-graph id.
    """
    if not 0 <= root < g.n:
        raise ValidationError(f"root {root} outside [0,{g.n})")
    if k < 0:
        raise ParameterError(f"hop count must be >= 0, got {k}")
    adj = g.neighbors()
    visited = {root}
    order = [root]
    level = [root]
    for _ in range(k):
        nxt = {v for u in level for v in adj[u] if v not in visited}
        if not nxt:
            break
        level = sorted(nxt)
        visited.update(level)
        order.extend(level)
    new_id = {p: i for i, p in enumerate(order)}
    sub_edges = [
        (new_id[u], new_id[v], w)
        for u, v, w in g.edges
        if u in new_id and v in new_id
    ]
    return Graph(len(order), sub_edges), order


def drop_edges(g: Graph, ratio: float, seed: int) -> Graph:
    """Remove exactly floor(ratio * |E|) edges, chosen uniformly."""
    _check_ratio(ratio)
    n_drop = int(np.floor(ratio * g.num_edges))
    if n_drop == 0:
        return Graph(g.n, g.edges)
    rng = np.random.default_rng(seed)
    drop = set(rng.choice(g.num_edges, size=n_drop, replace=False).tolist())
    kept = [e for i, e in enumerate(g.edges) if i not in drop]
    return Graph(g.n, kept)


def mask_features(x, ratio: float, seed: int) -> tuple[Matrix, list[int]]:
    """Zero exactly floor(ratio * F) uniformly chosen columns of the signal."""
    _check_ratio(ratio)
    arr = as_array2d(x, "x").copy()
    n_mask = int(np.floor(ratio * arr.shape[1]))
    rng = np.random.default_rng(seed)
    cols = sorted(rng.choice(arr.shape[1], size=n_mask, replace=False).tolist())
    arr[:, cols] = 0.0
    return Matrix(arr), cols


def sample_nodes(g: Graph, x, ratio: float, seed: int
                 ) -> tuple[Graph, SamplingMatrix, Matrix]:
    """Induced subgraph on max(1, floor(ratio*N)) uniformly chosen nodes.

    Returns the subgraph, the sampling matrix in index form, and the
    selected signal rows C @ x.  Selected ids are sorted ascending, so
    subgraph node i corresponds to the i-th smallest chosen parent id.
    """
    if not 0 < ratio <= 1:
        raise ParameterError(f"node ratio must be in (0,1], got {ratio}")
    arr = as_array2d(x, "x")
    if arr.shape[0] != g.n:
        raise ShapeError(f"signal has {arr.shape[0]} rows for a graph of {g.n}")
    ns = max(1, int(np.floor(ratio * g.n)))
    rng = np.random.default_rng(seed)
    selected = sorted(rng.choice(g.n, size=ns, replace=False).tolist())
    c = SamplingMatrix(selected, g.n)
    new_id = {p: i for i, p in enumerate(selected)}
    sub_edges = [
        (new_id[u], new_id[v], w)
        for u, v, w in g.edges
        if u in new_id and v in new_id
    ]
    return Graph(ns, sub_edges), c, c.apply(arr)


def common_node_map(map_x: list[int], map_y: list[int]) -> NodeMap:
    """Pairs (i, j) with map_x[i] == map_y[j]: the overlap of two subgraphs."""
    pos_y = {p: j for j, p in enumerate(map_y)}
    pairs = [(i, pos_y[p]) for i, p in enumerate(map_x) if p in pos_y]
    return NodeMap(pairs)


def induced_subgraph(g: Graph, nodes: list[int]) -> Graph:
    """Induced subgraph on the given parent ids, relabeled in list order."""
    new_id = {int(p): i for i, p in enumerate(nodes)}
    if len(new_id) != len(nodes):
        raise ValidationError("induced_subgraph node list has duplicates")
    sub_edges = [
        (new_id[u], new_id[v], w)
        for u, v, w in g.edges
        if u in new_id and v in new_id
    ]
    return Graph(len(nodes), sub_edges)


def _check_ratio(ratio: float) -> None:
    if not 0 <= ratio <= 1:
        raise ParameterError(f"ratio must be in [0,1], got {ratio}")
