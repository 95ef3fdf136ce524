"""Synthetic dataset generators for the package's experimental protocols.

Three task families are produced at desk scale: subgraph-to-subgraph
label prediction over a common parent graph, coarse-to-fine grid
interpolation, and the corrupted-graph / clean-subgraph pairs used by the
self-supervised pipeline.  Everything is a pure function of its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Matrix
from .errors import NumericError, ParameterError
from .graphs import (
    Graph,
    SamplingMatrix,
    drop_edges,
    graph_filter,
    gso,
    mask_features,
    sample_nodes,
    snowball_subgraph,
)
from .training import NodeSplit


@dataclass
class GeneratedGraph:
    graph: Graph
    communities: np.ndarray | None = None  # sbm only
    coords: np.ndarray | None = None  # grid / geometric only


@dataclass
class SubgraphTask:
    """Two snowball subgraphs of one parent; labels live on the output side."""

    g_x: Graph
    g_y: Graph
    map_x: list[int]  # subgraph id -> parent id
    map_y: list[int]
    x: Matrix
    labels: np.ndarray  # one community label per g_y node
    split: NodeSplit
    n_classes: int
    parent: Graph


@dataclass
class CoarseFineTask:
    """A grid and its refinement; the input is the cellwise mean of the target."""

    g_coarse: Graph
    g_fine: Graph
    membership: np.ndarray  # fine node -> coarse node
    x: Matrix
    y: Matrix
    weights: np.ndarray
    split: NodeSplit
    coords_coarse: np.ndarray
    coords_fine: np.ndarray


@dataclass
class TwoViewDataset:
    """P paired samples of two linearly mixed views, stored row-wise."""

    xs: Matrix  # P x n_x
    ys: Matrix  # P x n_y
    latent_dim: int

    @property
    def p_count(self) -> int:
        return self.xs.rows


@dataclass
class SSLTask:
    """Corrupted full graph plus an error-free subgraph of clean features."""

    g_prime: Graph
    x_prime: Matrix
    g_s: Graph
    c: SamplingMatrix
    y_s: Matrix
    labels: np.ndarray  # per subgraph node
    split: NodeSplit
    n_classes: int
    parent: Graph
    x_clean: Matrix


# ---------------------------------------------------------------- graphs


def gen_graph(kind: str, seed: int = 0, **params) -> GeneratedGraph:
    """Seeded graph constructions: sbm, grid, or random geometric.

    sbm(n, blocks, p_in, p_out) attaches community labels; grid(rows, cols)
    and geometric(n, radius) attach node coordinates.
    """
    rng = np.random.default_rng(seed)
    if kind == "sbm":
        return _gen_sbm(rng, **params)
    if kind == "grid":
        return _gen_grid(**params)
    if kind == "geometric":
        return _gen_geometric(rng, **params)
    raise ParameterError(
        f"unknown graph kind {kind!r}; expected sbm, grid or geometric"
    )


def _gen_sbm(rng, n: int = 120, blocks: int = 4, p_in: float = 0.3,
             p_out: float = 0.02) -> GeneratedGraph:
    if n < 1 or blocks < 1 or blocks > n:
        raise ParameterError(f"invalid sbm sizes n={n}, blocks={blocks}")
    if not (0 <= p_in <= 1 and 0 <= p_out <= 1):
        raise ParameterError("sbm probabilities must lie in [0,1]")
    sizes = [n // blocks + (1 if b < n % blocks else 0) for b in range(blocks)]
    communities = np.repeat(np.arange(blocks), sizes)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(communities[iu] == communities[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = [(int(u), int(v), 1.0) for u, v in zip(iu[keep], ju[keep])]
    return GeneratedGraph(Graph(n, edges), communities=communities)


def _gen_grid(rows: int = 4, cols: int = 4) -> GeneratedGraph:
    if rows < 1 or cols < 1:
        raise ParameterError("grid sizes must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1, 1.0))
            if r + 1 < rows:
                edges.append((u, u + cols, 1.0))
    coords = np.array([[r, c] for r in range(rows) for c in range(cols)],
                      dtype=np.float64)
    return GeneratedGraph(Graph(rows * cols, edges), coords=coords)


def _gen_geometric(rng, n: int = 30, radius: float = 0.3) -> GeneratedGraph:
    if n < 1 or radius < 0:
        raise ParameterError(f"invalid geometric parameters n={n}, r={radius}")
    pts = rng.random((n, 2))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if np.sqrt(np.sum((pts[u] - pts[v]) ** 2)) <= radius:
                edges.append((u, v, 1.0))
    return GeneratedGraph(Graph(n, edges), coords=pts)


# ---------------------------------------------------------------- signals


def gen_smooth_signal(g: Graph, filter_order: int = 3, f_cols: int = 1,
                      noise_sd: float = 0.0, seed: int = 0) -> Matrix:
    """Low-pass filtered white noise: a generic smooth graph signal.

    The filter averages the powers A_hat^0 .. A_hat^{R-1} of the normalized
    loaded adjacency, so filter_order=1 returns the white noise unchanged.
    """
    if filter_order < 1:
        raise ParameterError(f"filter_order must be >= 1, got {filter_order}")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((g.n, f_cols))
    h = [1.0 / filter_order] * filter_order
    out = graph_filter(gso(g, "normalized_loaded_adjacency"), h, white).data
    if noise_sd > 0:
        out = out + noise_sd * rng.standard_normal(out.shape)
    return Matrix(out)


def gen_diffused_signal(g: Graph, steps: int = 40, f_cols: int = 1,
                        noise_sd: float = 0.0, seed: int = 0) -> Matrix:
    """White noise smoothed by the diffusion filter ((I + A_hat)/2)^steps.

    Unlike the boxcar average of ``gen_smooth_signal``, the binomial
    response ((1+lambda)/2)^steps vanishes at the bottom of the spectrum,
    so the result has no high-frequency residue; correlation length grows
    like sqrt(steps).  Columns are rescaled to unit sample variance before
    noise is added.
    """
    if steps < 0:
        raise ParameterError(f"steps must be >= 0, got {steps}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((g.n, f_cols))
    a_hat = gso(g, "normalized_loaded_adjacency")
    for _ in range(steps):
        z = graph_filter(a_hat, [0.5, 0.5], z).data
    sd = z.std(axis=0, keepdims=True)
    sd[sd == 0] = 1.0
    z = z / sd
    if noise_sd > 0:
        z = z + noise_sd * rng.standard_normal(z.shape)
    return Matrix(z)


def make_split(n: int, ratios: tuple[float, float, float], rng) -> NodeSplit:
    """Uniform node split; floor sizing, remainder assigned to test."""
    if any(r < 0 for r in ratios) or sum(ratios) > 1 + 1e-9:
        raise ParameterError(f"invalid split ratios {ratios}")
    perm = rng.permutation(n)
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    train = perm[:n_train]
    val = perm[n_train:n_train + n_val]
    test = perm[n_train + n_val:]
    return NodeSplit(train.tolist(), val.tolist(), test.tolist())


def _community_features(g: Graph, communities: np.ndarray, n_classes: int,
                        noise_sd: float, smooth_order: int, rng,
                        f_cols: int | None = None) -> Matrix:
    """Community signatures corrupted by smooth graph noise.

    With ``f_cols`` set, the one-hot class rows are spread across f_cols
    columns through a random codebook, so the class signal survives
    column-level corruption the way wide bag-of-words features would.
    """
    onehot = np.zeros((g.n, n_classes))
    onehot[np.arange(g.n), communities] = 1.0
    if f_cols is None:
        feats = onehot
        width = n_classes
    else:
        codebook = rng.standard_normal((n_classes, f_cols))
        feats = onehot @ codebook
        width = f_cols
    if noise_sd > 0:
        noise = gen_smooth_signal(g, smooth_order, width, 0.0,
                                  seed=int(rng.integers(2 ** 31)))
        feats = feats + noise_sd * noise.data
    return Matrix(feats)


# ------------------------------------------------------------------ tasks


def gen_subgraph_task(parent: dict | None = None, parent_seed: int = 0,
                      k_hops: int = 2, label_rule: str = "community",
                      split_ratios: tuple[float, float, float] = (0.3, 0.2, 0.5),
                      seed: int = 0, feature_noise_sd: float = 1.0,
                      smooth_order: int = 3, max_retries: int = 25
                      ) -> SubgraphTask:
    """Two snowball subgraphs of a common SBM parent.

    Roots are drawn uniformly (re-drawn, up to a bound, whenever a subgraph
    would have fewer than 3 nodes).  Input features are noisy one-hot
    community vectors on the input subgraph; targets are the community
    labels on the output subgraph, split 30/20/50 by default.
    """
    if label_rule != "community":
        raise ParameterError(f"unknown label rule {label_rule!r}")
    parent = dict(parent or {})
    kind = parent.pop("kind", "sbm")
    if kind != "sbm":
        raise ParameterError("subgraph task needs an sbm parent for labels")
    gen = gen_graph("sbm", seed=parent_seed, **parent)
    g, communities = gen.graph, gen.communities
    n_classes = int(communities.max()) + 1
    rng = np.random.default_rng(seed)

    for _ in range(max_retries):
        root_x, root_y = rng.choice(g.n, size=2, replace=False)
        g_x, map_x = snowball_subgraph(g, int(root_x), k_hops)
        g_y, map_y = snowball_subgraph(g, int(root_y), k_hops)
        if g_x.n >= 3 and g_y.n >= 3:
            break
    else:
        raise NumericError(
            f"could not draw subgraphs with >= 3 nodes in {max_retries} tries"
        )

    x = _community_features(g_x, communities[map_x], n_classes,
                            feature_noise_sd, smooth_order, rng)
    labels = communities[map_y].copy()
    split = make_split(g_y.n, split_ratios, rng)
    return SubgraphTask(g_x, g_y, list(map_x), list(map_y), x, labels, split,
                        n_classes, g)


def gen_coarse_fine_task(coarse_rows: int = 6, coarse_cols: int = 6,
                         refine_factor: int = 2, f_cols: int = 3,
                         noise_sd: float = 0.0, diffusion_steps: int | None = None,
                         split_ratios: tuple[float, float, float] = (0.5, 0.2, 0.3),
                         seed: int = 0) -> CoarseFineTask:
    """A coarse grid whose cells split into refine_factor^2 fine cells.

    The fine target is a diffusion-smoothed signal whose correlation length
    spans a few coarse cells (steps default to 10 * refine_factor^2, since
    correlation length grows like sqrt(steps) fine cells); the coarse input
    is its membership mean, so the task is to undo the averaging using the
    fine graph.  Half the fine nodes are observed for training by default,
    which gives every unobserved node nearby anchors to interpolate from.
    """
    if refine_factor < 1:
        raise ParameterError(f"refine_factor must be >= 1, got {refine_factor}")
    rng = np.random.default_rng(seed)
    coarse = _gen_grid(rows=coarse_rows, cols=coarse_cols)
    f = refine_factor
    fine = _gen_grid(rows=coarse_rows * f, cols=coarse_cols * f)
    fine_cols = coarse_cols * f
    membership = np.array(
        [(r // f) * coarse_cols + (c // f)
         for r in range(coarse_rows * f) for c in range(fine_cols)],
        dtype=np.int64,
    )
    if diffusion_steps is None:
        diffusion_steps = 10 * f * f
    y = gen_diffused_signal(fine.graph, diffusion_steps, f_cols, noise_sd,
                            seed=int(rng.integers(2 ** 31)))
    x = np.zeros((coarse.graph.n, f_cols))
    for cell in range(coarse.graph.n):
        x[cell] = y.data[membership == cell].mean(axis=0)
    weights = np.ones(fine.graph.n)
    split = make_split(fine.graph.n, split_ratios, rng)
    coords_coarse = coarse.coords + 0.5
    coords_fine = (fine.coords + 0.5) / f
    return CoarseFineTask(coarse.graph, fine.graph, membership, Matrix(x), y,
                          weights, split, coords_coarse, coords_fine)


def parent_copy_prediction(task: CoarseFineTask) -> Matrix:
    """Dummy interpolator: every fine node takes its coarse parent's value."""
    return Matrix(task.x.data[task.membership])


def gen_two_view_cca(d: int = 3, n_x: int = 8, n_y: int = 6, p: int = 2000,
                     noise_sd: float = 0.1, seed: int = 0
                     ) -> tuple[TwoViewDataset, Matrix, Matrix]:
    """Two linear views of a shared Gaussian latent variable.

    x = A s + noise and y = B s + noise with seeded Gaussian mixing maps,
    so at zero noise every population canonical correlation equals one.
    Returns the dataset plus the mixing maps.
    """
    if not 1 <= d <= min(n_x, n_y):
        raise ParameterError(f"need 1 <= d <= min(n_x, n_y), got d={d}")
    if p < 2:
        raise ParameterError(f"need at least two samples, got P={p}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_x, d))
    b = rng.standard_normal((n_y, d))
    s = rng.standard_normal((p, d))
    xs = s @ a.T
    ys = s @ b.T
    if noise_sd > 0:
        xs = xs + noise_sd * rng.standard_normal(xs.shape)
        ys = ys + noise_sd * rng.standard_normal(ys.shape)
    return TwoViewDataset(Matrix(xs), Matrix(ys), d), Matrix(a), Matrix(b)


def gen_ssl_task(parent: dict | None = None, drop_ratio: float = 0.0,
                 mask_ratio: float = 0.0, node_ratio: float = 0.7,
                 seed: int = 0,
                 split_ratios: tuple[float, float, float] = (0.3, 0.2, 0.5),
                 feature_noise_sd: float = 1.0, smooth_order: int = 3,
                 feature_cols: int = 16) -> SSLTask:
    """Corruption pipeline for self-supervised training.

    From an attributed SBM parent: drop edges and mask feature columns to
    form the corrupted view, and sample nodes to form the error-free
    subgraph whose signal is the clean feature rows.  Labels (communities)
    are only kept for subgraph nodes.  Features are wide codebook
    signatures (bag-of-words-like), so column masking removes information
    gradually rather than all at once.
    """
    parent = dict(parent or {})
    kind = parent.pop("kind", "sbm")
    if kind != "sbm":
        raise ParameterError("ssl task needs an sbm parent for labels")
    parent_seed = parent.pop("seed", seed)
    gen = gen_graph("sbm", seed=parent_seed, **parent)
    g, communities = gen.graph, gen.communities
    n_classes = int(communities.max()) + 1
    rng = np.random.default_rng(seed)
    x = _community_features(g, communities, n_classes, feature_noise_sd,
                            smooth_order, rng, f_cols=feature_cols)
    g_prime = drop_edges(g, drop_ratio, int(rng.integers(2 ** 31)))
    x_prime, _ = mask_features(x, mask_ratio, int(rng.integers(2 ** 31)))
    g_s, c, y_s = sample_nodes(g, x, node_ratio, int(rng.integers(2 ** 31)))
    labels = communities[list(c.selected)].copy()
    split = make_split(g_s.n, split_ratios, rng)
    return SSLTask(g_prime, x_prime, g_s, c, y_s, labels, split, n_classes,
                   g, x)
