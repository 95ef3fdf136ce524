"""GNN and MLP building blocks: GCN layers, graph filter banks, dense layers.

A ``GNNStack`` is an ordered list of layers whose feature dimensions chain;
the node dimension is preserved throughout (no pooling).  GCN layers always
use the normalized loaded adjacency; filter-bank layers use the stack's
configured shift operator (plain adjacency by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tape, Var
from .errors import ParameterError, ShapeError, ValidationError
from .graphs import GSO_KINDS, Graph, gso

LAYER_KINDS = ("gcn", "filterbank", "dense")


def glorot(rows: int, cols: int, rng: np.random.Generator,
           scale: float = 1.0) -> np.ndarray:
    """Uniform init on [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))] * scale."""
    bound = np.sqrt(6.0 / (rows + cols)) * scale
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass(frozen=True)
class LayerSpec:
    """Static description of one layer; parameters are held by the stack."""

    kind: str
    in_features: int
    out_features: int
    activation: str = "identity"
    bias: bool | None = None  # None: on for dense, off for graph layers
    order: int = 1  # filter order R, filterbank only

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ParameterError(
                f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}"
            )
        if self.in_features < 1 or self.out_features < 1:
            raise ParameterError("layer widths must be >= 1")
        if self.kind == "filterbank" and self.order < 1:
            raise ParameterError(f"filter order must be >= 1, got {self.order}")

    @property
    def use_bias(self) -> bool:
        if self.bias is None:
            return self.kind == "dense"
        return self.bias


def gcn_forward(tape: Tape, a_hat, x, theta: Parameter, bias: Parameter | None,
                activation: str) -> Var:
    """One GCN layer: activation(A_hat @ X @ Theta [+ bias row])."""
    h = tape.matmul(tape.matmul(a_hat, x), tape.param(theta))
    if bias is not None:
        h = tape.add_row(h, tape.param(bias))
    return tape.activate(activation, h)


def filterbank_forward(tape: Tape, s, x, thetas: list[Parameter],
                       activation: str) -> Var:
    """One filter-bank layer: activation(sum_r S^r @ X @ Theta_r).

    The shifted signals are built iteratively (X, SX, S(SX), ...), so no
    matrix power is formed.
    """
    if not thetas:
        raise ParameterError("filter bank needs at least one coefficient matrix")
    x = tape._lift(x)
    s = tape._lift(s)
    shifted = x
    acc = tape.matmul(shifted, tape.param(thetas[0]))
    for theta in thetas[1:]:
        shifted = tape.matmul(s, shifted)
        acc = tape.add(acc, tape.matmul(shifted, tape.param(theta)))
    return tape.activate(activation, acc)


def dense_forward(tape: Tape, x, theta: Parameter, bias: Parameter | None,
                  activation: str) -> Var:
    """One dense layer applied row-wise: activation(X @ Theta [+ bias row])."""
    h = tape.matmul(x, tape.param(theta))
    if bias is not None:
        h = tape.add_row(h, tape.param(bias))
    return tape.activate(activation, h)


class GNNStack:
    """An ordered stack of layers with one parameter set per layer.

    ``gso_kind`` only affects filterbank layers; GCN layers are defined in
    terms of the normalized loaded adjacency and always use it.
    """

    def __init__(self, specs: list[LayerSpec], seed: int = 0,
                 gso_kind: str = "adjacency", name: str = "stack"):
        if gso_kind not in GSO_KINDS:
            raise ParameterError(f"unknown GSO kind {gso_kind!r}")
        for prev, cur in zip(specs, specs[1:]):
            if prev.out_features != cur.in_features:
                raise ShapeError(
                    f"{name}: layer widths do not chain "
                    f"({prev.out_features} -> {cur.in_features})"
                )
        self.specs = list(specs)
        self.gso_kind = gso_kind
        self.name = name
        self.layer_params: list[dict] = []
        rng = np.random.default_rng(seed)
        for i, spec in enumerate(self.specs):
            entry: dict = {}
            if spec.kind == "filterbank":
                entry["thetas"] = [
                    Parameter(glorot(spec.in_features, spec.out_features, rng),
                              name=f"{name}.l{i}.theta{r}")
                    for r in range(spec.order)
                ]
            else:
                entry["theta"] = Parameter(
                    glorot(spec.in_features, spec.out_features, rng),
                    name=f"{name}.l{i}.theta",
                )
            if spec.use_bias:
                entry["bias"] = Parameter(np.zeros((1, spec.out_features)),
                                          name=f"{name}.l{i}.bias")
            self.layer_params.append(entry)

    @property
    def in_features(self) -> int | None:
        return self.specs[0].in_features if self.specs else None

    @property
    def out_features(self) -> int | None:
        return self.specs[-1].out_features if self.specs else None

    @property
    def needs_graph(self) -> bool:
        return any(s.kind in ("gcn", "filterbank") for s in self.specs)

    def parameters(self) -> list[Parameter]:
        out = []
        for entry in self.layer_params:
            if "thetas" in entry:
                out.extend(entry["thetas"])
            if "theta" in entry:
                out.append(entry["theta"])
            if "bias" in entry:
                out.append(entry["bias"])
        return out

    def forward(self, tape: Tape, x, g: Graph | None = None) -> Var:
        """Run all layers in order; the graph is bound once per call."""
        h = tape._lift(x, f"{self.name} input")
        if self.needs_graph:
            if g is None:
                raise ValidationError(f"{self.name} contains graph layers but no "
                                      "graph was supplied")
            if h.value.shape[0] != g.n:
                raise ShapeError(
                    f"{self.name}: input has {h.value.shape[0]} rows but the "
                    f"graph has {g.n} nodes"
                )
        a_hat = s = None
        for spec, entry in zip(self.specs, self.layer_params):
            if h.value.shape[1] != spec.in_features:
                raise ShapeError(
                    f"{self.name}: layer expects {spec.in_features} features, "
                    f"got {h.value.shape[1]}"
                )
            bias = entry.get("bias")
            if spec.kind == "gcn":
                if a_hat is None:
                    a_hat = tape.constant(
                        gso(g, "normalized_loaded_adjacency"), "a_hat")
                h = gcn_forward(tape, a_hat, h, entry["theta"], bias,
                                spec.activation)
            elif spec.kind == "filterbank":
                if s is None:
                    s = tape.constant(gso(g, self.gso_kind), "gso")
                h = filterbank_forward(tape, s, h, entry["thetas"],
                                       spec.activation)
            else:
                h = dense_forward(tape, h, entry["theta"], bias, spec.activation)
        return h


def stack_forward(stack: GNNStack, g: Graph | None, x, tape: Tape | None = None) -> Var:
    """Convenience wrapper: run a stack on its own tape unless one is given."""
    if tape is None:
        tape = Tape()
    return stack.forward(tape, x, g)


def stack_describe(stack: GNNStack) -> dict:
    """Topology descriptor for configs and checkpoints (no parameter values)."""
    return {
        "gso_kind": stack.gso_kind,
        "layers": [
            {"kind": s.kind, "in": s.in_features, "out": s.out_features,
             "activation": s.activation, "bias": s.use_bias, "order": s.order}
            for s in stack.specs
        ],
    }


def stack_from_spec(spec: dict, seed: int = 0, name: str = "stack") -> GNNStack:
    """Rebuild a stack from its descriptor; parameters are freshly seeded."""
    specs = [
        LayerSpec(d["kind"], int(d["in"]), int(d["out"]),
                  activation=d.get("activation", "identity"),
                  bias=d.get("bias"), order=int(d.get("order", 1)))
        for d in spec.get("layers", [])
    ]
    return GNNStack(specs, seed=seed,
                    gso_kind=spec.get("gso_kind", "adjacency"), name=name)


def dense_stack(widths: list[int], activation: str = "tanh", seed: int = 0,
                final_activation: str = "identity", bias: bool = True,
                name: str = "mlp") -> GNNStack:
    """Build an MLP: dense layers chaining through the given widths."""
    if len(widths) < 2:
        raise ParameterError("dense_stack needs at least [in, out] widths")
    specs = []
    for i, (fin, fout) in enumerate(zip(widths, widths[1:])):
        last = i == len(widths) - 2
        specs.append(LayerSpec("dense", fin, fout,
                               activation=final_activation if last else activation,
                               bias=bias))
    return GNNStack(specs, seed=seed, name=name)
