"""The composed three-block architecture: encoder, latent transform, decoder.

In supervised mode the blocks run in sequence on one tape, so a single
backward pass reaches all three parameter sets.  In CCA mode the third
block instead encodes the second view directly, and the forward pass
returns the pair of transformed views whose correlation is being shaped.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tape, Var
from .errors import ConfigError, ShapeError
from .graphs import Graph
from .layers import GNNStack
from .transforms import LowRankVecTransform, Transform, symmetric_project

MODES = ("supervised", "cca")


class IOModel:
    """psi_y(psi_z(psi_x(X | G_x)) | G_y), or its two-view CCA sibling.

    ``transform_side`` controls which view the latent transform is applied
    to in CCA mode; by convention it goes on the side with more nodes so
    the shared representation lives on the smaller graph.
    """

    def __init__(self, psi_x: GNNStack, psi_z: Transform, psi_y: GNNStack,
                 mode: str = "supervised", transform_side: str = "x",
                 symmetric_codes: bool = False):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
        if transform_side not in ("x", "y"):
            raise ConfigError("transform_side must be 'x' or 'y'")
        if symmetric_codes and not isinstance(psi_z, LowRankVecTransform):
            raise ConfigError("symmetric codes require a low_rank_vec transform")
        self.psi_x = psi_x
        self.psi_z = psi_z
        self.psi_y = psi_y
        self.mode = mode
        self.transform_side = transform_side
        self.symmetric_codes = symmetric_codes

    def parameters(self) -> list[Parameter]:
        return (self.psi_x.parameters() + self.psi_z.parameters()
                + self.psi_y.parameters())

    def forward(self, tape: Tape, x, g_x: Graph | None = None,
                g_y: Graph | None = None) -> Var:
        """Supervised prediction for one input signal."""
        if self.mode != "supervised":
            raise ConfigError("forward() requires a supervised-mode model")
        try:
            z_x = self.psi_x.forward(tape, x, g_x)
        except ShapeError as e:
            raise ShapeError(f"input block: {e}") from e
        try:
            z_y = self.psi_z.apply(tape, z_x)
        except ShapeError as e:
            raise ShapeError(f"latent transform: {e}") from e
        try:
            return self.psi_y.forward(tape, z_y, g_y)
        except ShapeError as e:
            raise ShapeError(f"output block: {e}") from e

    def cca_forward(self, tape: Tape, x, y, g_x: Graph | None = None,
                    g_y: Graph | None = None) -> tuple[Var, Var]:
        """Both transformed views on one tape: (x-side view, y-side view)."""
        if self.mode != "cca":
            raise ConfigError("cca_forward() requires a cca-mode model")
        try:
            z_x = self.psi_x.forward(tape, x, g_x)
        except ShapeError as e:
            raise ShapeError(f"input block: {e}") from e
        try:
            z_y = self.psi_y.forward(tape, y, g_y)
        except ShapeError as e:
            raise ShapeError(f"output block: {e}") from e
        if self.symmetric_codes:
            view_x, view_y = symmetric_project(self.psi_z, tape, z_x, z_y)
        else:
            try:
                if self.transform_side == "x":
                    view_x, view_y = self.psi_z.apply(tape, z_x), z_y
                else:
                    view_x, view_y = z_x, self.psi_z.apply(tape, z_y)
            except ShapeError as e:
                raise ShapeError(f"latent transform: {e}") from e
        if view_x.value.shape != view_y.value.shape:
            raise ShapeError(
                f"transformed views disagree in shape: "
                f"{view_x.value.shape} vs {view_y.value.shape}"
            )
        return view_x, view_y

    def snapshot(self) -> list[np.ndarray]:
        """Copy of every parameter value, for best-epoch restore."""
        return [p.value.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(snapshot) != len(params):
            raise ConfigError("snapshot does not match the parameter list")
        for p, v in zip(params, snapshot):
            if p.value.shape != v.shape:
                raise ShapeError(f"snapshot shape mismatch for {p.name}")
            p.value[:] = v
