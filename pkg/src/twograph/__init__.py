"""Input-output graph neural networks over two different graphs.

A small numpy-backed stack: reverse-mode autodiff, graph shift operators
and filters, GCN/filter-bank/dense layers, latent transforms between node
sets, joint training (supervised, semi-supervised, and soft-CCA), plus a
closed-form linear CCA oracle used to validate the learned pipelines.
"""

from .autodiff import Matrix, Parameter, Tape, Var, grad_check, reset_grads
from .cca import (
    CCASolution,
    LogisticModel,
    linear_cca,
    logistic_fit,
    logistic_predict,
    sum_correlations,
    sym_eig,
)
from .errors import (
    ConfigError,
    EmptySelectionError,
    NumericError,
    ParameterError,
    ParseError,
    ShapeError,
    TwoGraphError,
    ValidationError,
)
from .graphs import (
    Graph,
    NodeMap,
    SamplingMatrix,
    common_node_map,
    drop_edges,
    graph_filter,
    gso,
    induced_subgraph,
    mask_features,
    sample_nodes,
    snowball_subgraph,
)
from .layers import GNNStack, LayerSpec, dense_stack, stack_forward
from .model import IOModel
from .training import (
    Adam,
    CCATask,
    NodeSplit,
    RunReport,
    SGD,
    SemisupTask,
    SupervisedTask,
    TrainConfig,
    cca_loss,
    cca_objective,
    evaluate,
    semisup_loss,
    supervised_loss,
    train,
)
from .transforms import (
    Transform,
    symmetric_project,
    transform_from_spec,
    unvec,
    vec,
)

__version__ = "0.1.0"
