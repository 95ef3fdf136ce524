"""Composed three-block model: composition semantics and joint gradients."""

import numpy as np
import pytest

from twograph import (
    ConfigError,
    Graph,
    GNNStack,
    IOModel,
    LayerSpec,
    Parameter,
    ShapeError,
    Tape,
    grad_check,
    gso,
)
from twograph.transforms import (
    IdentityTransform,
    LinearNodeTransform,
    TransposeTransform,
)


def gcn_stack(widths, seed=0, activation="identity", name="stack"):
    specs = [LayerSpec("gcn", fin, fout, activation=activation)
             for fin, fout in zip(widths, widths[1:])]
    return GNNStack(specs, seed=seed, name=name)


def identity_gcn(width, name):
    stack = gcn_stack([width, width], name=name)
    stack.layer_params[0]["theta"].value[:] = np.eye(width)
    return stack


class TestForward:
    def test_double_averaging_composition(self):
        """All-identity weights collapse to A_hat_y @ A_hat_x @ X."""
        g_x = Graph(3, [(0, 1), (1, 2)])
        g_y = Graph(3, [(0, 2)])
        model = IOModel(identity_gcn(2, "psi_x"),
                        LinearNodeTransform(3, 3, init="identity"),
                        identity_gcn(2, "psi_y"))
        x = np.arange(6.0).reshape(3, 2)
        out = model.forward(Tape(), x, g_x, g_y)
        want = gso(g_y).data @ (gso(g_x).data @ x)
        assert np.allclose(out.value, want, atol=1e-12)

    def test_zero_propagation_with_relu(self):
        g = Graph(3, [(0, 1), (1, 2)])
        model = IOModel(gcn_stack([2, 4], seed=1, activation="relu"),
                        LinearNodeTransform(3, 3, seed=2),
                        gcn_stack([4, 2], seed=3, activation="relu"))
        out = model.forward(Tape(), np.zeros((3, 2)), g, g)
        assert np.all(out.value == 0)

    def test_output_shape_contract(self):
        g_x = Graph(4, [(0, 1), (2, 3)])
        g_y = Graph(3, [(0, 1)])
        model = IOModel(gcn_stack([2, 5], seed=4),
                        LinearNodeTransform(4, 3, seed=5),
                        gcn_stack([5, 2], seed=6))
        out = model.forward(Tape(), np.random.default_rng(0).standard_normal((4, 2)),
                            g_x, g_y)
        assert out.value.shape == (3, 2)

    def test_shape_error_names_failing_block(self):
        g_x = Graph(3, [(0, 1)])
        g_y = Graph(4, [(0, 1)])
        model = IOModel(gcn_stack([2, 5], seed=7),
                        LinearNodeTransform(3, 3, seed=8),  # emits 3 rows
                        gcn_stack([5, 2], seed=9))
        with pytest.raises(ShapeError, match="output block"):
            model.forward(Tape(), np.ones((3, 2)), g_x, g_y)

    def test_deterministic(self):
        g = Graph(4, [(0, 1), (1, 2), (2, 3)])
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 3))
        model = IOModel(gcn_stack([3, 4], seed=10, activation="tanh"),
                        TransposeTransform(),
                        gcn_stack([4, 2], seed=11))
        a = model.forward(Tape(), x, g, g).value
        b = model.forward(Tape(), x, g, g).value
        assert np.array_equal(a, b)

    def test_mode_guard(self):
        model = IOModel(GNNStack([]), IdentityTransform(), GNNStack([]),
                        mode="cca")
        with pytest.raises(ConfigError):
            model.forward(Tape(), np.ones((2, 2)))


class TestCCAForward:
    def test_symmetric_inputs_give_equal_views(self):
        g = Graph(3, [(0, 1), (1, 2)])
        model = IOModel(identity_gcn(2, "psi_x"),
                        LinearNodeTransform(3, 3, init="identity"),
                        identity_gcn(2, "psi_y"), mode="cca")
        x = np.arange(6.0).reshape(3, 2)
        vx, vy = model.cca_forward(Tape(), x, x, g, g)
        assert np.array_equal(vx.value, vy.value)

    def test_zero_x_view(self):
        g = Graph(3, [(0, 1), (1, 2)])
        model = IOModel(gcn_stack([2, 4], seed=12, activation="relu"),
                        LinearNodeTransform(3, 3, seed=13),
                        gcn_stack([2, 4], seed=14, activation="relu"),
                        mode="cca")
        rng = np.random.default_rng(2)
        vx, vy = model.cca_forward(Tape(), np.zeros((3, 2)),
                                   rng.standard_normal((3, 2)), g, g)
        assert np.all(vx.value == 0)
        assert not np.all(vy.value == 0)

    def test_view_shapes_match(self):
        g_x = Graph(5, [(0, 1), (1, 2), (3, 4)])
        g_y = Graph(3, [(0, 1), (1, 2)])
        model = IOModel(gcn_stack([2, 4], seed=15),
                        LinearNodeTransform(5, 3, seed=16),
                        gcn_stack([3, 4], seed=17),
                        mode="cca")
        vx, vy = model.cca_forward(
            Tape(), np.random.default_rng(3).standard_normal((5, 2)),
            np.random.default_rng(4).standard_normal((3, 3)), g_x, g_y)
        assert vx.value.shape == vy.value.shape == (3, 4)

    def test_transform_on_y_side(self):
        g_x = Graph(3, [(0, 1), (1, 2)])
        g_y = Graph(5, [(0, 1), (2, 3), (3, 4)])
        model = IOModel(gcn_stack([2, 4], seed=18),
                        LinearNodeTransform(5, 3, seed=19),
                        gcn_stack([3, 4], seed=20),
                        mode="cca", transform_side="y")
        vx, vy = model.cca_forward(
            Tape(), np.random.default_rng(5).standard_normal((3, 2)),
            np.random.default_rng(6).standard_normal((5, 3)), g_x, g_y)
        assert vx.value.shape == vy.value.shape == (3, 4)


class TestJointGradients:
    def test_end_to_end_grad_check_all_blocks(self):
        rng = np.random.default_rng(7)
        g_x = Graph(4, [(0, 1), (1, 2), (2, 3)])
        g_y = Graph(3, [(0, 1), (1, 2)])
        x = rng.standard_normal((4, 2))
        target = rng.standard_normal((3, 2))
        model = IOModel(gcn_stack([2, 3], seed=21, activation="tanh"),
                        LinearNodeTransform(4, 3, seed=22),
                        gcn_stack([3, 2], seed=23))

        def loss():
            t = Tape()
            return t.mean_sq_error(model.forward(t, x, g_x, g_y),
                                   t.constant(target))

        params = model.parameters()
        assert len(params) == 3
        assert grad_check(loss, params) < 1e-4

    def test_symmetric_codes_have_k_columns(self):
        from twograph.transforms import LowRankVecTransform
        g = Graph(3, [(0, 1), (1, 2)])
        tr = LowRankVecTransform(3, 2, 3, 2, k=4, seed=24)
        model = IOModel(gcn_stack([2, 2], seed=25), tr,
                        gcn_stack([2, 2], seed=26), mode="cca",
                        symmetric_codes=True)
        rng = np.random.default_rng(8)
        vx, vy = model.cca_forward(Tape(), rng.standard_normal((3, 2)),
                                   rng.standard_normal((3, 2)), g, g)
        assert vx.value.shape == (1, 4)
        assert vy.value.shape == (1, 4)
