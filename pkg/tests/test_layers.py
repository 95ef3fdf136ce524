"""Layer forward semantics, permutation equivariance, gradient checks."""

import numpy as np
import pytest

from twograph import (
    Graph,
    GNNStack,
    LayerSpec,
    Parameter,
    ShapeError,
    Tape,
    grad_check,
    gso,
)
from twograph.layers import (
    dense_forward,
    dense_stack,
    filterbank_forward,
    gcn_forward,
)


def random_graph(n, p, rng):
    edges = [(u, v, 1.0) for u in range(n) for v in range(u + 1, n)
             if rng.random() < p]
    return Graph(n, edges)


def permutation_matrix(perm):
    n = len(perm)
    p = np.zeros((n, n))
    p[np.arange(n), perm] = 1.0
    return p


class TestGCNForward:
    def test_identity_weights_give_ahat_x(self):
        g = Graph(3, [(0, 1), (1, 2)])
        a_hat = gso(g).data
        x = np.arange(6.0).reshape(3, 2)
        t = Tape()
        out = gcn_forward(t, a_hat, t.constant(x), Parameter(np.eye(2), "th"),
                          None, "identity")
        assert np.allclose(out.value, a_hat @ x)

    def test_zero_input_zero_output(self):
        t = Tape()
        out = gcn_forward(t, np.eye(4), t.constant(np.zeros((4, 3))),
                          Parameter(np.ones((3, 2)), "th"), None, "relu")
        assert np.all(out.value == 0)

    def test_two_node_averaging(self):
        t = Tape()
        out = gcn_forward(t, 0.5 * np.ones((2, 2)), t.constant([[1.0], [3.0]]),
                          Parameter([[1.0]], "th"), None, "relu")
        assert np.array_equal(out.value, [[2.0], [2.0]])


class TestFilterbankForward:
    def test_order_one_ignores_graph(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 3))
        theta = Parameter(rng.standard_normal((3, 2)), "th")
        t = Tape()
        out = filterbank_forward(t, np.zeros((4, 4)), t.constant(x), [theta],
                                 "identity")
        assert np.allclose(out.value, x @ theta.value)

    def test_identity_shift_doubles(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((4, 3))
        theta = Parameter(rng.standard_normal((3, 2)), "th")
        t = Tape()
        out = filterbank_forward(t, np.eye(4), t.constant(x), [theta, theta],
                                 "identity")
        assert np.allclose(out.value, 2.0 * (x @ theta.value))

    def test_matches_explicit_powers(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            n, f_in, f_out, r = 4, 3, 2, 3
            s = rng.standard_normal((n, n))
            x = rng.standard_normal((n, f_in))
            thetas = [Parameter(rng.standard_normal((f_in, f_out)), f"t{i}")
                      for i in range(r)]
            t = Tape()
            got = filterbank_forward(t, s, t.constant(x), thetas, "identity")
            want = np.zeros((n, f_out))
            s_pow = np.eye(n)
            for theta in thetas:
                want = want + s_pow @ x @ theta.value
                s_pow = s @ s_pow
            assert np.allclose(got.value, want, atol=1e-10)

    def test_r1_equals_dense_without_bias_exactly(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((5, 3))
        theta = Parameter(rng.standard_normal((3, 4)), "th")
        t = Tape()
        fb = filterbank_forward(t, rng.standard_normal((5, 5)), t.constant(x),
                                [theta], "tanh")
        de = dense_forward(t, t.constant(x), theta, None, "tanh")
        assert np.array_equal(fb.value, de.value)


class TestDenseForward:
    def test_identity(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((3, 3))
        t = Tape()
        out = dense_forward(t, t.constant(x), Parameter(np.eye(3), "th"),
                            None, "identity")
        assert np.allclose(out.value, x)

    def test_bias_rows(self):
        t = Tape()
        bias = Parameter([[1.0, 2.0]], "b")
        out = dense_forward(t, t.constant(np.zeros((3, 2))),
                            Parameter(np.eye(2), "th"), bias, "identity")
        assert np.allclose(out.value, np.tile([1.0, 2.0], (3, 1)))

    def test_matches_composition(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((4, 3))
        theta = Parameter(rng.standard_normal((3, 2)), "th")
        bias = Parameter(rng.standard_normal((1, 2)), "b")
        t = Tape()
        out = dense_forward(t, t.constant(x), theta, bias, "identity")
        assert np.allclose(out.value, x @ theta.value + bias.value)


class TestStack:
    def test_empty_stack_is_identity(self):
        stack = GNNStack([], name="empty")
        rng = np.random.default_rng(6)
        x = rng.standard_normal((4, 3))
        out = stack.forward(Tape(), x)
        assert np.array_equal(out.value, x)

    def test_single_gcn_identity_theta(self):
        g = Graph(3, [(0, 1), (1, 2)])
        stack = GNNStack([LayerSpec("gcn", 2, 2)], seed=0)
        stack.layer_params[0]["theta"].value[:] = np.eye(2)
        x = np.arange(6.0).reshape(3, 2)
        out = stack.forward(Tape(), x, g)
        assert np.allclose(out.value, gso(g).data @ x)

    def test_two_layer_shape_contract(self):
        g = Graph(4, [(0, 1), (1, 2), (2, 3)])
        stack = GNNStack([LayerSpec("gcn", 3, 8, activation="tanh"),
                          LayerSpec("gcn", 8, 2)], seed=1)
        out = stack.forward(Tape(), np.random.default_rng(7).standard_normal((4, 3)), g)
        assert out.value.shape == (4, 2)

    def test_row_count_mismatch(self):
        g = Graph(3, [(0, 1)])
        stack = GNNStack([LayerSpec("gcn", 2, 2)])
        with pytest.raises(ShapeError):
            stack.forward(Tape(), np.ones((4, 2)), g)

    def test_width_chain_validated_at_build(self):
        with pytest.raises(ShapeError):
            GNNStack([LayerSpec("dense", 3, 5), LayerSpec("dense", 4, 2)])

    def test_dense_stack_builder(self):
        mlp = dense_stack([3, 8, 2], activation="relu", seed=2)
        assert [s.kind for s in mlp.specs] == ["dense", "dense"]
        assert mlp.specs[-1].activation == "identity"
        assert all(s.use_bias for s in mlp.specs)


class TestPermutationEquivariance:
    def test_gcn_and_filterbank(self):
        rng = np.random.default_rng(8)
        for _ in range(25):
            n = int(rng.integers(2, 13))
            g = random_graph(n, 0.4, rng)
            x = rng.standard_normal((n, 3))
            perm = rng.permutation(n)
            p = permutation_matrix(perm)
            theta = Parameter(rng.standard_normal((3, 2)), "th")
            thetas = [theta, Parameter(rng.standard_normal((3, 2)), "th1")]

            a_hat = gso(g).data
            t = Tape()
            base = gcn_forward(t, a_hat, t.constant(x), theta, None, "relu").value
            permuted = gcn_forward(t, p @ a_hat @ p.T, t.constant(p @ x), theta,
                                   None, "relu").value
            assert np.allclose(permuted, p @ base, atol=1e-10)

            s = gso(g, "adjacency").data
            fb = filterbank_forward(t, s, t.constant(x), thetas, "tanh").value
            fb_p = filterbank_forward(t, p @ s @ p.T, t.constant(p @ x), thetas,
                                      "tanh").value
            assert np.allclose(fb_p, p @ fb, atol=1e-10)


class TestLayerGradients:
    def test_every_layer_kind_passes_grad_check(self):
        rng = np.random.default_rng(9)
        g = random_graph(5, 0.5, rng)
        x = rng.standard_normal((5, 3))
        target = rng.standard_normal((5, 2))
        for kind, order in (("gcn", 1), ("filterbank", 3), ("dense", 1)):
            stack = GNNStack(
                [LayerSpec(kind, 3, 4, activation="tanh", order=order),
                 LayerSpec(kind, 4, 2, activation="identity", order=order)],
                seed=3)

            def loss():
                t = Tape()
                out = stack.forward(t, x, g)
                return t.mean_sq_error(out, t.constant(target))

            assert grad_check(loss, stack.parameters()) < 1e-4, kind
