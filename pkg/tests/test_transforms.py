"""Latent transform semantics: every variant against its brute-force oracle."""

import numpy as np
import pytest

from twograph import (
    NodeMap,
    Parameter,
    ParameterError,
    ShapeError,
    Tape,
    grad_check,
    unvec,
    vec,
)
from twograph.transforms import (
    CopyCommonTransform,
    DenseVecTransform,
    IdentityTransform,
    KroneckerProductTransform,
    KroneckerSumTransform,
    LinearNodeTransform,
    LowRankVecTransform,
    RowMlpTransform,
    SelectionKnnTransform,
    TransposeTransform,
    symmetric_project,
    transform_from_spec,
)


class TestVecUnvec:
    def test_column_major_order(self):
        assert vec([[1.0, 2.0], [3.0, 4.0]]).flat() == [1.0, 3.0, 2.0, 4.0]

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((3, 5))
        assert np.array_equal(unvec(vec(m), 3, 5).data, m)

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            unvec(np.ones((5, 1)), 2, 3)

    def test_kronecker_identity(self):
        """vec(A B C) = (C^T kron A) vec(B) on random 2x2x2 cases."""
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b, c = (rng.standard_normal((2, 2)) for _ in range(3))
            lhs = vec(a @ b @ c).data
            rhs = np.kron(c.T, a) @ vec(b).data
            assert np.allclose(lhs, rhs, atol=1e-12)


class TestTranspose:
    def test_definition(self):
        t = Tape()
        out = TransposeTransform().apply(t, [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(out.value, [[1.0, 3.0, 5.0], [2.0, 4.0, 6.0]])

    def test_involution(self):
        rng = np.random.default_rng(2)
        z = rng.standard_normal((4, 7))
        t = Tape()
        tr = TransposeTransform()
        assert np.array_equal(tr.apply(t, tr.apply(t, z)).value, z)


class TestLinearNode:
    def test_identity_weights(self):
        tr = LinearNodeTransform(3, 3, init="identity")
        rng = np.random.default_rng(3)
        z = rng.standard_normal((3, 2))
        assert np.array_equal(tr.apply(Tape(), z).value, z)

    def test_matches_left_multiplication(self):
        tr = LinearNodeTransform(4, 2, seed=5)
        z = np.random.default_rng(4).standard_normal((4, 3))
        out = tr.apply(Tape(), z)
        assert np.allclose(out.value, tr.w_n.value @ z)

    def test_identity_init_requires_square(self):
        with pytest.raises(ParameterError):
            LinearNodeTransform(3, 2, init="identity")


class TestKronecker:
    def test_product_matches_vec_oracle(self):
        rng = np.random.default_rng(5)
        tr = KroneckerProductTransform(3, 4, 2, 5, seed=6)
        z = rng.standard_normal((3, 2))
        got = tr.apply(Tape(), z).value
        w = np.kron(tr.w_f.value, tr.w_n.value)
        want = unvec(w @ vec(z).data, 4, 5).data
        assert np.allclose(got, want, atol=1e-10)

    def test_product_agrees_with_dense_vec_small_shapes(self):
        rng = np.random.default_rng(6)
        for n_in, n_out, f_in, f_out in [(2, 3, 2, 2), (4, 5, 3, 2), (5, 5, 5, 5)]:
            tr = KroneckerProductTransform(n_in, n_out, f_in, f_out, seed=7)
            dv = DenseVecTransform(n_in, f_in, n_out, f_out, seed=8)
            dv.w.value[:] = np.kron(tr.w_f.value, tr.w_n.value)
            z = rng.standard_normal((n_in, f_in))
            assert np.allclose(tr.apply(Tape(), z).value,
                               dv.apply(Tape(), z).value, atol=1e-10)

    def test_sum_definition(self):
        rng = np.random.default_rng(7)
        tr = KroneckerSumTransform(3, 2, seed=9)
        z = rng.standard_normal((3, 2))
        want = tr.w_n.value @ z + z @ tr.w_f.value.T
        assert np.allclose(tr.apply(Tape(), z).value, want)

    def test_sum_requires_matching_shape(self):
        tr = KroneckerSumTransform(3, 2)
        with pytest.raises(ShapeError):
            tr.apply(Tape(), np.ones((2, 2)))


class TestLowRankAndDenseVec:
    def test_low_rank_equals_dense_product(self):
        rng = np.random.default_rng(8)
        tr = LowRankVecTransform(3, 2, 2, 3, k=2, seed=10)
        dv = DenseVecTransform(3, 2, 2, 3, seed=11)
        dv.w.value[:] = tr.w_y.value @ tr.w_x.value.T
        z = rng.standard_normal((3, 2))
        assert np.allclose(tr.apply(Tape(), z).value,
                           dv.apply(Tape(), z).value, atol=1e-12)

    def test_frozen_factor_excluded_from_parameters(self):
        tr = LowRankVecTransform(2, 2, 2, 2, k=1, learn_x=False)
        assert [p.name for p in tr.parameters()] == ["psi_z.w_y"]

    def test_inner_activation_applies_between_factors(self):
        rng = np.random.default_rng(9)
        tr = LowRankVecTransform(2, 2, 2, 2, k=3, seed=12,
                                 inner_activation="tanh")
        z = rng.standard_normal((2, 2))
        code = tr.w_x.value.T @ vec(z).data
        want = unvec(tr.w_y.value @ np.tanh(code), 2, 2).data
        assert np.allclose(tr.apply(Tape(), z).value, want)

    def test_symmetric_project_identity_factors(self):
        tr = LowRankVecTransform(2, 2, 2, 2, k=4)
        tr.w_x.value[:] = np.eye(4)
        tr.w_y.value[:] = np.eye(4)
        rng = np.random.default_rng(10)
        z = rng.standard_normal((2, 2))
        cx, cy = symmetric_project(tr, Tape(), z, z)
        assert np.array_equal(cx.value, cy.value)
        assert cx.value.shape == (1, 4)

    def test_symmetric_project_zero_side(self):
        tr = LowRankVecTransform(2, 2, 3, 2, k=2, seed=13)
        rng = np.random.default_rng(11)
        cx, cy = symmetric_project(tr, Tape(), np.zeros((2, 2)),
                                   rng.standard_normal((3, 2)))
        assert np.all(cx.value == 0)

    def test_symmetric_project_matches_composition(self):
        rng = np.random.default_rng(12)
        tr = LowRankVecTransform(3, 2, 2, 2, k=2, seed=14)
        z_x = rng.standard_normal((3, 2))
        z_y = rng.standard_normal((2, 2))
        cx, cy = symmetric_project(tr, Tape(), z_x, z_y)
        assert np.allclose(cx.value, (tr.w_x.value.T @ vec(z_x).data).T)
        assert np.allclose(cy.value, (tr.w_y.value.T @ vec(z_y).data).T)

    def test_wrong_variant_rejected(self):
        with pytest.raises(ParameterError):
            symmetric_project(IdentityTransform(), Tape(), np.ones((1, 1)),
                              np.ones((1, 1)))


class TestCopyCommon:
    def test_empty_map_is_zero(self):
        tr = CopyCommonTransform(NodeMap([]), n_in=3, n_out=4)
        out = tr.apply(Tape(), np.ones((3, 2)))
        assert out.value.shape == (4, 2)
        assert np.all(out.value == 0)

    def test_mapped_rows_bit_exact_rest_zero(self):
        rng = np.random.default_rng(13)
        z = rng.standard_normal((4, 3))
        tr = CopyCommonTransform(NodeMap([(0, 2), (3, 0)]), n_in=4, n_out=5)
        out = tr.apply(Tape(), z).value
        assert np.array_equal(out[2], z[0])
        assert np.array_equal(out[0], z[3])
        assert np.all(out[[1, 3, 4]] == 0)


class TestSelectionKnn:
    def test_equidistant_pair_averages(self):
        coords_in = np.array([[0.0, 0.0], [2.0, 0.0]])
        coords_out = np.array([[1.0, 0.0]])
        tr = SelectionKnnTransform(coords_in, coords_out, k=2)
        z = np.array([[1.0, 5.0], [3.0, 7.0]])
        assert np.allclose(tr.apply(Tape(), z).value, [[2.0, 6.0]])

    def test_k_exceeding_inputs_rejected(self):
        with pytest.raises(ParameterError):
            SelectionKnnTransform(np.zeros((2, 1)), np.zeros((1, 1)), k=3)

    def test_tie_break_by_ascending_id(self):
        # nodes 1 and 2 tie at distance 1; id 1 wins the single slot
        coords_in = np.array([[5.0], [1.0], [-1.0]])
        coords_out = np.array([[0.0]])
        tr = SelectionKnnTransform(coords_in, coords_out, k=1)
        z = np.array([[10.0], [20.0], [30.0]])
        assert tr.apply(Tape(), z).value[0, 0] == 20.0

    def test_outputs_inside_input_hull(self):
        rng = np.random.default_rng(14)
        tr = SelectionKnnTransform(rng.random((6, 2)), rng.random((4, 2)), k=3)
        z = rng.standard_normal((6, 3))
        out = tr.apply(Tape(), z).value
        for col in range(3):
            assert np.all(out[:, col] >= z[:, col].min() - 1e-12)
            assert np.all(out[:, col] <= z[:, col].max() + 1e-12)


class TestRowMlp:
    def test_single_linear_layer_matches_left_matmul(self):
        tr = RowMlpTransform([4, 3], seed=15)
        rng = np.random.default_rng(15)
        z = rng.standard_normal((4, 2))
        theta = tr.stack.layer_params[0]["theta"].value
        bias = tr.stack.layer_params[0]["bias"].value
        want = (z.T @ theta + bias).T
        assert np.allclose(tr.apply(Tape(), z).value, want)

    def test_output_rows(self):
        tr = RowMlpTransform([5, 8, 3], seed=16)
        out = tr.apply(Tape(), np.random.default_rng(16).standard_normal((5, 4)))
        assert out.value.shape == (3, 4)


class TestDifferentiability:
    """Every learnable variant: gradients w.r.t. inputs and parameters."""

    @pytest.mark.parametrize("make", [
        lambda: LinearNodeTransform(3, 4, seed=20),
        lambda: KroneckerProductTransform(3, 4, 2, 3, seed=21),
        lambda: KroneckerSumTransform(3, 2, seed=22),
        lambda: LowRankVecTransform(3, 2, 4, 3, k=2, seed=23),
        lambda: LowRankVecTransform(3, 2, 4, 3, k=2, seed=23,
                                    inner_activation="tanh"),
        lambda: DenseVecTransform(3, 2, 4, 3, seed=24),
        lambda: RowMlpTransform([3, 5, 4], seed=25),
    ])
    def test_grad_check(self, make):
        tr = make()
        z = Parameter(np.random.default_rng(26).standard_normal((3, 2)), "z")

        def loss():
            t = Tape()
            return t.frobenius_sq(tr.apply(t, t.param(z)))

        assert grad_check(loss, [z] + tr.parameters()) < 1e-4

    def test_fixed_transforms_pass_input_gradients(self):
        z = Parameter(np.random.default_rng(27).standard_normal((3, 2)), "z")
        for tr in (TransposeTransform(), IdentityTransform(),
                   CopyCommonTransform(NodeMap([(0, 1), (2, 0)]), 3, 4)):
            def loss():
                t = Tape()
                return t.frobenius_sq(tr.apply(t, t.param(z)))

            assert grad_check(loss, [z]) < 1e-6


class TestFactory:
    def test_roundtrip_through_describe(self):
        rng = np.random.default_rng(28)
        z = rng.standard_normal((3, 2))
        originals = [
            IdentityTransform(),
            TransposeTransform(),
            CopyCommonTransform(NodeMap([(1, 0)]), 3, 2),
            SelectionKnnTransform(rng.random((3, 2)), rng.random((2, 2)), k=2),
        ]
        for tr in originals:
            rebuilt = transform_from_spec(tr.describe())
            assert np.allclose(rebuilt.apply(Tape(), z).value,
                               tr.apply(Tape(), z).value)
