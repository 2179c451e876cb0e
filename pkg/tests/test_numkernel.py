import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resonant_gnn import numkernel as nk
from resonant_gnn.errors import ShapeError
from resonant_gnn.numkernel import Tape, Tensor

small = arrays(np.float64, (3, 3), elements=st.floats(-1, 1))


class TestMatmul:
    def test_identity_left(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.matmul(np.eye(2), b).value, b)

    def test_zero_left(self):
        b = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.matmul(np.zeros((2, 2)), b).value, np.zeros((2, 2)))

    def test_hand_value(self):
        out = nk.matmul([[1, 2], [3, 4]], [[1], [1]])
        np.testing.assert_array_equal(out.value, [[3], [7]])

    def test_inner_mismatch(self):
        with pytest.raises(ShapeError):
            nk.matmul(np.ones((2, 3)), np.ones((2, 3)))

    @given(small, small, small)
    def test_associativity(self, a, b, c):
        left = nk.matmul(nk.matmul(a, b), c).value
        right = nk.matmul(a, nk.matmul(b, c)).value
        np.testing.assert_allclose(left, right, atol=1e-10)


class TestActivation:
    def test_sigmoid_zero(self):
        assert nk.activation([[0.0]], "sigmoid").item() == 0.5

    def test_relu_negative(self):
        assert nk.activation([[-3.0]], "relu").item() == 0.0

    def test_sigmoid_log3(self):
        assert nk.activation([[np.log(3.0)]], "sigmoid").item() == pytest.approx(0.75, abs=1e-15)

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = nk.activation([[-1000.0, 1000.0]], "sigmoid").value
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[0.0, 1.0]])

    def test_relu_gradient_at_zero_is_zero(self):
        tape = Tape()
        x = tape.leaf([[0.0, 1.0, -1.0]])
        g = nk.backward(tape, nk.sum_all(nk.activation(x, "relu")))[x]
        np.testing.assert_array_equal(g, [[0.0, 1.0, 0.0]])

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            nk.activation([[1.0]], "tanh")


class TestConcatMean:
    def test_single_part(self):
        a = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(nk.concat_rows([a]).value, a)

    def test_two_parts(self):
        np.testing.assert_array_equal(nk.concat_rows([[[1, 2]], [[3, 4]]]).value, [[1, 2], [3, 4]])

    def test_column_mismatch(self):
        with pytest.raises(ShapeError):
            nk.concat_rows([np.ones((1, 2)), np.ones((1, 3))])

    @pytest.mark.parametrize("x, expected", [
        ([[2, 4]], [[2, 4]]),
        ([[0, 0], [2, 2]], [[1, 1]]),
        ([[1, 2], [3, 4], [5, 6]], [[3, 4]]),
    ])
    def test_mean_rows(self, x, expected):
        np.testing.assert_array_equal(nk.mean_rows(x).value, expected)

    def test_mean_of_empty(self):
        with pytest.raises(ShapeError):
            nk.mean_rows(np.zeros((0, 2)))


class TestRowRearrange:
    def test_definition(self):
        zw = [[1, 2], [3, 4], [5, 6]]
        np.testing.assert_array_equal(nk.row_rearrange_Q(zw, 0, 2).value, [[5, 6], [0, 0], [1, 2]])

    def test_zero(self):
        np.testing.assert_array_equal(nk.row_rearrange_Q(np.zeros((4, 2)), 1, 3).value, np.zeros((4, 2)))

    @pytest.mark.parametrize("j, k", [(1, 1), (0, 3), (-1, 0)])
    def test_bad_indices(self, j, k):
        with pytest.raises(IndexError):
            nk.row_rearrange_Q(np.ones((3, 2)), j, k)

    @given(arrays(np.float64, (5, 2), elements=st.floats(0.5, 2)), st.integers(0, 4), st.integers(0, 4))
    def test_two_nonzero_rows(self, zw, j, k):
        if j == k:
            return
        q = nk.row_rearrange_Q(zw, j, k).value
        assert np.count_nonzero(np.abs(q).sum(axis=1)) == 2

    def test_equals_swap_matrix_product(self):
        zw = np.random.default_rng(0).normal(size=(4, 3))
        d = np.zeros((4, 4))
        d[1, 3] = d[3, 1] = 1.0
        np.testing.assert_array_equal(nk.row_rearrange_Q(zw, 1, 3).value, d @ zw)


class TestBackward:
    def test_sum(self):
        tape = Tape()
        w = tape.leaf(np.arange(4.0).reshape(2, 2))
        np.testing.assert_array_equal(nk.backward(tape, nk.sum_all(w))[w], np.ones((2, 2)))

    def test_sum_of_squares(self):
        tape = Tape()
        w = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(nk.backward(tape, nk.sum_all(w * w))[w], [[2, 4], [6, 8]])

    def test_non_scalar_loss(self):
        tape = Tape()
        w = tape.leaf(np.ones((2, 2)))
        with pytest.raises(ShapeError):
            nk.backward(tape, w * 2.0)

    def test_unreached_leaf_gets_zero_gradient(self):
        tape = Tape()
        a = tape.leaf(np.ones((2, 3)))
        b = tape.leaf(np.ones((3, 1)))
        grads = nk.backward(tape, nk.sum_all(a))
        np.testing.assert_array_equal(grads[b], np.zeros((3, 1)))
        assert set(tape.gradients) == {a.handle, b.handle}

    def test_tape_topological_order(self):
        tape = Tape()
        a = tape.leaf(np.ones((2, 2)))
        nk.sum_all(nk.activation(a @ a, "sigmoid"))
        for i, node in enumerate(tape.nodes):
            assert all(h < i for h in node.inputs)

    def test_untracked_ops_leave_no_trace(self):
        out = nk.matmul(np.ones((2, 2)), np.ones((2, 2)))
        assert not out.tracked

    def test_values_are_immutable(self):
        t = Tensor([[1.0, 2.0]])
        with pytest.raises(ValueError):
            t.value[0, 0] = 5.0


def composite(x):
    h = nk.activation(nk.matmul(x, x.T), "sigmoid")
    h = nk.concat_rows([h, nk.scale(x, 0.5)])
    h = nk.mean_rows(nk.mul(h, h))
    z = nk.add(nk.gather_rows(x, [0, 0, 2]), nk.row_rearrange_Q(x, 0, 1))
    return nk.add(nk.sum_all(h), nk.sum_all(nk.power(nk.add(nk.row_sums(z), 5.0), 2.0)))


class TestFiniteDifferences:
    def test_linear(self):
        x = np.random.default_rng(1).uniform(-1, 1, (3, 3))
        assert nk.finite_diff_check(nk.sum_all, x) < 1e-10

    def test_squares(self):
        x = np.random.default_rng(2).uniform(-1, 1, (3, 3))
        assert nk.finite_diff_check(lambda t: nk.sum_all(t * t), x) < 1e-6

    def test_sigmoid_chain(self):
        x = np.random.default_rng(3).uniform(-1, 1, (3, 3))
        f = lambda t: nk.sum_all(nk.activation(nk.activation(t @ t, "sigmoid") @ t, "sigmoid"))
        assert nk.finite_diff_check(f, x) < 1e-4

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_composite_graph(self, seed):
        x = np.random.default_rng(seed).uniform(-1, 1, (3, 3))
        assert nk.finite_diff_check(composite, x) < 1e-4

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(4)
        targets = np.eye(3)[[0, 2, 1, 1]]
        weights = np.array([1.0, 0.0, 2.0, 1.0])
        x = rng.uniform(-1, 1, (4, 3))
        assert nk.finite_diff_check(lambda t: nk.softmax_cross_entropy(t, targets, weights), x) < 1e-4

    def test_soft_targets(self):
        x = np.random.default_rng(5).uniform(-1, 1, (3, 2))
        targets = np.array([[0.25, 0.75], [0.5, 0.5], [1.0, 0.0]])
        assert nk.finite_diff_check(lambda t: nk.softmax_cross_entropy(t, targets), x) < 1e-4


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = nk.softmax_cross_entropy(np.zeros((2, 4)), np.eye(4)[[0, 3]])
        assert loss.item() == pytest.approx(np.log(4.0))

    def test_zero_weights_give_zero_loss(self):
        assert nk.softmax_cross_entropy(np.ones((2, 2)), np.eye(2), [0.0, 0.0]).item() == 0.0

    def test_target_shape_mismatch(self):
        with pytest.raises(ShapeError):
            nk.softmax_cross_entropy(np.ones((2, 2)), np.ones((2, 3)))
