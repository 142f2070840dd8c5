import numpy as np
import pytest

from grail import autodiff as ad
from grail.autodiff import Tensor, backward
from grail.errors import (AsymmetricAdjacency, NonScalarLoss, ShapeMismatch,
                          ValidationError)

from conftest import assert_grads_match, fd_gradient


class TestTensorBasics:
    def test_leaf_rejects_nan(self):
        with pytest.raises(ValidationError):
            Tensor([1.0, np.nan])

    def test_leaf_rejects_inf(self):
        with pytest.raises(ValidationError):
            Tensor([np.inf])

    def test_grad_initialized_to_zero(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        assert np.array_equal(t.grad, np.zeros(2))

    def test_matmul_identity(self):
        x = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = x @ Tensor(np.eye(2))
        assert np.array_equal(out.data, x.data)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))

    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_softplus_at_zero(self):
        assert ad.softplus(Tensor([0.0])).data[0] == pytest.approx(np.log(2), abs=1e-12)

    def test_nonscalar_loss_rejected(self):
        with pytest.raises(NonScalarLoss):
            backward(Tensor([1.0, 2.0], requires_grad=True) * 2.0)


class TestBackwardAnalytic:
    def test_sum_of_squares(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(ad.tsum(ad.square(x)))
        assert np.allclose(x.grad, [2.0, 4.0, 6.0])

    def test_linear_map_grad(self):
        # loss = sum(A @ x): dL/dA[i, :] = x
        A = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        x = np.array([[1.0], [2.0], [3.0]])
        backward(ad.tsum(A @ Tensor(x)))
        assert np.allclose(A.grad, np.tile(x.T, (2, 1)))

    def test_unreachable_leaf_keeps_zero_grad(self):
        x = Tensor([1.0], requires_grad=True)
        y = Tensor([2.0], requires_grad=True)
        backward(ad.tsum(ad.square(x)))
        assert np.array_equal(y.grad, [0.0])

    def test_backward_accumulates_deterministically(self):
        def run():
            x = Tensor([0.3, -0.7, 1.1], requires_grad=True)
            y = ad.tsum(ad.sigmoid(x) * ad.tanh(x) + ad.softplus(x))
            backward(y)
            return x.grad.copy()

        assert np.array_equal(run(), run())


def _fd_case(build, x0, rtol=1e-4):
    """Check reverse-mode grads of ``build`` (x -> scalar Tensor) at x0."""
    leaf = Tensor(x0, requires_grad=True)
    loss = build(leaf)
    backward(loss)
    numeric = fd_gradient(lambda v: float(build(Tensor(v, requires_grad=True)).data),
                          x0)
    assert_grads_match(leaf.grad, numeric, rtol=rtol)


class TestFiniteDifferences:
    def test_three_layer_composition(self, rng):
        W1 = rng.standard_normal((4, 5))
        W2 = rng.standard_normal((5, 3))
        x0 = rng.standard_normal((2, 4))

        def build(x):
            h = ad.relu(x @ Tensor(W1))
            h = ad.sigmoid(h @ Tensor(W2))
            return ad.tsum(ad.square(h))

        _fd_case(build, x0)

    @pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.softplus, ad.tanh,
                                    ad.exp, ad.square])
    def test_elementwise_ops(self, rng, op):
        _fd_case(lambda x: ad.tsum(op(x)), rng.standard_normal((3, 4)) + 0.1)

    def test_log(self, rng):
        _fd_case(lambda x: ad.tsum(ad.log(x)), rng.random((3, 3)) + 0.5)

    def test_mean_axis_and_broadcast_add(self, rng):
        bias = rng.standard_normal(4)

        def build(x):
            return ad.tmean(ad.square(x + Tensor(bias)))

        _fd_case(build, rng.standard_normal((3, 4)))

    def test_logsumexp(self, rng):
        _fd_case(lambda x: ad.tsum(ad.logsumexp(x, axis=1)),
                 rng.standard_normal((4, 5)))

    def test_amax(self, rng):
        _fd_case(lambda x: ad.tsum(ad.amax(x, axis=1)),
                 rng.standard_normal((4, 5)))

    def test_rows_and_concat(self, rng):
        idx = np.array([2, 0, 2])

        def build(x):
            picked = ad.rows(x, idx)
            both = ad.concat([picked, picked * 2.0], axis=1)
            return ad.tsum(ad.square(both))

        _fd_case(build, rng.standard_normal((4, 3)))

    def test_transpose_matmul(self, rng):
        M = rng.standard_normal((3, 3))

        def build(x):
            return ad.tsum(ad.transpose(x) @ Tensor(M) @ x)

        _fd_case(build, rng.standard_normal((3, 3)))


class TestWeightedMessagePass:
    def test_binary_adjacency_matches_neighbor_sum(self, rng):
        A = np.zeros((4, 4))
        for i, j in [(0, 1), (1, 2), (0, 3)]:
            A[i, j] = A[j, i] = 1
        H = rng.standard_normal((4, 3))
        out = ad.weighted_message_pass(Tensor(A), Tensor(H))
        assert np.allclose(out.data, A @ H)

    def test_zero_adjacency(self, rng):
        out = ad.weighted_message_pass(Tensor(np.zeros((3, 3))),
                                       Tensor(rng.standard_normal((3, 2))))
        assert np.array_equal(out.data, np.zeros((3, 2)))

    def test_asymmetric_rejected(self, rng):
        W = np.array([[0.0, 0.5], [0.4, 0.0]])
        with pytest.raises(AsymmetricAdjacency):
            ad.weighted_message_pass(Tensor(W), Tensor(rng.standard_normal((2, 2))))

    def test_symmetric_pair_gradient_matches_fd(self, rng):
        # Perturbing W[i,j] and W[j,i] together: dL/dh = g[i,j] + g[j,i],
        # i.e. twice the symmetrized gradient entry.
        n = 6
        W0 = rng.random((n, n))
        W0 = (W0 + W0.T) / 2
        np.fill_diagonal(W0, 0.0)
        H = rng.standard_normal((n, 3))

        def loss_of(Wv):
            return ad.tsum(ad.square(ad.weighted_message_pass(
                Tensor(Wv, requires_grad=True), Tensor(H))))

        W = Tensor(W0, requires_grad=True)
        loss = ad.tsum(ad.square(ad.weighted_message_pass(W, Tensor(H))))
        backward(loss)
        sym = (W.grad + W.grad.T) / 2
        h = 1e-5
        for i, j in [(0, 1), (2, 5), (3, 4)]:
            bump = np.zeros((n, n))
            bump[i, j] = bump[j, i] = h
            numeric = (float(loss_of(W0 + bump).data)
                       - float(loss_of(W0 - bump).data)) / (2 * h)
            assert_grads_match(np.array([2 * sym[i, j]]), np.array([numeric]))
