import unittest
import pytest

import numpy as np

from skull2face.nn.tensor import Tensor
from skull2face.nn import functional as F


class TestTensorAdd(unittest.TestCase):
    def test_simple_add(self):
        t1 = Tensor([1, 2, 3], requires_grad=True)
        t2 = Tensor([4, 5, 6], requires_grad=True)

        t3 = t1 + t2

        assert t3.data.tolist() == [5, 7, 9]

        t3.backward(Tensor([-1., -2., -3.]))

        assert t1.grad.data.tolist() == [-1, -2, -3]
        assert t2.grad.data.tolist() == [-1, -2, -3]

        t1 += 0.1
        assert t1.grad is None
        np.testing.assert_allclose(t1.data, [1.1, 2.1, 3.1])

    def test_broadcast_add(self):
        # (2, 3) + (3,): t2 is viewed as (1, 3) and its gradient summed over rows
        t1 = Tensor([[1, 2, 3], [4, 5, 6]], requires_grad=True)
        t2 = Tensor([7, 8, 9], requires_grad=True)

        t3 = t1 + t2

        assert t3.data.tolist() == [[8, 10, 12], [11, 13, 15]]

        t3.backward(Tensor([[1, 1, 1], [1, 1, 1]]))

        assert t1.grad.data.tolist() == [[1, 1, 1], [1, 1, 1]]
        assert t2.grad.data.tolist() == [2, 2, 2]

    def test_broadcast_add_keepdim(self):
        t1 = Tensor([[1, 2, 3], [4, 5, 6]], requires_grad=True)
        t2 = Tensor([[7, 8, 9]], requires_grad=True)

        t3 = t1 + t2
        t3.backward(Tensor([[1, 1, 1], [1, 1, 1]]))

        assert t2.grad.data.tolist() == [[2, 2, 2]]

    def test_float64(self):
        assert Tensor([1, 2, 3]).data.dtype == np.float64


class TestTensorArithmetic(unittest.TestCase):
    def test_sub(self):
        t1 = Tensor([1, 2, 3], requires_grad=True)
        t2 = Tensor([4, 5, 6], requires_grad=True)
        t3 = t1 - t2
        assert t3.data.tolist() == [-3, -3, -3]
        t3.backward(Tensor([1., 2., 3.]))
        assert t1.grad.data.tolist() == [1, 2, 3]
        assert t2.grad.data.tolist() == [-1, -2, -3]

    def test_mul(self):
        t1 = Tensor([1, 2, 3], requires_grad=True)
        t2 = Tensor([4, 5, 6], requires_grad=True)
        t3 = t1 * t2
        assert t3.data.tolist() == [4, 10, 18]
        t3.backward(Tensor([-1., -2., -3.]))
        assert t1.grad.data.tolist() == [-4, -10, -18]
        assert t2.grad.data.tolist() == [-1, -4, -9]

    def test_div(self):
        t1 = Tensor([2., 4.], requires_grad=True)
        t2 = Tensor([1., 2.], requires_grad=True)
        t3 = t1 / t2
        assert t3.data.tolist() == [2, 2]
        t3.backward(Tensor([1., 1.]))
        assert t1.grad.data.tolist() == [1, 0.5]
        assert t2.grad.data.tolist() == [-2, -1]

    def test_matmul(self):
        t1 = Tensor([[1, 2], [3, 4], [5, 6]], requires_grad=True)
        t2 = Tensor([[10], [20]], requires_grad=True)

        t3 = t1 @ t2

        assert t3.data.tolist() == [[50], [110], [170]]

        grad = Tensor([[-1], [-2], [-3]])
        t3.backward(grad)

        np.testing.assert_array_equal(t1.grad.data, grad.data @ t2.data.T)
        np.testing.assert_array_equal(t2.grad.data, t1.data.T @ grad.data)

    def test_matmul_needs_2d(self):
        with pytest.raises(TypeError):
            Tensor([1., 2.]) @ Tensor([[1.], [2.]])

    def test_shared_input(self):
        # x used on two paths: gradients from both accumulate
        x = Tensor([3.], requires_grad=True)
        y = (x * x + x).sum()
        y.backward()
        assert x.grad.data.tolist() == [7]


class TestTensorSum(unittest.TestCase):
    def test_simple_sum(self):
        t1 = Tensor([1, 2, 3], requires_grad=True)
        t2 = t1.sum()

        t2.backward()

        assert t1.grad.data.tolist() == [1, 1, 1]

    def test_sum_with_grad(self):
        t1 = Tensor([1, 2, 3], requires_grad=True)
        t1.sum().backward(Tensor(3))

        assert t1.grad.data.tolist() == [3, 3, 3]

    def test_sum_along_axis(self):
        t1 = Tensor(np.arange(3**4).reshape(3, 3, 3, 3), requires_grad=True)
        t2 = t1.sum(axis=1)

        t2.backward(Tensor([[[1, 2, 3] for _ in range(3)] for _ in range(3)]))

        assert t1.grad.data.tolist() == [[[[1, 2, 3] for _ in range(3)] for _ in range(3)] for _ in range(3)]

    def test_mean(self):
        t1 = Tensor([1., 2., 3., 6.], requires_grad=True)
        t2 = t1.mean()
        assert t2.item() == 3.
        t2.backward()
        assert t1.grad.data.tolist() == [0.25] * 4

    def test_backward_needs_grad(self):
        with pytest.raises(RuntimeError):
            Tensor([1., 2.]).backward()
        with pytest.raises(RuntimeError):
            Tensor([1., 2.], requires_grad=True).backward()


class TestTensorReLU(unittest.TestCase):
    def test_relu(self):
        t1 = Tensor(np.arange(25).reshape(5, 5) - 10, requires_grad=True)
        t2 = t1.relu()
        assert t2.data.max() == 14 and t2.data.min() == 0
        t2.sum().backward()
        np.testing.assert_array_equal(t1.grad.data, (t1.data > 0).astype(np.float64))

    def test_kink_has_zero_gradient(self):
        t1 = Tensor([0.], requires_grad=True)
        t1.relu().sum().backward()
        assert t1.grad.data.tolist() == [0]


class TestTensorSlice(unittest.TestCase):
    def test_fancy_index_accumulates(self):
        t1 = Tensor([[1., 2.], [3., 4.]], requires_grad=True)
        t2 = t1[np.array([0, 0, 1])]
        assert t2.shape == (3, 2)
        t2.sum().backward()
        assert t1.grad.data.tolist() == [[2, 2], [1, 1]]


class TestFunctional(unittest.TestCase):
    def test_squared_distance(self):
        u = Tensor([[0., 0.], [1., 1.]], requires_grad=True)
        v = Tensor([[3., 4.], [1., 1.]])
        d = F.squared_distance(u, v)
        assert d.data.tolist() == [25, 0]
        d.sum().backward()
        assert u.grad.data.tolist() == [[-6, -8], [0, 0]]

    def test_euclidean_distance_at_zero(self):
        u = Tensor([[1., 1.]], requires_grad=True)
        d = F.euclidean_distance(u, Tensor([[1., 1.]]))
        d.sum().backward()
        assert d.data.tolist() == [0]
        assert np.isfinite(u.grad.data).all()

    def test_l2_normalize(self):
        t = Tensor([[3., 4.], [0., 0.]], requires_grad=True)
        out = F.l2_normalize(t)
        np.testing.assert_allclose(out.data, [[0.6, 0.8], [0., 0.]])
        out.backward(Tensor([[1., 0.], [1., 1.]]))
        # (g - y (y.g)) / |x| with y = (0.6, 0.8), g = (1, 0)
        np.testing.assert_allclose(t.grad.data[0], [(1 - 0.36) / 5, -0.48 / 5])
        assert t.grad.data[1].tolist() == [0, 0]

    def test_triplet_margin_loss_inactive(self):
        a = Tensor([[0., 0.]], requires_grad=True)
        p = Tensor([[0., 0.]])
        n = Tensor([[1., 0.]])
        loss = F.triplet_margin_loss(a, p, n, alpha=0.5)
        assert loss.item() == 0.
        loss.backward()
        assert a.grad.data.tolist() == [[0, 0]]
