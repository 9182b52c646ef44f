import unittest
import pytest

import numpy as np

from skull2face.nn import Dataloader, Linear, Module, Parameter, ReLU, SGD, Tensor, TripletLoss


class MyModule(Module):
    def __init__(self):
        super().__init__()
        self.param_1 = Parameter(5, 5, rng=np.random.default_rng(0))
        self.param_3 = Parameter(5, rng=np.random.default_rng(1))
        self.moddy = Linear(5, 3, rng=np.random.default_rng(2))

    def forward(self, x):
        return self.moddy(x @ self.param_1 + self.param_3)


class TestModule(unittest.TestCase):
    def test_named_parameters(self):
        mod = MyModule()
        names = [name for name, _ in mod.named_parameters()]
        assert names == ['param_1', 'param_3', 'moddy.weight', 'moddy.bias']

    def test_zero_grad(self):
        mod = MyModule()
        for parameter in mod.parameters():
            assert parameter.grad.data.max() == 0
        optim = SGD(mod.parameters(), lr=0.1)
        output = mod(Tensor([[1., 1., 1., 1., 1.]]))
        (output / 2).sum().backward()
        assert any(np.abs(p.grad.data).max() > 0 for p in mod.parameters())
        optim.step()
        mod.zero_grad()
        for name, parameter in mod.named_parameters():
            assert parameter.grad.data.max() == 0, name

    def test_sgd_step(self):
        p = Parameter(data=[1., 2.])
        (p * Tensor([3., -1.])).sum().backward()
        SGD([p], lr=0.5).step()
        assert p.data.tolist() == [-0.5, 2.5]

    def test_sgd_rejects_negative_lr(self):
        with pytest.raises(ValueError):
            SGD([Parameter(data=[1.])], lr=-0.1)

    def test_optimizer_needs_parameters(self):
        with pytest.raises(TypeError):
            SGD(MyModule().parameters)
        with pytest.raises(ValueError):
            SGD([])

    def test_state_dict_round_trip(self):
        a, b = MyModule(), MyModule()
        b.param_1.data = np.zeros((5, 5))
        b.load_state_dict(a.state_dict())
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)

    def test_load_state_dict_mismatch(self):
        mod = MyModule()
        state = mod.state_dict()
        del state['param_3']
        with pytest.raises(KeyError):
            mod.load_state_dict(state)
        state = mod.state_dict()
        state['param_3'] = np.zeros(4)
        with pytest.raises(ValueError):
            mod.load_state_dict(state)

    def test_copy_is_independent(self):
        mod = MyModule()
        clone = mod.copy()
        clone.param_3.data = clone.param_3.data + 1.
        assert not np.array_equal(mod.param_3.data, clone.param_3.data)

    def test_train_eval(self):
        mod = MyModule()
        mod.eval()
        assert not mod.training and not mod.moddy.training
        mod.train()
        assert mod.training and mod.moddy.training

    def test_forward_unimplemented(self):
        with pytest.raises(NotImplementedError):
            Module()(Tensor([1.]))


class TestLinear(unittest.TestCase):
    def test_shapes(self):
        lin = Linear(4, 3, rng=np.random.default_rng(0))
        assert lin.weight.shape == (3, 4) and lin.bias.shape == (3,)
        assert lin(Tensor(np.ones((2, 4)))).shape == (2, 3)
        assert lin.bias.data.tolist() == [0, 0, 0]

    def test_init_scale(self):
        lin = Linear(400, 300, rng=np.random.default_rng(0))
        assert abs(lin.weight.data.std() - np.sqrt(1 / 400)) < 0.002

    def test_seeded_init(self):
        a = Linear(4, 3, rng=np.random.default_rng(7))
        b = Linear(4, 3, rng=np.random.default_rng(7))
        np.testing.assert_array_equal(a.weight.data, b.weight.data)

    def test_relu_module(self):
        out = ReLU()(Tensor([[-1., 2.]]))
        assert out.data.tolist() == [[0, 2]]


class TestDataloader(unittest.TestCase):
    def test_batches_cover_everything(self):
        loader = Dataloader(10, 4, shuffle=True, rng=np.random.default_rng(0))
        batches = list(loader)
        assert len(loader) == 3 and [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_in_order_without_shuffle(self):
        batches = list(Dataloader(5, 2))
        assert [b.tolist() for b in batches] == [[0, 1], [2, 3], [4]]

    def test_shuffle_needs_rng(self):
        with pytest.raises(ValueError):
            Dataloader(5, 2, shuffle=True)
        with pytest.raises(ValueError):
            Dataloader(5, 0)


class TestTripletLoss(unittest.TestCase):
    def test_margin_must_be_positive(self):
        with pytest.raises(ValueError):
            TripletLoss(0.)

    def test_value(self):
        loss = TripletLoss(0.2)(Tensor([[0., 0.]]), Tensor([[1., 0.]]), Tensor([[0., 1.]]))
        assert loss.item() == pytest.approx(0.2)
