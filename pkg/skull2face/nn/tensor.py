'''Reverse-mode automatic differentiation over float64 numpy arrays'''

import numpy as np
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

Array_like = Union[float, list, tuple, np.ndarray]
Tensorable = Union['Tensor', float, np.ndarray]


def ensure_array(array_like: Array_like) -> np.ndarray:
    # everything is float64 so that training runs are bit-reproducible
    return np.asarray(array_like, dtype=np.float64)


def ensure_tensor(tensorable: Tensorable) -> 'Tensor':
    if isinstance(tensorable, Tensor):
        return tensorable
    return Tensor(tensorable)


class Node(NamedTuple):
    tensor: 'Tensor'
    grad_fn: Callable[[np.ndarray], np.ndarray]


class Tensor:
    def __init__(self,
                 data: Array_like,
                 requires_grad: bool = False,
                 parent_nodes: Optional[List[Node]] = None) -> None:
        self.data = ensure_array(data)
        self.requires_grad = requires_grad
        self.parent_nodes = parent_nodes or []
        self.grad: Optional['Tensor'] = None

        if self.requires_grad:
            self.zero_grad()

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value: np.ndarray) -> None:
        self._data = value
        # setting data invalidates the tensor gradient
        self.grad = None

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> 'Tensor':
        return _transpose(self)

    def __repr__(self) -> str:
        if self.data.size > 25:
            return (f"Tensor((min,max)={self.data.min(), self.data.max()}, shape={self.shape}, "
                    f"requires_grad={self.requires_grad})")
        return f"Tensor({self.data}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0] if self.ndim else 1

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data)

    def __add__(self, other: Tensorable) -> 'Tensor':
        return _add(self, ensure_tensor(other))

    def __radd__(self, other: Tensorable) -> 'Tensor':
        return _add(ensure_tensor(other), self)

    def __iadd__(self, other: Tensorable) -> 'Tensor':
        self.data = self.data + ensure_tensor(other).data
        return self

    def __neg__(self) -> 'Tensor':
        return _neg(self)

    def __sub__(self, other: Tensorable) -> 'Tensor':
        return _add(self, _neg(ensure_tensor(other)))

    def __rsub__(self, other: Tensorable) -> 'Tensor':
        return _add(ensure_tensor(other), _neg(self))

    def __isub__(self, other: Tensorable) -> 'Tensor':
        self.data = self.data - ensure_tensor(other).data
        return self

    def __mul__(self, other: Tensorable) -> 'Tensor':
        return _multiply(self, ensure_tensor(other))

    def __rmul__(self, other: Tensorable) -> 'Tensor':
        return _multiply(ensure_tensor(other), self)

    def __truediv__(self, other: Tensorable) -> 'Tensor':
        return _truediv(self, ensure_tensor(other))

    def __rtruediv__(self, other: Tensorable) -> 'Tensor':
        return _truediv(ensure_tensor(other), self)

    def __matmul__(self, other: 'Tensor') -> 'Tensor':
        return _matmul(self, ensure_tensor(other))

    def __pow__(self, other: int) -> 'Tensor':
        if other != 2:
            raise NotImplementedError("only squaring is supported")
        return self * self

    def __getitem__(self, idxs) -> 'Tensor':
        return _slice(self, idxs)

    def zero_grad(self) -> None:
        self.grad = Tensor(np.zeros(self.data.shape))

    def backward(self, grad: Optional['Tensor'] = None) -> None:
        if not self.requires_grad:
            raise RuntimeError("called backward on a tensor that doesn't require gradient")
        if grad is None:
            if self.shape == ():
                grad = Tensor(1.)
            else:
                raise RuntimeError('grad must be specified for a non-0-dim tensor')
        if self.grad is None:
            self.zero_grad()
        self.grad.data = self.grad.data + grad.data  # type: ignore

        for parent in self.parent_nodes:
            backward_grad = parent.grad_fn(grad.data)
            parent.tensor.backward(Tensor(backward_grad))

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> 'Tensor':
        return _tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None) -> 'Tensor':
        count = self.size if axis is None else self.shape[axis]
        return _tensor_sum(self, axis=axis) * (1. / count)

    def relu(self) -> 'Tensor':
        return _relu(self)

    def sqrt(self) -> 'Tensor':
        return _sqrt(self)

    def transpose(self) -> 'Tensor':
        return _transpose(self)


'''==============================TENSOR FUNCTIONS=============================='''

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # sum out dims numpy added in front, then dims that were broadcast from 1
    for _ in range(grad.ndim - len(shape)):
        grad = grad.sum(axis=0)
    for i, dim in enumerate(shape):
        if dim == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _tensor_sum(t: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    data = t.data.sum(axis=axis, keepdims=keepdims)
    parent_nodes: List[Node] = []

    if t.requires_grad:
        def grad_fn(grad: np.ndarray) -> np.ndarray:
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            return np.broadcast_to(grad, t.shape).copy()
        parent_nodes.append(Node(t, grad_fn))

    return Tensor(data, t.requires_grad, parent_nodes)


def _add(t1: Tensor, t2: Tensor) -> Tensor:
    data = t1.data + t2.data
    parent_nodes: List[Node] = []

    if t1.requires_grad:
        parent_nodes.append(Node(t1, lambda grad: _unbroadcast(grad, t1.shape)))
    if t2.requires_grad:
        parent_nodes.append(Node(t2, lambda grad: _unbroadcast(grad, t2.shape)))

    return Tensor(data, t1.requires_grad or t2.requires_grad, parent_nodes)


def _multiply(t1: Tensor, t2: Tensor) -> Tensor:
    data = t1.data * t2.data
    parent_nodes: List[Node] = []

    if t1.requires_grad:
        parent_nodes.append(Node(t1, lambda grad: _unbroadcast(grad * t2.data, t1.shape)))
    if t2.requires_grad:
        parent_nodes.append(Node(t2, lambda grad: _unbroadcast(grad * t1.data, t2.shape)))

    return Tensor(data, t1.requires_grad or t2.requires_grad, parent_nodes)


def _neg(t: Tensor) -> Tensor:
    parent_nodes = [Node(t, lambda grad: -grad)] if t.requires_grad else []
    return Tensor(-t.data, t.requires_grad, parent_nodes)


def _truediv(t1: Tensor, t2: Tensor) -> Tensor:
    # d(x/y)/dx = 1/y, d(x/y)/dy = -x/y**2
    data = t1.data / t2.data
    parent_nodes: List[Node] = []

    if t1.requires_grad:
        parent_nodes.append(Node(t1, lambda grad: _unbroadcast(grad / t2.data, t1.shape)))
    if t2.requires_grad:
        def grad_fn2(grad: np.ndarray) -> np.ndarray:
            return _unbroadcast(grad * -(t1.data / (t2.data * t2.data)), t2.shape)
        parent_nodes.append(Node(t2, grad_fn2))

    return Tensor(data, t1.requires_grad or t2.requires_grad, parent_nodes)


def _matmul(t1: Tensor, t2: Tensor) -> Tensor:
    """
    if t1 is (n1, m1) and t2 is (m1, m2), then t1 @ t2 is (n1, m2)
    and for an upstream gradient g of shape (n1, m2)
        grad1 = g @ t2.T
        grad2 = t1.T @ g
    """
    if t1.ndim != 2 or t2.ndim != 2:
        raise TypeError(f"matmul expects 2-d tensors, got {t1.shape} @ {t2.shape}")
    data = t1.data @ t2.data
    parent_nodes: List[Node] = []

    if t1.requires_grad:
        parent_nodes.append(Node(t1, lambda grad: grad @ t2.data.T))
    if t2.requires_grad:
        parent_nodes.append(Node(t2, lambda grad: t1.data.T @ grad))

    return Tensor(data, t1.requires_grad or t2.requires_grad, parent_nodes)


def _transpose(t: Tensor) -> Tensor:
    parent_nodes = [Node(t, lambda grad: grad.T)] if t.requires_grad else []
    return Tensor(t.data.T, t.requires_grad, parent_nodes)


def _slice(t: Tensor, idxs) -> Tensor:
    data = t.data[idxs]
    parent_nodes: List[Node] = []

    if t.requires_grad:
        def grad_fn(grad: np.ndarray) -> np.ndarray:
            bigger_grad = np.zeros_like(t.data)
            np.add.at(bigger_grad, idxs, grad)
            return bigger_grad
        parent_nodes.append(Node(t, grad_fn))

    return Tensor(data, t.requires_grad, parent_nodes)


def _relu(t: Tensor) -> Tensor:
    data = np.maximum(t.data, 0.)
    parent_nodes: List[Node] = []

    if t.requires_grad:
        # subgradient 0 at the kink, so a hinge sitting exactly at 0 contributes nothing
        parent_nodes.append(Node(t, lambda grad: grad * (t.data > 0.)))

    return Tensor(data, t.requires_grad, parent_nodes)


def _sqrt(t: Tensor) -> Tensor:
    data = np.sqrt(t.data)
    parent_nodes: List[Node] = []

    if t.requires_grad:
        def grad_fn(grad: np.ndarray) -> np.ndarray:
            out = np.zeros_like(data)
            np.divide(grad * 0.5, data, out=out, where=data > 0.)
            return out
        parent_nodes.append(Node(t, grad_fn))

    return Tensor(data, t.requires_grad, parent_nodes)
