from skull2face.nn.tensor import Tensor, Node
import numpy as np


def relu(t: Tensor) -> Tensor:
    return t.relu()


def squared_distance(u: Tensor, v: Tensor) -> Tensor:
    r'''Row-wise squared Euclidean distance ``||u - v||^2``.

        Args:
            u, v (Tensor): (batch, dim) tensors, or (dim,) vectors

        Returns:
            (batch,) tensor, or a 0-dim tensor for vectors'''
    diff = u - v
    return (diff * diff).sum(axis=-1 if diff.ndim else None)


def euclidean_distance(u: Tensor, v: Tensor) -> Tensor:
    return squared_distance(u, v).sqrt()


def l2_normalize(t: Tensor) -> Tensor:
    r'''Scales each row of a (batch, dim) tensor to unit L2 norm; zero rows stay zero'''
    norms = np.sqrt((t.data * t.data).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0., norms, 1.)
    data = t.data / safe
    requires_grad = t.requires_grad
    if requires_grad:
        def grad_fn(grad: np.ndarray) -> np.ndarray:
            # d(x/|x|) = (g - y (y.g)) / |x|
            proj = (data * grad).sum(axis=1, keepdims=True)
            return np.where(norms > 0., (grad - data * proj) / safe, 0.)
        parent_nodes = [Node(t, grad_fn)]
    else:
        parent_nodes = []
    return Tensor(data, requires_grad, parent_nodes)


def triplet_margin_loss(anchor: Tensor, positive: Tensor, negative: Tensor,
                        alpha: float, squared: bool = True) -> Tensor:
    r'''Mean hinge ``max(0, d(a,p) + alpha - d(a,n))`` over a batch of triplets.

        Args:
            anchor, positive, negative (Tensor): (batch, dim) embeddings
            alpha (float): the margin
            squared (bool): squared Euclidean distance (default) or plain Euclidean

        Note: only triplets violating the margin contribute, so the gradient of an
        inactive triplet is exactly zero.'''
    distance = squared_distance if squared else euclidean_distance
    # (d_ap + alpha) - d_an is exactly <= 0 whenever d_ap + alpha <= d_an in floating point
    hinge = (distance(anchor, positive) + alpha - distance(anchor, negative)).relu()
    return hinge.mean()
