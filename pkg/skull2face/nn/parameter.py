import numpy as np
from typing import Optional
from skull2face.nn.tensor import Array_like, Tensor


class Parameter(Tensor):
    '''A leaf tensor that a Module owns and an optimizer updates in place'''
    def __init__(self, *shape: int,
                 rng: Optional[np.random.Generator] = None,
                 std: float = 1.0,
                 data: Optional[Array_like] = None) -> None:
        if data is None:
            rng = rng if rng is not None else np.random.default_rng()
            data = rng.standard_normal(shape) * std
        super().__init__(data, requires_grad=True)

    @classmethod
    def zeros(cls, *shape: int) -> 'Parameter':
        return cls(data=np.zeros(shape))

    @classmethod
    def from_array(cls, data: Array_like) -> 'Parameter':
        return cls(data=np.array(data, dtype=np.float64, copy=True))

    def zero_grad(self) -> None:
        super().zero_grad()
