from typing import Iterable
from skull2face.nn.parameter import Parameter
from skull2face.nn.tensor import Tensor

"""
Optimizers go here
"""


class Optimizer_base:
    def __init__(self, parameters: Iterable[Parameter]):
        if isinstance(parameters, Tensor):
            raise TypeError("params argument given to the optimizer should be "
                            f"an iterable of Parameters, but got {type(parameters)}")
        if callable(parameters):
            raise TypeError("params argument given to the optimizer should be "
                            f"an iterable of Parameters, but got {type(parameters)}. "
                            "Did you accidentally pass in the Module.parameters method "
                            "instead of calling it?")
        self.parameters = list(parameters)
        if len(self.parameters) == 0:
            raise ValueError("optimizer received no parameters")

    def step(self) -> None:
        '''Optimizer subclasses must implement the step method'''
        raise NotImplementedError("Optimizer subclasses must implement the step method")

    def zero_grad(self) -> None:
        for parameter in self.parameters:
            parameter.zero_grad()


class SGD(Optimizer_base):
    '''Plain gradient descent: ``p <- p - lr * grad``'''
    def __init__(self, params: Iterable[Parameter], lr: float = 0.01) -> None:
        super().__init__(params)
        if lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        self.lr = lr

    def step(self) -> None:
        for parameter in self.parameters:
            if parameter.grad is None:
                continue
            parameter -= parameter.grad.data * self.lr
