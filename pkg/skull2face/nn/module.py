import copy
import numpy as np
from collections import OrderedDict
from typing import Any, Callable, Dict, Iterator, Optional, Set, Tuple, Union
from skull2face.nn.tensor import Tensor
from skull2face.nn.parameter import Parameter


def _forward_unimplemented(self, *input: Any) -> None:
    r'''This gets called as a placeholder if a subclass forgets
         to implement a forward method (it is required!)'''
    raise NotImplementedError(f'{type(self).__name__}.forward was not implemented')


class Module:
    def __init__(self) -> None:
        self.training = True
        self._parameters: Dict[str, Optional[Parameter]] = OrderedDict()
        self._modules: Dict[str, Optional['Module']] = OrderedDict()

    forward: Callable[..., Any] = _forward_unimplemented

    def __call__(self, *input, **kwargs):
        return self.forward(*input, **kwargs)

    def __repr__(self) -> str:
        params = [name for name, _ in self.named_parameters()]
        return f"{type(self).__name__}(training={self.training}, parameters={params})"

    def register_parameter(self, name: str, param: Optional[Parameter]) -> None:
        if '_parameters' not in self.__dict__:
            raise AttributeError("cannot assign parameter before Module.__init__() call")
        elif not isinstance(name, str):
            raise TypeError(f"parameter name should be a string. Got {type(name)}")
        elif '.' in name:
            raise KeyError("parameter name can't contain \".\"")
        elif name == '':
            raise KeyError("parameter name can't be empty string \"\"")
        elif hasattr(self, name) and name not in self._parameters:
            raise KeyError(f"attribute '{name}' already exists")

        if param is not None and not isinstance(param, Parameter):
            raise TypeError(f"cannot assign '{type(param)}' object to parameter '{name}' "
                            "(Parameter or None required)")
        self._parameters[name] = param

    def named_modules(self, memo: Optional[Set['Module']] = None,
                      prefix: str = '') -> Iterator[Tuple[str, 'Module']]:
        r"""Yields (name, module) for this module and every submodule, each once."""
        if memo is None:
            memo = set()
        if self in memo:
            return
        memo.add(self)
        yield prefix, self
        for name, module in self._modules.items():
            if module is None:
                continue
            submodule_prefix = prefix + ('.' if prefix else '') + name
            yield from module.named_modules(memo, submodule_prefix)

    def modules(self) -> Iterator['Module']:
        for _, module in self.named_modules():
            yield module

    def parameters(self) -> Iterator[Parameter]:
        r'''Returns an iterator over module parameters.

        This is typically passed to an optimizer.'''
        for _, param in self.named_parameters():
            yield param

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        r'''Yields (qualified name, parameter) pairs in registration order,
        e.g. ``("hidden.weight", <Parameter>)``.'''
        memo = set()
        for module_prefix, module in self.named_modules():
            for k, v in module._parameters.items():
                if v is None or v in memo:
                    continue
                memo.add(v)
                yield module_prefix + ('.' if module_prefix else '') + k, v

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((name, param.data.copy()) for name, param in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            raise KeyError(f"state keys {sorted(state)} do not match parameters {sorted(own)}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ValueError(f"shape mismatch for '{name}': {value.shape} != {param.shape}")
            param.data = value.copy()

    def copy(self) -> 'Module':
        return copy.deepcopy(self)

    def train(self, mode: bool = True) -> 'Module':
        for module in self.modules():
            object.__setattr__(module, 'training', mode)
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def __getattr__(self, name: str) -> Union[Tensor, 'Module']:
        if '_parameters' in self.__dict__:
            _parameters = self.__dict__['_parameters']
            if name in _parameters:
                return _parameters[name]
        if '_modules' in self.__dict__:
            modules = self.__dict__['_modules']
            if name in modules:
                return modules[name]
        raise AttributeError(f"'{type(self).__name__}' object has no attribute '{name}'")

    def __setattr__(self, name: str, value: Any) -> None:
        params = self.__dict__.get('_parameters')
        modules = self.__dict__.get('_modules')
        if isinstance(value, Parameter):
            if params is None:
                raise AttributeError("cannot assign parameters before Module.__init__() call")
            self.__dict__.pop(name, None)
            if modules is not None:
                modules.pop(name, None)
            self.register_parameter(name, value)
        elif isinstance(value, Module):
            if modules is None:
                raise AttributeError("cannot assign module before Module.__init__() call")
            self.__dict__.pop(name, None)
            if params is not None:
                params.pop(name, None)
            modules[name] = value
        elif params is not None and name in params:
            if value is not None:
                raise TypeError(f"cannot assign '{type(value)}' as parameter '{name}' "
                                "(Parameter or None expected)")
            params[name] = None
        else:
            object.__setattr__(self, name, value)

    def zero_grad(self) -> None:
        '''Zero out every parameter's gradient, submodules included'''
        for _, parameter in self.named_parameters():
            parameter.zero_grad()


class Linear(Module):
    r'''Affine layer ``y = x @ weight.T + bias`` with weight stored (out_features, in_features)'''
    def __init__(self, in_features: int, out_features: int,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        if not isinstance(in_features, int) or not isinstance(out_features, int):
            raise TypeError("features count must be an integer")
        self.in_features = in_features
        self.out_features = out_features
        # variance 1/in_features keeps the output scale close to the input scale
        self.weight = Parameter(out_features, in_features, rng=rng, std=np.sqrt(1. / in_features))
        self.bias = Parameter.zeros(out_features)

    def forward(self, x: Tensor) -> Tensor:
        # x.shape == (batch_size, in_features)
        return x @ self.weight.T + self.bias
