'''The trainable skull-branch head and its checkpoint format'''

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from skull2face.errors import BadVersion, ConfigError, CorruptCheckpoint, DimMismatch, NonFinite
from skull2face.features import FeatureVector
from skull2face.nn import Linear, Module, ReLU, Tensor
from skull2face.nn import functional as F
from skull2face.utils import dumps_json

FORMAT = 'skull2face-head'
FORMAT_VERSION = 1


class HeadConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    hidden_dim: Optional[int] = Field(None, ge=1)
    normalize_output: bool = False
    identity_init: bool = False

    @model_validator(mode='after')
    def _check_identity(self) -> 'HeadConfig':
        if self.identity_init and self.hidden_dim is not None:
            raise ValueError('identity_init is only defined for a single affine layer (no hidden_dim)')
        return self


class ProjectionHead(Module):
    r'''Affine map from feature space to embedding space, optionally with one ReLU
        hidden layer, optionally followed by L2 normalization.

        Args:
            d_in (int): feature dimension
            d_out (int): embedding dimension
            hidden_dim (int): width of the hidden layer, None for a single affine layer
            normalize_output (bool): scale each embedding to unit norm
            rng (np.random.Generator): weight initialization source'''
    def __init__(self, d_in: int, d_out: int, hidden_dim: Optional[int] = None,
                 normalize_output: bool = False,
                 rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        if d_in < 1 or d_out < 1:
            raise ValueError(f'head dimensions must be positive, got {d_in} -> {d_out}')
        self.d_in = d_in
        self.d_out = d_out
        self.hidden_dim = hidden_dim
        self.normalize_output = normalize_output
        if hidden_dim is not None:
            self.hidden = Linear(d_in, hidden_dim, rng=rng)
            self.act = ReLU()
            self.output = Linear(hidden_dim, d_out, rng=rng)
        else:
            self.output = Linear(d_in, d_out, rng=rng)

    @property
    def weight(self) -> np.ndarray:
        return self.output.weight.data

    @property
    def bias(self) -> np.ndarray:
        return self.output.bias.data

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimMismatch(f'head expects {self.d_in}-dim features, got {x.shape[-1]}')
        if self.hidden_dim is not None:
            x = self.act(self.hidden(x))
        x = self.output(x)
        if self.normalize_output:
            x = F.l2_normalize(x)
        return x

    def embed(self, features: Union[np.ndarray, FeatureVector]) -> np.ndarray:
        r'''Inference on a (dim,) vector or an (n, dim) matrix, returns plain arrays'''
        values = features.values if isinstance(features, FeatureVector) else np.asarray(features, dtype=np.float64)
        single = values.ndim == 1
        out = self(Tensor(np.atleast_2d(values))).data
        return out[0] if single else out

    @classmethod
    def from_arrays(cls, weight, bias, hidden_weight=None, hidden_bias=None,
                    normalize_output: bool = False) -> 'ProjectionHead':
        weight = np.asarray(weight, dtype=np.float64)
        hidden_dim = None if hidden_weight is None else np.asarray(hidden_weight).shape[0]
        d_in = weight.shape[1] if hidden_weight is None else np.asarray(hidden_weight).shape[1]
        head = cls(d_in, weight.shape[0], hidden_dim, normalize_output, rng=np.random.default_rng(0))
        state = {'output.weight': weight, 'output.bias': bias}
        if hidden_weight is not None:
            state.update({'hidden.weight': hidden_weight, 'hidden.bias': hidden_bias})
        head.load_state_dict(state)
        return head


def init_head(d_in: int, d_out: int, seed: int, identity_init: bool = False,
              hidden_dim: Optional[int] = None, normalize_output: bool = False) -> ProjectionHead:
    r'''Gaussian weights with std sqrt(1/fan_in) and zero biases, or the identity map'''
    if identity_init:
        if d_in != d_out:
            raise DimMismatch(f'identity initialization needs d_in == d_out, got {d_in} -> {d_out}')
        if hidden_dim is not None:
            raise ConfigError('identity initialization is only defined for a single affine layer')
        return ProjectionHead.from_arrays(np.eye(d_in), np.zeros(d_out),
                                          normalize_output=normalize_output)
    return ProjectionHead(d_in, d_out, hidden_dim, normalize_output, rng=np.random.default_rng(seed))


'''==============================CHECKPOINTS=============================='''

@dataclass(frozen=True)
class ModelCheckpoint:
    head: ProjectionHead
    seed: int = 0
    train_config: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @property
    def d_in(self) -> int:
        return self.head.d_in

    @property
    def d_out(self) -> int:
        return self.head.d_out

    def to_bytes(self) -> bytes:
        head = self.head
        for name, param in head.named_parameters():
            if not np.isfinite(param.data).all():
                raise NonFinite(f'parameter {name} holds a non-finite value')
        payload = {
            'format': FORMAT,
            'version': self.version,
            'd_in': head.d_in,
            'd_out': head.d_out,
            'hidden_dim': head.hidden_dim,
            'normalize_output': head.normalize_output,
            'seed': self.seed,
            'train_config': self.train_config,
            # row-major, json writes floats in shortest round-trip form
            'parameters': {name: {'shape': list(value.shape), 'data': value.reshape(-1).tolist()}
                           for name, value in head.state_dict().items()},
        }
        return dumps_json(payload).encode('utf-8')


def save_checkpoint(head: ProjectionHead, seed: int = 0,
                    train_config: Optional[Dict[str, Any]] = None) -> bytes:
    return ModelCheckpoint(head, seed, dict(train_config or {})).to_bytes()


def read_checkpoint(payload: bytes) -> ModelCheckpoint:
    try:
        doc = json.loads(payload.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpoint(f'checkpoint is not valid JSON: {e}') from e
    if not isinstance(doc, dict) or doc.get('format') != FORMAT:
        raise CorruptCheckpoint('payload is not a skull2face head checkpoint')
    if doc.get('version') != FORMAT_VERSION:
        raise BadVersion(f'checkpoint version {doc.get("version")!r}, expected {FORMAT_VERSION}',
                         version=doc.get('version'))
    try:
        hidden_dim = doc['hidden_dim']
        head = ProjectionHead(int(doc['d_in']), int(doc['d_out']),
                              None if hidden_dim is None else int(hidden_dim),
                              bool(doc['normalize_output']), rng=np.random.default_rng(0))
        state = {}
        for name, entry in doc['parameters'].items():
            value = np.array(entry['data'], dtype=np.float64)
            state[name] = value.reshape(entry['shape'])
        head.load_state_dict(state)
        seed = int(doc['seed'])
        train_config = dict(doc['train_config'])
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise CorruptCheckpoint(f'checkpoint is missing or has malformed fields: {e}') from e
    for name, param in head.named_parameters():
        if not np.isfinite(param.data).all():
            raise CorruptCheckpoint(f'parameter {name} holds a non-finite value')
    return ModelCheckpoint(head.eval(), seed, train_config)


def load_checkpoint(payload: bytes) -> ProjectionHead:
    return read_checkpoint(payload).head
