'''Run configuration: one validated document for every stage, loaded from YAML'''

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from skull2face.errors import ConfigError, MissingFile
from skull2face.imaging import AugmentConfig
from skull2face.metrics import EvalConfig
from skull2face.model import HeadConfig
from skull2face.synth import SynthConfig
from skull2face.training import TrainConfig
from skull2face.utils import PathLike

# per-stage offsets from the global seed
SEED_OFFSETS = {'synth': 0, 'split': 1, 'init': 2, 'shuffle': 3, 'augment': 4}


def derive_seed(seed: int, stage: str) -> int:
    if stage not in SEED_OFFSETS:
        raise KeyError(f'unknown stage {stage!r}, expected one of {sorted(SEED_OFFSETS)}')
    return seed + SEED_OFFSETS[stage]


class RunConfig(BaseModel):
    r'''Everything a pipeline run can be configured with.

        The YAML file mirrors this model: top-level ``seed``, ``image_size``,
        ``split_fraction``, ``subject_disjoint`` and one mapping per stage
        (``synth``, ``augment``, ``head``, ``train``, ``eval``). Stage seeds inside
        the mappings are ignored; they all derive from ``seed``.'''
    model_config = ConfigDict(frozen=True, extra='forbid')

    seed: int = Field(1, ge=0)
    image_size: int = Field(64, ge=8, multiple_of=8)
    split_fraction: float = Field(0.7, gt=0, lt=1)
    subject_disjoint: bool = False
    synth: SynthConfig = SynthConfig()
    augment: AugmentConfig = AugmentConfig()
    head: HeadConfig = HeadConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()

    def _seed(self, seed: Optional[int]) -> int:
        return self.seed if seed is None else seed

    def synth_config(self, seed: Optional[int] = None, **overrides) -> SynthConfig:
        values = {**self.synth.model_dump(), **overrides, 'seed': derive_seed(self._seed(seed), 'synth')}
        return SynthConfig(**values)

    def train_config(self, seed: Optional[int] = None, **overrides) -> TrainConfig:
        values = {**self.train.model_dump(), **overrides, 'seed': derive_seed(self._seed(seed), 'shuffle')}
        return TrainConfig(**values)

    def default_map(self) -> Dict[str, Dict[str, Any]]:
        r'''Per-command flag defaults in the shape click's ``default_map`` expects'''
        synth = self.synth.model_dump(exclude={'seed'})
        train = {**self.train.model_dump(exclude={'seed'}), **self.head.model_dump(),
                 'image_size': self.image_size}
        return {
            'synth': synth,
            'triplets': {'split_fraction': self.split_fraction, 'subject_disjoint': self.subject_disjoint},
            'features': {'image_size': self.image_size},
            'train': train,
            'evaluate': self.eval.model_dump(),
            'compare': {**self.train.model_dump(exclude={'seed'}), **self.head.model_dump(),
                        **self.eval.model_dump()},
        }


def load_run_config(path: PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'config file not found: {path}', path=str(path))
    try:
        doc = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f'{path} is not valid YAML: {e}', path=str(path)) from e
    if not isinstance(doc, dict):
        raise ConfigError(f'{path} must hold a mapping at the top level', path=str(path))
    try:
        return RunConfig(**doc)
    except ValidationError as e:
        raise ConfigError(f'{path}: {e}', path=str(path)) from e
