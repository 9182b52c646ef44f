'''Synthetic paired identities with a known linear skull -> face relation'''

from __future__ import annotations

from typing import List, NamedTuple, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from skull2face.data import (FEATURE_REF_PREFIX, VIEWS, Domain, Manifest, SubjectRecord, View,
                             sample_key)
from skull2face.errors import InvalidInputError
from skull2face.features import FeatureSource, FeatureTable
from skull2face.log import get_logger
from skull2face.retrieval import DISTRACTOR, GalleryIndex

logger = get_logger(__name__)


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    num_subjects: int = Field(40, ge=2)
    latent_dim: int = Field(16, ge=1)
    feature_dim: int = Field(64, ge=1)
    noise_sigma: float = Field(0.05, ge=0)
    seed: int = Field(1, ge=0)


class SyntheticData(NamedTuple):
    manifest: Manifest
    features: FeatureTable
    latents: np.ndarray


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    # mixing matrices, subject latents + noise, distractors
    mixing, subjects, distractors = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(mixing), np.random.default_rng(subjects),
            np.random.default_rng(distractors))


def _mixing(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    # entry variance 1/(latent * feature) puts E||A z||^2 at 1 for z ~ N(0, I)
    scale = np.sqrt(1. / (cfg.latent_dim * cfg.feature_dim))
    face = rng.normal(0., scale, size=(cfg.feature_dim, cfg.latent_dim))
    skull = rng.normal(0., scale, size=(cfg.feature_dim, cfg.latent_dim))
    return face, skull


def subject_ids(n: int) -> List[str]:
    width = max(2, len(str(n)))
    return [f'S{i:0{width}d}' for i in range(1, n + 1)]


def generate(cfg: SynthConfig) -> SyntheticData:
    r'''Draws a complete paired catalog and its feature table.

        Every subject gets a latent z ~ N(0, I); each face view is ``A z + e`` and
        each skull view ``B z + e`` with fixed seeded mixing matrices A, B and
        per-coordinate noise e ~ N(0, noise_sigma^2). Samples reference their
        feature rows (``feature:<subject>/<domain>/<view>``), no images exist.'''
    mixing_rng, subject_rng, _ = _streams(cfg.seed)
    face_mix, skull_mix = _mixing(cfg, mixing_rng)

    records, keys, rows, latents = [], [], [], []
    for subject_id in subject_ids(cfg.num_subjects):
        z = subject_rng.standard_normal(cfg.latent_dim)
        latents.append(z)
        refs = {}
        for domain, mix in ((Domain.FACE, face_mix), (Domain.SKULL, skull_mix)):
            clean = mix @ z
            refs[domain] = {}
            for view in VIEWS:
                noise = subject_rng.standard_normal(cfg.feature_dim) * cfg.noise_sigma
                keys.append((subject_id, domain, view))
                rows.append(clean + noise)
                refs[domain][view] = FEATURE_REF_PREFIX + sample_key(subject_id, domain, view)
        records.append(SubjectRecord(subject_id, refs[Domain.FACE], refs[Domain.SKULL]))

    manifest = Manifest(tuple(records))
    features = FeatureTable(tuple(keys), np.stack(rows), FeatureSource.PRECOMPUTED)
    logger.info('generated %d synthetic subjects (latent %d, feature %d, sigma %g)',
                cfg.num_subjects, cfg.latent_dim, cfg.feature_dim, cfg.noise_sigma)
    return SyntheticData(manifest, features, np.stack(latents))


def generate_distractors(cfg: SynthConfig, count: int) -> GalleryIndex:
    r'''Extra faces of unseen identities, drawn through the same face mixing matrix.

        The draws use their own stream, so the catalog of ``generate`` is unaffected
        by ``count``.'''
    if count < 0:
        raise InvalidInputError(f'distractor count must be non-negative, got {count}', count=count)
    mixing_rng, _, distractor_rng = _streams(cfg.seed)
    face_mix, _ = _mixing(cfg, mixing_rng)
    if count == 0:
        return GalleryIndex.empty(cfg.feature_dim)
    latents = distractor_rng.standard_normal((count, cfg.latent_dim))
    noise = distractor_rng.standard_normal((count, cfg.feature_dim)) * cfg.noise_sigma
    width = max(4, len(str(count)))
    ids = tuple(f'D{i:0{width}d}' for i in range(1, count + 1))
    return GalleryIndex(ids, (DISTRACTOR,) * count, (View.FRONT,) * count,
                        latents @ face_mix.T + noise)
