'''Frozen-branch feature vectors: the built-in block statistics extractor and
ingestion of precomputed backbone features'''

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from skull2face.data import Domain, Manifest, Sample, View, sample_key
from skull2face.errors import (ConfigError, DimMismatch, DuplicateKey, ImageLoadError,
                               InvalidInputError, NonFinite, Skull2FaceError, UnresolvedSample,
                               WrongDomain)
from skull2face.imaging import AugmentConfig, ImageGray, augment, load_image, resize_bilinear
from skull2face.log import get_logger
from skull2face.utils import PathLike, read_vector_csv, write_vector_csv

logger = get_logger(__name__)

KEY_COLUMNS = ('subject_id', 'domain', 'view')
CANONICAL_SIZE = 64
GRID = 8


class FeatureSource(str, Enum):
    BASELINE = 'baseline'
    PRECOMPUTED = 'precomputed'


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    source: FeatureSource = FeatureSource.PRECOMPUTED

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise DimMismatch(f'a feature vector is 1-d, got shape {values.shape}')
        if not np.isfinite(values).all():
            raise NonFinite('feature vector holds a non-finite value')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.source == other.source and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class FeatureTable:
    r'''Feature rows keyed by ``(subject_id, domain, view)``, held as one (n, dim) matrix.

        Rows are addressed by the sample name ``<subject>/<domain>/<view>``.'''
    keys: Tuple[Tuple[str, Domain, View], ...]
    matrix: np.ndarray
    source: FeatureSource = FeatureSource.PRECOMPUTED
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        keys = tuple((str(s), Domain(d), View(v)) for s, d, v in self.keys)
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(keys):
            raise DimMismatch(f'{len(keys)} keys need an ({len(keys)}, dim) matrix, got {matrix.shape}')
        if matrix.shape[1] < 1:
            raise DimMismatch('feature dimension must be at least 1')
        if not np.isfinite(matrix).all():
            raise NonFinite('feature table holds a non-finite value')
        index: Dict[str, int] = {}
        for i, key in enumerate(keys):
            name = sample_key(*key)
            if name in index:
                raise DuplicateKey(f'duplicate feature row {name}', key=name)
            index[name] = i
        matrix.setflags(write=False)
        object.__setattr__(self, 'keys', keys)
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, '_index', index)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def names(self) -> List[str]:
        return [sample_key(*key) for key in self.keys]

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, item: Union[str, Sample]) -> bool:
        return _name(item) in self._index

    def index_of(self, items: Iterable[Union[str, Sample]]) -> np.ndarray:
        r'''Row positions of the given samples or sample names'''
        rows = []
        for item in items:
            name = _name(item)
            if name not in self._index:
                raise UnresolvedSample(f'no feature row for {name}', key=name)
            rows.append(self._index[name])
        return np.array(rows, dtype=np.intp)

    def gather(self, items: Iterable[Union[str, Sample]]) -> np.ndarray:
        return self.matrix[self.index_of(items)]

    def row(self, item: Union[str, Sample]) -> FeatureVector:
        return FeatureVector(self.matrix[self.index_of([item])[0]], self.source)

    def select(self, domain: Optional[Domain] = None, view: Optional[View] = None) -> 'FeatureTable':
        picked = [i for i, (_, d, v) in enumerate(self.keys)
                  if (domain is None or d == domain) and (view is None or v == view)]
        return FeatureTable(tuple(self.keys[i] for i in picked), self.matrix[picked], self.source)

    def replace_matrix(self, matrix: np.ndarray) -> 'FeatureTable':
        return FeatureTable(self.keys, matrix, self.source)


def _name(item: Union[str, Sample]) -> str:
    return item.name if isinstance(item, Sample) else item


'''==============================EXTRACTION=============================='''

def extract_baseline(img: ImageGray, size: int = CANONICAL_SIZE, grid: int = GRID) -> FeatureVector:
    r'''Block statistics of a grayscale image.

        The image is brought to ``size`` x ``size`` and cut into a ``grid`` x ``grid``
        mesh of blocks; for every block (row-major) its mean and population standard
        deviation are emitted, giving ``2 * grid**2`` values, then the whole vector is
        scaled to unit L2 norm. An all-zero vector is returned as is.

        Args:
            img (ImageGray): input image, resized when not already canonical
            size (int): working resolution, a multiple of ``grid``
            grid (int): blocks per side'''
    if size < grid or size % grid:
        raise ConfigError(f'image size {size} is not a positive multiple of the grid {grid}',
                          image_size=size)
    pixels = resize_bilinear(img, size, size).pixels
    block = size // grid
    blocks = pixels.reshape(grid, block, grid, block).transpose(0, 2, 1, 3).reshape(grid * grid, -1)
    stats = np.stack([blocks.mean(axis=1), blocks.std(axis=1)], axis=1).reshape(-1)
    norm = np.linalg.norm(stats)
    if norm > 0.:
        stats = stats / norm
    return FeatureVector(stats, FeatureSource.BASELINE)


class BaselineExtractor:
    r'''Resolves samples by loading their images and running ``extract_baseline``'''
    def __init__(self, image_size: int = CANONICAL_SIZE, allow_png: bool = True) -> None:
        self.image_size = image_size
        self.allow_png = allow_png

    def load(self, sample: Sample) -> ImageGray:
        if sample.is_feature_ref:
            raise UnresolvedSample(f'{sample.name} is a feature reference, it has no image',
                                   key=sample.name)
        return load_image(sample.image_ref, allow_png=self.allow_png)

    def __call__(self, sample: Sample) -> FeatureVector:
        return extract_baseline(self.load(sample), self.image_size)


FeatureSourceLike = Union[FeatureTable, Callable[[Sample], FeatureVector]]


def _resolve(sample: Sample, source: FeatureSourceLike) -> FeatureVector:
    if isinstance(source, FeatureTable):
        return source.row(sample)
    return source(sample)


def face_embedding(sample: Sample, source: FeatureSourceLike) -> FeatureVector:
    r'''Frozen face-branch embedding: the feature vector itself, no trainable transform'''
    if sample.domain != Domain.FACE:
        raise WrongDomain(f'{sample.name} is not a face sample', key=sample.name)
    return _resolve(sample, source)


def skull_features(sample: Sample, source: FeatureSourceLike) -> FeatureVector:
    r'''Input of the trainable skull head'''
    if sample.domain != Domain.SKULL:
        raise WrongDomain(f'{sample.name} is not a skull sample', key=sample.name)
    return _resolve(sample, source)


def compute_feature_table(manifest: Manifest, image_size: int = CANONICAL_SIZE,
                          augment_cfg: Optional[AugmentConfig] = None,
                          rng: Optional[np.random.Generator] = None,
                          augment_domains: Sequence[Domain] = (),
                          allow_png: bool = True,
                          progress: bool = False) -> FeatureTable:
    r'''Runs load -> [augment] -> extract over every manifest sample.

        Every image failure is collected and reported together as one ImageLoadError.'''
    if augment_cfg is not None and augment_domains and rng is None:
        raise ValueError('augmentation needs a seeded rng')
    extractor = BaselineExtractor(image_size, allow_png)
    samples = manifest.samples()
    rows, failures = [], {}
    for sample in tqdm(samples, desc='features', disable=not progress, leave=False):
        try:
            img = extractor.load(sample)
        except Skull2FaceError as e:
            failures[str(sample.image_ref)] = e.message
            continue
        if augment_cfg is not None and sample.domain in augment_domains:
            img = augment(resize_bilinear(img, image_size, image_size), augment_cfg, rng)
        rows.append(extract_baseline(img, image_size).values)
    if failures:
        raise ImageLoadError(failures)
    logger.info('extracted %d baseline feature rows (dim %d)', len(rows), rows[0].shape[0])
    return FeatureTable(tuple(s.key for s in samples), np.stack(rows), FeatureSource.BASELINE)


class AugmentedFeatureSampler:
    r'''Fresh features from augmented images, once per training epoch.

        Images of the augmented domains are loaded and brought to the working size
        once; every call to ``sample(epoch)`` augments them with a generator seeded
        by ``(seed, epoch)`` and re-extracts their rows. Rows of other domains are
        taken from ``base`` unchanged, and the returned table keeps ``base``'s key order.'''
    def __init__(self, manifest: Manifest, base: FeatureTable, cfg: AugmentConfig, seed: int,
                 domains: Sequence[Domain] = (Domain.SKULL,), image_size: int = CANONICAL_SIZE,
                 allow_png: bool = True) -> None:
        self.base = base
        self.cfg = cfg
        self.seed = seed
        self.domains = tuple(Domain(d) for d in domains)
        self.image_size = image_size
        if base.dim != 2 * GRID * GRID:
            raise DimMismatch(f'augmented rows have dim {2 * GRID * GRID}, base table has {base.dim}')
        extractor = BaselineExtractor(image_size, allow_png)
        self._images: List[Tuple[int, ImageGray]] = []
        failures = {}
        for sample in manifest.samples():
            if sample.domain not in self.domains:
                continue
            try:
                img = resize_bilinear(extractor.load(sample), image_size, image_size)
            except Skull2FaceError as e:
                failures[str(sample.image_ref)] = e.message
                continue
            self._images.append((int(base.index_of([sample])[0]), img))
        if failures:
            raise ImageLoadError(failures)

    def sample(self, epoch: int) -> FeatureTable:
        rng = np.random.default_rng([self.seed, epoch])
        matrix = self.base.matrix.copy()
        for row, img in self._images:
            matrix[row] = extract_baseline(augment(img, self.cfg, rng), self.image_size).values
        return self.base.replace_matrix(matrix)


'''==============================TABLE FILES=============================='''

def load_feature_table(path: PathLike) -> FeatureTable:
    r'''Reads a ``subject_id,domain,view,f0,...,f{d-1}`` CSV'''
    keys, matrix = read_vector_csv(path, KEY_COLUMNS, 'f')
    parsed = []
    for subject_id, domain, view in keys:
        try:
            parsed.append((subject_id, Domain(domain), View(view)))
        except ValueError as e:
            raise InvalidInputError(f'{path}: bad key ({subject_id}, {domain}, {view}): {e}') from e
    table = FeatureTable(tuple(parsed), matrix, FeatureSource.PRECOMPUTED)
    logger.info('loaded %d feature rows of dim %d from %s', len(table), table.dim, Path(path).name)
    return table


def write_feature_table(table: FeatureTable, path: PathLike) -> None:
    keys = [(s, d.value, v.value) for s, d, v in table.keys]
    write_vector_csv(path, KEY_COLUMNS, 'f', keys, table.matrix)


def validate_feature_table(table: FeatureTable, manifest: Manifest) -> None:
    r'''Every manifest sample must resolve to a row'''
    missing = [s.name for s in manifest.samples() if s not in table]
    if missing:
        shown = ', '.join(missing[:5]) + (' ...' if len(missing) > 5 else '')
        raise UnresolvedSample(f'{len(missing)} manifest sample(s) have no feature row: {shown}',
                               missing=len(missing))
