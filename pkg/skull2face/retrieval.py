'''Face gallery index with exhaustive, confidence-scored top-k search'''

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from skull2face.data import View
from skull2face.errors import (DimMismatch, DuplicateGalleryId, IdCollision, InvalidInputError,
                               NonFinite, UnknownGalleryId)
from skull2face.log import get_logger
from skull2face.utils import PathLike, read_vector_csv, write_vector_csv

logger = get_logger(__name__)

DISTRACTOR = 'distractor'
KEY_COLUMNS = ('gallery_id', 'subject_id', 'view')


def confidence(delta: float) -> float:
    r'''``exp(-delta)``: 1 at distance 0, strictly decreasing in the distance.

        Float64 underflows to 0.0 once ``delta`` exceeds about 745, so far entries
        can tie at confidence 0. Ranking always uses the distance, which stays exact.'''
    delta = float(delta)
    if not math.isfinite(delta) or delta < 0.:
        raise InvalidInputError(f'distance must be finite and non-negative, got {delta}')
    return math.exp(-delta)


def squared_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimMismatch(f'cannot compare embeddings of shapes {u.shape} and {v.shape}')
    diff = u - v
    return float((diff * diff).sum())


class GalleryEntry(NamedTuple):
    gallery_id: str
    subject_id: str
    view: View
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class GalleryIndex:
    r'''Immutable store of gallery embeddings.

        ``matrix`` row i belongs to ``ids[i]``; ``rank`` holds each row's position in
        lexicographic id order, the tie-break of every query.'''
    ids: Tuple[str, ...]
    subject_ids: Tuple[str, ...]
    views: Tuple[View, ...]
    matrix: np.ndarray
    rank: np.ndarray = field(init=False, repr=False)
    _position: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(self.ids):
            raise DimMismatch(f'{len(self.ids)} ids need an ({len(self.ids)}, dim) matrix, got {matrix.shape}')
        if not len(self.ids) == len(self.subject_ids) == len(self.views):
            raise ValueError('ids, subject_ids and views must have equal lengths')
        if not np.isfinite(matrix).all():
            raise NonFinite('gallery holds a non-finite embedding')
        position: Dict[str, int] = {}
        for i, gallery_id in enumerate(self.ids):
            if gallery_id in position:
                raise DuplicateGalleryId(f'duplicate gallery id {gallery_id}', gallery_id=gallery_id)
            position[gallery_id] = i
        rank = np.empty(len(self.ids), dtype=np.intp)
        rank[np.argsort(np.array(self.ids, dtype=object), kind='stable')] = np.arange(len(self.ids))
        matrix.setflags(write=False)
        rank.setflags(write=False)
        object.__setattr__(self, 'ids', tuple(str(i) for i in self.ids))
        object.__setattr__(self, 'subject_ids', tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, 'views', tuple(View(v) for v in self.views))
        object.__setattr__(self, 'matrix', matrix)
        object.__setattr__(self, 'rank', rank)
        object.__setattr__(self, '_position', position)

    @classmethod
    def empty(cls, dim: int) -> 'GalleryIndex':
        return cls((), (), (), np.zeros((0, dim)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, gallery_id: str) -> bool:
        return gallery_id in self._position

    def __iter__(self) -> Iterator[GalleryEntry]:
        for i, gallery_id in enumerate(self.ids):
            yield GalleryEntry(gallery_id, self.subject_ids[i], self.views[i], self.matrix[i])

    def entry(self, gallery_id: str) -> GalleryEntry:
        if gallery_id not in self._position:
            raise UnknownGalleryId(f'no gallery entry {gallery_id}', gallery_id=gallery_id)
        i = self._position[gallery_id]
        return GalleryEntry(gallery_id, self.subject_ids[i], self.views[i], self.matrix[i])


EntryLike = Union[GalleryEntry, Tuple[str, str, Union[View, str], Sequence[float]]]


def build_index(embeddings: Iterable[EntryLike], dim: Optional[int] = None) -> GalleryIndex:
    r'''Builds a GalleryIndex from ``(gallery_id, subject_id, view, embedding)`` tuples.

        Raises:
            DuplicateGalleryId: an id occurs twice
            DimMismatch: embeddings of differing length (or not ``dim`` when given)'''
    entries = list(embeddings)
    if not entries:
        if dim is None:
            raise InvalidInputError('cannot build a gallery from no embeddings')
        return GalleryIndex.empty(dim)
    vectors = [np.asarray(e[3], dtype=np.float64) for e in entries]
    dim = vectors[0].shape[0] if dim is None else dim
    for (gallery_id, *_), v in zip(entries, vectors):
        if v.shape != (dim,):
            raise DimMismatch(f'gallery entry {gallery_id} has shape {v.shape}, expected ({dim},)',
                              gallery_id=gallery_id)
    return GalleryIndex(tuple(e[0] for e in entries), tuple(e[1] for e in entries),
                        tuple(View(e[2]) for e in entries), np.stack(vectors))


class RankedItem(NamedTuple):
    gallery_id: str
    subject_id: str
    distance: float
    confidence: float


@dataclass(frozen=True)
class RankedList:
    r'''Top-k gallery entries for one probe, nearest first.

        ``distance`` is the ordering key; ``confidence`` is derived from it and
        may be 0.0 for several far entries.'''
    query_id: str
    k: int
    items: Tuple[RankedItem, ...]

    def __len__(self) -> int:
        return len(self.items)

    @property
    def gallery_ids(self) -> List[str]:
        return [item.gallery_id for item in self.items]

    def to_json(self) -> dict:
        return {'query_id': self.query_id, 'k': self.k,
                'items': [{'rank': r, 'gallery_id': item.gallery_id, 'subject_id': item.subject_id,
                           'distance': item.distance, 'confidence': item.confidence}
                          for r, item in enumerate(self.items, start=1)]}

    def table(self) -> str:
        lines = [f'query {self.query_id} (top {len(self.items)})',
                 f'{"rank":>4}  {"gallery_id":<24} {"subject":<12} {"distance":>12} {"confidence":>10}']
        for r, item in enumerate(self.items, start=1):
            lines.append(f'{r:>4}  {item.gallery_id:<24} {item.subject_id:<12} '
                         f'{item.distance:>12.6f} {item.confidence:>10.6f}')
        return '\n'.join(lines)


def query(index: GalleryIndex, probe, k: int, query_id: str = '') -> RankedList:
    r'''Exhaustive scan of the gallery.

        Entries are sorted by squared distance to ``probe`` ascending, ties broken by
        lexicographic gallery id, scored with ``confidence`` and cut to ``k``.'''
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (index.dim,):
        raise DimMismatch(f'probe has shape {probe.shape}, gallery dim is {index.dim}')
    if k < 1:
        raise InvalidInputError(f'k must be at least 1, got {k}')
    diff = index.matrix - probe
    distances = (diff * diff).sum(axis=1)
    order = np.lexsort((index.rank, distances))[:k]
    items = tuple(RankedItem(index.ids[i], index.subject_ids[i], float(distances[i]),
                             confidence(distances[i])) for i in order)
    return RankedList(query_id, k, items)


def merge_galleries(a: GalleryIndex, b: GalleryIndex) -> GalleryIndex:
    r'''Union of two galleries with disjoint ids; ``a``'s entries come first'''
    if a.dim != b.dim:
        raise DimMismatch(f'cannot merge galleries of dims {a.dim} and {b.dim}')
    collisions = sorted(set(a.ids) & set(b.ids))
    if collisions:
        raise IdCollision(f'{len(collisions)} gallery id(s) occur in both galleries, e.g. {collisions[0]}',
                          gallery_ids=collisions[:10])
    logger.debug('merging galleries of %d and %d entries', len(a), len(b))
    return GalleryIndex(a.ids + b.ids, a.subject_ids + b.subject_ids, a.views + b.views,
                        np.concatenate([a.matrix, b.matrix]))


def read_gallery_csv(path: PathLike) -> GalleryIndex:
    r'''Reads a ``gallery_id,subject_id,view,e0,...,e{d-1}`` file'''
    keys, matrix = read_vector_csv(path, KEY_COLUMNS, 'e')
    try:
        views = tuple(View(view) for _, _, view in keys)
    except ValueError as e:
        raise InvalidInputError(f'{path}: {e}') from e
    return GalleryIndex(tuple(k[0] for k in keys), tuple(k[1] for k in keys), views, matrix)


def write_gallery_csv(index: GalleryIndex, path: PathLike) -> None:
    keys = [(g, s, v.value) for g, s, v in zip(index.ids, index.subject_ids, index.views)]
    write_vector_csv(path, KEY_COLUMNS, 'e', keys, index.matrix)
