'''Paired skull/face catalog, triplet enumeration and train/validation splitting'''

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from skull2face.errors import (DuplicateSample, IncompleteSubject, InsufficientSubjects,
                               InvalidInputError, ManifestError, MissingFile)
from skull2face.log import get_logger
from skull2face.utils import PathLike, read_csv, write_csv

logger = get_logger(__name__)

FEATURE_REF_PREFIX = 'feature:'
TRIPLET_CSV_HEADER = ('anchor_subject', 'anchor_view', 'positive_view',
                      'negative_subject', 'negative_view')


class Domain(str, Enum):
    FACE = 'face'
    SKULL = 'skull'


class View(str, Enum):
    FRONT = 'front'
    SIDE = 'side'


VIEWS: Tuple[View, ...] = (View.FRONT, View.SIDE)


def sample_key(subject_id: str, domain: Union[Domain, str], view: Union[View, str]) -> str:
    return f'{subject_id}/{Domain(domain).value}/{View(view).value}'


class Sample(NamedTuple):
    subject_id: str
    domain: Domain
    view: View
    image_ref: Union[Path, str]

    @property
    def key(self) -> Tuple[str, Domain, View]:
        return (self.subject_id, self.domain, self.view)

    @property
    def name(self) -> str:
        return sample_key(self.subject_id, self.domain, self.view)

    @property
    def is_feature_ref(self) -> bool:
        return isinstance(self.image_ref, str) and self.image_ref.startswith(FEATURE_REF_PREFIX)


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    face_images: Dict[View, Union[Path, str]]
    skull_images: Dict[View, Union[Path, str]]

    def __post_init__(self) -> None:
        for domain, images in ((Domain.FACE, self.face_images), (Domain.SKULL, self.skull_images)):
            missing = [v.value for v in VIEWS if v not in images]
            if missing:
                raise IncompleteSubject(
                    f"subject {self.subject_id!r} has no {domain.value} image for view(s) {missing}",
                    subject_id=self.subject_id)

    def samples(self) -> Iterator[Sample]:
        for domain, images in ((Domain.FACE, self.face_images), (Domain.SKULL, self.skull_images)):
            for view in VIEWS:
                yield Sample(self.subject_id, domain, view, images[view])


@dataclass(frozen=True)
class Manifest:
    subjects: Tuple[SubjectRecord, ...]
    root: Optional[Path] = None

    def __post_init__(self) -> None:
        if len(self.subjects) < 1:
            raise ManifestError('a manifest needs at least one subject')
        seen = set()
        for record in self.subjects:
            for sample in record.samples():
                if sample.key in seen:
                    raise DuplicateSample(
                        f'duplicate sample ({sample.subject_id}, {sample.domain.value}, '
                        f'{sample.view.value})', subject_id=sample.subject_id)
                seen.add(sample.key)

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> List[str]:
        return [s.subject_id for s in self.subjects]

    def samples(self, domain: Optional[Domain] = None, view: Optional[View] = None) -> List[Sample]:
        return [s for record in self.subjects for s in record.samples()
                if (domain is None or s.domain == domain) and (view is None or s.view == view)]

    def to_json(self) -> list:
        def ref(value):
            if isinstance(value, Path) and self.root is not None:
                try:
                    return value.relative_to(self.root).as_posix()
                except ValueError:
                    pass
            return value.as_posix() if isinstance(value, Path) else value
        return [{'subject_id': r.subject_id,
                 'face': {v.value: ref(r.face_images[v]) for v in VIEWS},
                 'skull': {v.value: ref(r.skull_images[v]) for v in VIEWS}}
                for r in self.subjects]

    def digest(self) -> str:
        canonical = json.dumps(self.to_json(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _parse_ref(value, root: Path, subject_id: str, where: str) -> Union[Path, str]:
    if not isinstance(value, str) or not value:
        raise ManifestError(f'{where} of subject {subject_id!r} must be a non-empty string')
    if value.startswith(FEATURE_REF_PREFIX):
        return value
    return root / value


def _parse_record(entry, root: Path, index: int) -> SubjectRecord:
    if not isinstance(entry, dict) or 'subject_id' not in entry:
        raise ManifestError(f'subject entry #{index} must be an object with a subject_id')
    subject_id = entry['subject_id']
    if not isinstance(subject_id, str) or not subject_id:
        raise ManifestError(f'subject entry #{index} has an invalid subject_id')
    images = {}
    for domain in Domain:
        views = entry.get(domain.value)
        if views is None:
            raise IncompleteSubject(f'subject {subject_id!r} has no {domain.value} images',
                                    subject_id=subject_id)
        if not isinstance(views, dict):
            raise ManifestError(f'{domain.value} images of {subject_id!r} must be an object')
        unknown = set(views) - {v.value for v in VIEWS}
        if unknown:
            raise ManifestError(f'subject {subject_id!r} has unknown view(s) {sorted(unknown)}')
        images[domain] = {View(v): _parse_ref(p, root, subject_id, f'{domain.value}/{v}')
                          for v, p in views.items()}
    return SubjectRecord(subject_id, images[Domain.FACE], images[Domain.SKULL])


def manifest_from_json(entries, root: PathLike = '.') -> Manifest:
    if not isinstance(entries, list):
        raise ManifestError('manifest must be a top-level list of subjects')
    root = Path(root)
    records = [_parse_record(e, root, i) for i, e in enumerate(entries)]
    ids = [r.subject_id for r in records]
    for subject_id in ids:
        if ids.count(subject_id) > 1:
            # a repeated subject repeats all four of its samples
            raise DuplicateSample(f'subject {subject_id!r} appears more than once',
                                  subject_id=subject_id)
    return Manifest(tuple(records), root=root)


def _reject_duplicate_keys(pairs):
    keys = [k for k, _ in pairs]
    for key in keys:
        if keys.count(key) > 1:
            # e.g. two "front" entries for one face
            raise DuplicateSample(f'duplicate manifest key {key!r}')
    return dict(pairs)


def load_manifest(path: PathLike, check_files: bool = True) -> Manifest:
    r'''Loads and validates a JSON manifest.

        Args:
            path: manifest file; image paths inside are relative to its directory
            check_files (bool): require every image reference to exist on disk.
                Feature-row references (``feature:...``) are never checked.'''
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'manifest not found: {path}', path=str(path))
    try:
        entries = json.loads(path.read_text(), object_pairs_hook=_reject_duplicate_keys)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ManifestError(f'cannot parse manifest {path}: {e}') from e
    manifest = manifest_from_json(entries, root=path.parent)
    if check_files:
        missing = [s.image_ref for s in manifest.samples()
                   if not s.is_feature_ref and not Path(s.image_ref).is_file()]
        if missing:
            raise MissingFile(f'{len(missing)} referenced image(s) do not exist, first: {missing[0]}',
                              paths=[str(p) for p in missing])
    logger.debug('loaded manifest %s with %d subjects', path, manifest.n)
    return manifest


def write_manifest(manifest: Manifest, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.to_json(), indent=2) + '\n')


class Triplet(NamedTuple):
    anchor: Sample
    positive: Sample
    negative: Sample

    def row(self) -> Tuple[str, str, str, str, str]:
        return (self.anchor.subject_id, self.anchor.view.value, self.positive.view.value,
                self.negative.subject_id, self.negative.view.value)


def _check_triplet(t: Triplet) -> None:
    if t.anchor.domain != Domain.SKULL or t.positive.domain != Domain.FACE \
            or t.negative.domain != Domain.FACE:
        raise ValueError(f'triplet domains must be (skull, face, face): {t.row()}')
    if t.anchor.subject_id != t.positive.subject_id or t.anchor.subject_id == t.negative.subject_id:
        raise ValueError(f'triplet identities are inconsistent: {t.row()}')


@dataclass(frozen=True)
class TripletSet:
    triplets: Tuple[Triplet, ...]
    manifest_digest: str = ''
    mode: str = 'full'
    dropped: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        for t in self.triplets:
            _check_triplet(t)
        if len({t.row() for t in self.triplets}) != len(self.triplets):
            raise ValueError('a TripletSet cannot hold duplicate triplets')

    def __len__(self) -> int:
        return len(self.triplets)

    def __iter__(self) -> Iterator[Triplet]:
        return iter(self.triplets)

    def subset(self, indices: Sequence[int], mode: str, dropped: int = 0) -> 'TripletSet':
        return TripletSet(tuple(self.triplets[i] for i in indices), self.manifest_digest, mode, dropped)


def enumerate_triplets(manifest: Manifest) -> TripletSet:
    r'''Every (skull view, face view, other subject's face view) combination.

        For n subjects this is 2 anchor views x 2 positive views x 2(n-1) negatives
        per subject, 8 n (n-1) triplets. Subjects follow manifest order; negative
        subjects are taken in lexicographic subject_id order.'''
    if manifest.n < 2:
        raise InsufficientSubjects(f'need at least 2 subjects to form negatives, got {manifest.n}',
                                   subjects=manifest.n)
    by_id = {r.subject_id: r for r in manifest.subjects}
    ordered_ids = sorted(by_id)
    triplets: List[Triplet] = []
    for record in manifest.subjects:
        negatives = [(other, view) for other in ordered_ids if other != record.subject_id
                     for view in VIEWS]
        for anchor_view in VIEWS:
            anchor = Sample(record.subject_id, Domain.SKULL, anchor_view,
                            record.skull_images[anchor_view])
            for positive_view in VIEWS:
                positive = Sample(record.subject_id, Domain.FACE, positive_view,
                                  record.face_images[positive_view])
                for other, negative_view in negatives:
                    negative = Sample(other, Domain.FACE, negative_view,
                                      by_id[other].face_images[negative_view])
                    triplets.append(Triplet(anchor, positive, negative))
    return TripletSet(tuple(triplets), manifest.digest(), 'full')


def _train_size(fraction: float, n: int) -> int:
    # tolerance absorbs products like 0.7 * 12480 landing a hair under an integer
    return int(math.floor(fraction * n + 1e-9))


def split_triplets(triplets: TripletSet, train_fraction: float, seed: int,
                   subject_disjoint: bool = False) -> Tuple[TripletSet, TripletSet]:
    r'''Seeded shuffle-and-cut of a TripletSet.

        The default splits triplets, so one subject can appear on both sides. With
        ``subject_disjoint`` the subjects are split instead and triplets that would
        mix the two subject groups are dropped.'''
    if len(triplets) == 0:
        raise InvalidInputError('cannot split an empty TripletSet')
    if not 0. < train_fraction < 1.:
        raise InvalidInputError(f'train_fraction must lie in (0, 1), got {train_fraction}')
    rng = np.random.default_rng(seed)

    if not subject_disjoint:
        order = rng.permutation(len(triplets))
        cut = _train_size(train_fraction, len(triplets))
        return (triplets.subset(order[:cut], 'train'),
                triplets.subset(order[cut:], 'validation'))

    subjects = sorted({t.anchor.subject_id for t in triplets})
    if len(subjects) < 2:
        raise InsufficientSubjects('a subject-disjoint split needs at least 2 anchor subjects')
    shuffled = [subjects[i] for i in rng.permutation(len(subjects))]
    cut = min(max(_train_size(train_fraction, len(subjects)), 1), len(subjects) - 1)
    train_subjects = set(shuffled[:cut])
    train_idx, val_idx = [], []
    for i, t in enumerate(triplets):
        a_train = t.anchor.subject_id in train_subjects
        n_train = t.negative.subject_id in train_subjects
        if a_train and n_train:
            train_idx.append(i)
        elif not a_train and not n_train:
            val_idx.append(i)
    dropped = len(triplets) - len(train_idx) - len(val_idx)
    train = triplets.subset(train_idx, 'train-subjects', dropped)
    val = triplets.subset(val_idx, 'validation-subjects', dropped)
    logger.info('subject-disjoint split: %d train / %d validation subjects, %d mixed triplets dropped',
                cut, len(subjects) - cut, dropped)
    return train, val


def write_triplets_csv(triplets: TripletSet, path: PathLike) -> None:
    write_csv(path, TRIPLET_CSV_HEADER, (t.row() for t in triplets))


def read_triplets_csv(path: PathLike, manifest: Optional[Manifest] = None) -> TripletSet:
    r'''Reads a TripletSet CSV. Without a manifest, samples carry feature-row refs.'''
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'triplet file not found: {path}', path=str(path))
    frame = read_csv(path)
    records = {r.subject_id: r for r in manifest.subjects} if manifest is not None else {}
    if tuple(frame.columns) != TRIPLET_CSV_HEADER:
        raise ManifestError(f'{path} header must be {",".join(TRIPLET_CSV_HEADER)}')

    def sample(subject_id: str, domain: Domain, view: str) -> Sample:
        try:
            view_ = View(view)
        except ValueError as e:
            raise ManifestError(f'{path}: unknown view {view!r}') from e
        if manifest is None:
            return Sample(subject_id, domain, view_, FEATURE_REF_PREFIX + sample_key(subject_id, domain, view_))
        if subject_id not in records:
            raise ManifestError(f'{path}: subject {subject_id!r} is not in the manifest')
        images = records[subject_id].face_images if domain == Domain.FACE else records[subject_id].skull_images
        return Sample(subject_id, domain, view_, images[view_])

    triplets = []
    for a_subj, a_view, p_view, n_subj, n_view in frame.itertuples(index=False, name=None):
        triplets.append(Triplet(sample(a_subj, Domain.SKULL, a_view),
                                sample(a_subj, Domain.FACE, p_view),
                                sample(n_subj, Domain.FACE, n_view)))
    try:
        return TripletSet(tuple(triplets), manifest.digest() if manifest else '', path.stem)
    except ValueError as e:
        raise ManifestError(f'{path}: {e}') from e
