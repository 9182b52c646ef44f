'''Ranking quality: Recall@k, mAP@k and MRR@k over a set of queries'''

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from skull2face.errors import InvalidInputError, MissingFile, UnknownGalleryId, UnknownQuery
from skull2face.log import get_logger
from skull2face.retrieval import DISTRACTOR, GalleryIndex, RankedList, query
from skull2face.utils import PathLike, write_csv

logger = get_logger(__name__)

CURVES_HEADER = ('k', 'recall', 'map', 'mrr')


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    k_max: int = Field(30, ge=1)


@dataclass(frozen=True)
class RelevanceJudgments:
    r'''query_id -> the gallery ids that count as correct answers (at least one)'''
    relevant: Mapping[str, FrozenSet[str]]

    def __post_init__(self) -> None:
        relevant = {str(q): frozenset(ids) for q, ids in self.relevant.items()}
        empty = [q for q, ids in relevant.items() if not ids]
        if empty:
            raise InvalidInputError(f'query {empty[0]} has no relevant gallery item', query_id=empty[0])
        object.__setattr__(self, 'relevant', relevant)

    def __getitem__(self, query_id: str) -> FrozenSet[str]:
        if query_id not in self.relevant:
            raise UnknownQuery(f'query {query_id} has no relevance judgments', query_id=query_id)
        return self.relevant[query_id]

    def __contains__(self, query_id: str) -> bool:
        return query_id in self.relevant

    def check(self, index: GalleryIndex) -> None:
        for query_id, ids in self.relevant.items():
            unknown = sorted(i for i in ids if i not in index)
            if unknown:
                raise UnknownGalleryId(f'query {query_id} judges unknown gallery id {unknown[0]}',
                                       query_id=query_id, gallery_id=unknown[0])

    @classmethod
    def from_subjects(cls, queries: Iterable[Tuple[str, str]], index: GalleryIndex) -> 'RelevanceJudgments':
        r'''Relevant items are the gallery entries of the query's own subject;
            distractors are never relevant.'''
        by_subject: Dict[str, List[str]] = {}
        for gallery_id, subject_id in zip(index.ids, index.subject_ids):
            if subject_id != DISTRACTOR:
                by_subject.setdefault(subject_id, []).append(gallery_id)
        return cls({query_id: frozenset(by_subject.get(subject_id, ()))
                    for query_id, subject_id in queries})


def load_judgments(path: PathLike) -> RelevanceJudgments:
    r'''Reads ``{"query_id": ["gallery_id", ...], ...}``'''
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'judgments file not found: {path}', path=str(path))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InvalidInputError(f'{path} is not valid JSON: {e}') from e
    if not isinstance(doc, dict) or not all(isinstance(v, list) for v in doc.values()):
        raise InvalidInputError(f'{path} must map query ids to lists of gallery ids')
    return RelevanceJudgments({q: frozenset(str(i) for i in ids) for q, ids in doc.items()})


'''==============================METRICS=============================='''

def _check_k(k: int) -> None:
    if k < 1:
        raise InvalidInputError(f'k must be at least 1, got {k}')


def _hit_ranks(ranked: RankedList, relevant: FrozenSet[str]) -> List[int]:
    return [r for r, gallery_id in enumerate(ranked.gallery_ids, start=1) if gallery_id in relevant]


def _recall(hits: Sequence[int], n_relevant: int, k: int) -> float:
    return sum(1 for r in hits if r <= k) / n_relevant


def _average_precision(hits: Sequence[int], n_relevant: int, k: int) -> float:
    # hits are ascending, so the j-th hit sits at rank r with precision j / r
    return sum(j / r for j, r in enumerate(hits, start=1) if r <= k) / min(n_relevant, k)


def _reciprocal_rank(hits: Sequence[int], k: int) -> float:
    return 1. / hits[0] if hits and hits[0] <= k else 0.


def _per_query(ranked: Mapping[str, RankedList], judgments: RelevanceJudgments):
    if not ranked:
        raise InvalidInputError('no queries to score')
    for query_id, result in ranked.items():
        relevant = judgments[query_id]
        yield _hit_ranks(result, relevant), len(relevant)


def recall_at_k(ranked: Mapping[str, RankedList], judgments: RelevanceJudgments, k: int) -> float:
    r'''Mean over queries of the share of relevant items found in the top k'''
    _check_k(k)
    return float(np.mean([_recall(hits, n, k) for hits, n in _per_query(ranked, judgments)]))


def average_precision_at_k(ranked: RankedList, relevant: Iterable[str], k: int) -> float:
    r'''Truncated average precision of one query.

        Sum of precision@r over the relevant hits at ranks r <= k, divided by
        ``min(|relevant|, k)``.'''
    _check_k(k)
    relevant = frozenset(relevant)
    if not relevant:
        raise InvalidInputError('average precision needs at least one relevant item')
    return _average_precision(_hit_ranks(ranked, relevant), len(relevant), k)


def map_at_k(ranked: Mapping[str, RankedList], judgments: RelevanceJudgments, k: int) -> float:
    _check_k(k)
    return float(np.mean([_average_precision(hits, n, k) for hits, n in _per_query(ranked, judgments)]))


def mrr_at_k(ranked: Mapping[str, RankedList], judgments: RelevanceJudgments, k: int) -> float:
    r'''Mean reciprocal rank of the first relevant item, 0 when it lies past k'''
    _check_k(k)
    return float(np.mean([_reciprocal_rank(hits, k) for hits, _ in _per_query(ranked, judgments)]))


@dataclass(frozen=True)
class MetricsReport:
    k_values: Tuple[int, ...]
    recall_at: Dict[int, float]
    map_at: Dict[int, float]
    mrr_at: Dict[int, float]
    ranks: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def summary(self, k: int = 30) -> Dict[str, float]:
        k = min(k, max(self.k_values))
        return {f'recall@{k}': self.recall_at[k], f'map@{k}': self.map_at[k], f'mrr@{k}': self.mrr_at[k]}

    def to_json(self, k: int = 30) -> dict:
        return {'queries': len(self.ranks), 'k_max': max(self.k_values),
                'summary': self.summary(k),
                'ranks': {q: list(r) for q, r in sorted(self.ranks.items())}}

    def write_curves_csv(self, path: PathLike) -> None:
        write_csv(path, CURVES_HEADER, ((k, float(self.recall_at[k]), float(self.map_at[k]),
                                         float(self.mrr_at[k])) for k in self.k_values))

    def plot_curves(self, path: PathLike, title: str = '') -> None:
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ks = list(self.k_values)
        ax.plot(ks, [self.recall_at[k] for k in ks], marker='.', label='Recall@k')
        ax.plot(ks, [self.map_at[k] for k in ks], marker='.', label='mAP@k')
        ax.plot(ks, [self.mrr_at[k] for k in ks], marker='.', label='MRR@k')
        ax.set_xlabel('k')
        ax.set_ylim(0., 1.05)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def evaluate(index: GalleryIndex, queries: Sequence[Tuple[str, np.ndarray]],
             judgments: RelevanceJudgments, k_max: int) -> MetricsReport:
    r'''Ranks the full gallery for every probe and scores k = 1..k_max.

        Args:
            index (GalleryIndex): the gallery searched
            queries: ``(query_id, embedding)`` pairs
            judgments (RelevanceJudgments): relevant gallery ids per query
            k_max (int): largest cutoff reported

        Returns:
            MetricsReport with one curve point per k and the ranks (1-based) at
            which each query's relevant items were found'''
    _check_k(k_max)
    if not queries:
        raise InvalidInputError('no queries to evaluate')
    if len(index) == 0:
        raise InvalidInputError('cannot evaluate against an empty gallery')
    judgments.check(index)
    ranked: Dict[str, RankedList] = {}
    for query_id, probe in queries:
        if query_id in ranked:
            raise InvalidInputError(f'query {query_id} occurs twice', query_id=query_id)
        if query_id not in judgments:
            raise UnknownQuery(f'query {query_id} has no relevance judgments', query_id=query_id)
        ranked[query_id] = query(index, probe, len(index), query_id)

    per_query = list(_per_query(ranked, judgments))
    k_values = tuple(range(1, k_max + 1))
    report = MetricsReport(
        k_values,
        {k: float(np.mean([_recall(h, n, k) for h, n in per_query])) for k in k_values},
        {k: float(np.mean([_average_precision(h, n, k) for h, n in per_query])) for k in k_values},
        {k: float(np.mean([_reciprocal_rank(h, k) for h, _ in per_query])) for k in k_values},
        {q: tuple(h) for q, (h, _) in zip(ranked, per_query)})
    logger.info('evaluated %d queries against %d gallery items: %s', len(ranked), len(index),
                ', '.join(f'{name} {value:.4f}' for name, value in report.summary(k_max).items()))
    return report
