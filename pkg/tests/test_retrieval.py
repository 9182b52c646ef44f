import math
import unittest
import pytest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from skull2face.data import View
from skull2face.errors import (DimMismatch, DuplicateGalleryId, IdCollision, InvalidInputError,
                               UnknownGalleryId)
from skull2face.retrieval import (DISTRACTOR, GalleryIndex, build_index, confidence, merge_galleries,
                                  query, read_gallery_csv, squared_distance, write_gallery_csv)


def random_gallery(n, dim, rng, prefix='G', levels=None):
    if levels is None:
        matrix = rng.standard_normal((n, dim))
    else:
        # few distinct integer levels produce exact distance ties
        matrix = rng.integers(0, levels, size=(n, dim)).astype(np.float64)
    return build_index((f'{prefix}{i:03d}', f'S{i:03d}', 'front', row) for i, row in enumerate(matrix))


class TestConfidence(unittest.TestCase):
    def test_values(self):
        assert confidence(0.) == 1.
        assert confidence(1.) == pytest.approx(0.36787944117144233, rel=1e-15)
        assert confidence(2.) == pytest.approx(0.1353352832366127, rel=1e-15)

    def test_strictly_decreasing(self):
        grid = np.linspace(0., 50., 10_000)
        values = [confidence(d) for d in grid]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert all(0. < v <= 1. for v in values)

    def test_rejects(self):
        for bad in (-1e-9, math.inf, math.nan):
            with pytest.raises(InvalidInputError):
                confidence(bad)


class TestSquaredDistance(unittest.TestCase):
    def test_examples(self):
        assert squared_distance([0., 0.], [3., 4.]) == 25.
        assert squared_distance([1., 1., 1.], [0., 0., 0.]) == 3.
        u = np.random.default_rng(0).standard_normal(7)
        assert squared_distance(u, u) == 0.

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            squared_distance([0., 0.], [0., 0., 0.])


class TestBuildIndex(unittest.TestCase):
    def test_sizes(self):
        rng = np.random.default_rng(1)
        for n in (40, 485):
            index = random_gallery(n, 8, rng)
            assert len(index) == n and index.dim == 8

    def test_duplicate_id(self):
        with pytest.raises(DuplicateGalleryId):
            build_index([('A', 'S1', 'front', [0., 0.]), ('A', 'S2', 'side', [1., 0.])])

    def test_ragged(self):
        with pytest.raises(DimMismatch):
            build_index([('A', 'S1', 'front', [0., 0.]), ('B', 'S2', 'front', [1., 0., 2.])])

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            build_index([])
        assert len(build_index([], dim=4)) == 0

    def test_entries(self):
        index = build_index([('A', 'S1', 'side', [0., 1.])])
        entry = index.entry('A')
        assert entry.subject_id == 'S1' and entry.view == View.SIDE
        assert 'A' in index and 'B' not in index
        with pytest.raises(UnknownGalleryId):
            index.entry('B')

    def test_immutable(self):
        index = build_index([('A', 'S1', 'front', [0., 1.])])
        with pytest.raises(ValueError):
            index.matrix[0, 0] = 5.


class TestQuery(unittest.TestCase):
    def setUp(self):
        self.index = build_index([('A', 'S1', 'front', [0., 0.]), ('B', 'S2', 'front', [1., 0.]),
                                  ('C', 'S3', 'front', [0., 3.])])

    def test_hand_example(self):
        ranked = query(self.index, [0., 0.], k=2, query_id='q')
        assert ranked.gallery_ids == ['A', 'B']
        assert [item.distance for item in ranked.items] == [0., 1.]
        assert ranked.items[0].confidence == 1.
        assert ranked.items[1].confidence == pytest.approx(math.exp(-1.))

    def test_k_beyond_gallery(self):
        ranked = query(self.index, [0., 0.], k=10)
        assert ranked.gallery_ids == ['A', 'B', 'C']
        assert ranked.items[-1].distance == 9.

    def test_exact_match_first(self):
        rng = np.random.default_rng(2)
        index = random_gallery(30, 5, rng)
        for i in (0, 7, 29):
            ranked = query(index, index.matrix[i], k=3)
            assert ranked.gallery_ids[0] == index.ids[i]
            assert ranked.items[0].confidence == 1.

    def test_tie_break(self):
        index = build_index([('b', 'S1', 'front', [1., 0.]), ('a', 'S2', 'front', [-1., 0.]),
                             ('c', 'S3', 'front', [0., 1.])])
        assert query(index, [0., 0.], k=3).gallery_ids == ['a', 'b', 'c']

    def test_bad_arguments(self):
        with pytest.raises(DimMismatch):
            query(self.index, [0., 0., 0.], k=1)
        with pytest.raises(InvalidInputError):
            query(self.index, [0., 0.], k=0)

    def test_json_shape(self):
        doc = query(self.index, [0., 0.], k=2, query_id='q').to_json()
        assert doc['query_id'] == 'q' and doc['k'] == 2
        assert [item['rank'] for item in doc['items']] == [1, 2]
        assert set(doc['items'][0]) == {'rank', 'gallery_id', 'subject_id', 'distance', 'confidence'}

    def test_confidence_order_matches_distance_order(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            n, dim = int(rng.integers(1, 25)), int(rng.integers(1, 4))
            index = random_gallery(n, dim, rng, levels=3)
            probe = rng.integers(0, 3, size=dim).astype(np.float64)
            items = query(index, probe, k=n).items
            by_confidence = sorted(items, key=lambda item: (-item.confidence, item.gallery_id))
            assert list(by_confidence) == list(items)
            for x, y in zip(items, items[1:]):
                assert (x.distance == y.distance) == (x.confidence == y.confidence)

    def test_far_entries_rank_by_distance(self):
        # squared distances 784 and 900 both underflow exp(-d) to 0.0
        index = build_index([('a', 'S1', 'front', [30., 0.]), ('b', 'S2', 'front', [28., 0.]),
                             ('c', 'S3', 'front', [0., 1.])])
        ranked = query(index, [0., 0.], k=3)
        assert ranked.gallery_ids == ['c', 'b', 'a']
        assert [item.distance for item in ranked.items] == [1., 784., 900.]
        assert [item.confidence for item in ranked.items[1:]] == [0., 0.]
        assert confidence(744.) > 0.

    def test_order_independent(self):
        rng = np.random.default_rng(4)
        index = random_gallery(25, 3, rng, levels=2)
        perm = rng.permutation(len(index))
        shuffled = GalleryIndex(tuple(index.ids[i] for i in perm), tuple(index.subject_ids[i] for i in perm),
                                tuple(index.views[i] for i in perm), index.matrix[perm])
        for probe in rng.integers(0, 2, size=(10, 3)).astype(np.float64):
            assert query(index, probe, 25).items == query(shuffled, probe, 25).items


class TestMerge(unittest.TestCase):
    def test_sizes(self):
        rng = np.random.default_rng(5)
        gallery = random_gallery(40, 6, rng)
        distractors = build_index((f'D{i:04d}', DISTRACTOR, 'front', row)
                                  for i, row in enumerate(rng.standard_normal((445, 6))))
        merged = merge_galleries(gallery, distractors)
        assert len(merged) == 485
        assert merged.ids[:40] == gallery.ids
        assert merged.subject_ids.count(DISTRACTOR) == 445

    def test_empty(self):
        gallery = random_gallery(10, 3, np.random.default_rng(6))
        merged = merge_galleries(gallery, GalleryIndex.empty(3))
        assert merged.ids == gallery.ids
        np.testing.assert_array_equal(merged.matrix, gallery.matrix)

    def test_collision(self):
        a = build_index([('A', 'S1', 'front', [0., 0.])])
        with pytest.raises(IdCollision):
            merge_galleries(a, build_index([('A', DISTRACTOR, 'front', [1., 1.])]))
        with pytest.raises(DimMismatch):
            merge_galleries(a, build_index([('B', DISTRACTOR, 'front', [1., 1., 1.])]))

    def test_ranks_never_improve(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            gallery = random_gallery(12, 4, rng)
            distractors = random_gallery(30, 4, rng, prefix='D')
            merged = merge_galleries(gallery, distractors)
            probe = rng.standard_normal(4)
            before = query(gallery, probe, len(gallery)).gallery_ids
            after = query(merged, probe, len(merged)).gallery_ids
            for gallery_id in gallery.ids:
                assert after.index(gallery_id) >= before.index(gallery_id)


class TestGalleryCsv(unittest.TestCase):
    def test_round_trip(self):
        index = random_gallery(6, 4, np.random.default_rng(7))
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / 'gallery.csv'
            write_gallery_csv(index, path)
            assert path.read_text().splitlines()[0] == 'gallery_id,subject_id,view,e0,e1,e2,e3'
            back = read_gallery_csv(path)
            assert back.ids == index.ids and back.subject_ids == index.subject_ids
            np.testing.assert_array_equal(back.matrix, index.matrix)

    def test_bad_view(self):
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / 'gallery.csv'
            path.write_text('gallery_id,subject_id,view,e0\nA,S1,top,1.0\n')
            with pytest.raises(InvalidInputError):
                read_gallery_csv(path)
