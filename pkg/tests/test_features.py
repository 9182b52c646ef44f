import json
import unittest
import pytest
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from skull2face.data import VIEWS, Domain, Sample, View, load_manifest
from skull2face.errors import (ConfigError, DimMismatch, DuplicateKey, ImageLoadError, NonFinite,
                               UnresolvedSample, WrongDomain)
from skull2face.features import (AugmentedFeatureSampler, BaselineExtractor, FeatureSource, FeatureTable,
                                 FeatureVector, compute_feature_table, extract_baseline, face_embedding,
                                 load_feature_table, skull_features, validate_feature_table,
                                 write_feature_table)
from skull2face.imaging import AugmentConfig, ImageGray, write_pgm
from tests.test_data import make_manifest


def block_oracle(pixels, grid=8):
    r'''Per-block mean and std by explicit loops'''
    size = pixels.shape[0]
    block = size // grid
    values = []
    for i in range(grid):
        for j in range(grid):
            cells = [pixels[r, c] for r in range(i * block, (i + 1) * block)
                     for c in range(j * block, (j + 1) * block)]
            mean = sum(cells) / len(cells)
            var = sum((x - mean) ** 2 for x in cells) / len(cells)
            values += [mean, var ** 0.5]
    values = np.array(values)
    return values / np.sqrt((values ** 2).sum())


def table_of(n_subjects, dim, seed=0):
    rng = np.random.default_rng(seed)
    keys = [(f'S{i:02d}', d, v) for i in range(1, n_subjects + 1) for d in Domain for v in VIEWS]
    return FeatureTable(tuple(keys), rng.standard_normal((len(keys), dim)))


def write_image_catalog(root: Path, n_subjects: int, size=16, seed=0):
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(1, n_subjects + 1):
        subject_id = f'S{i:02d}'
        entry = {'subject_id': subject_id}
        for domain in ('face', 'skull'):
            entry[domain] = {}
            for view in ('front', 'side'):
                name = f'{subject_id}_{domain}_{view}.pgm'
                write_pgm(ImageGray(rng.random((size, size))), root / name)
                entry[domain][view] = name
        entries.append(entry)
    (root / 'manifest.json').write_text(json.dumps(entries))
    return load_manifest(root / 'manifest.json')


class TestExtractBaseline(unittest.TestCase):
    def test_matches_block_oracle(self):
        pixels = np.random.default_rng(5).random((64, 64))
        vec = extract_baseline(ImageGray(pixels))
        assert vec.dim == 128 and vec.source == FeatureSource.BASELINE
        np.testing.assert_allclose(vec.values, block_oracle(pixels), rtol=0, atol=1e-12)

    def test_unit_norm(self):
        vec = extract_baseline(ImageGray(np.random.default_rng(1).random((40, 30))))
        assert np.linalg.norm(vec.values) == pytest.approx(1., abs=1e-12)

    def test_constant_image(self):
        vec = extract_baseline(ImageGray(np.full((64, 64), 0.3)))
        means, stds = vec.values[0::2], vec.values[1::2]
        np.testing.assert_allclose(stds, 0., atol=1e-15)
        np.testing.assert_allclose(means, means[0], rtol=1e-12)
        assert means[0] == pytest.approx(1 / 8, rel=1e-12)

    def test_zero_image(self):
        vec = extract_baseline(ImageGray(np.zeros((64, 64))))
        assert vec.values.tolist() == [0.] * 128

    def test_grid_must_divide(self):
        for size in (60, 0, 4):
            with pytest.raises(ConfigError):
                extract_baseline(ImageGray(np.zeros((10, 10))), size=size, grid=8)


class TestFeatureVector(unittest.TestCase):
    def test_frozen(self):
        vec = FeatureVector(np.array([1., 2.]))
        with pytest.raises(ValueError):
            vec.values[0] = 5.
        assert vec == FeatureVector([1., 2.])

    def test_rejects(self):
        with pytest.raises(NonFinite):
            FeatureVector([1., np.inf])
        with pytest.raises(DimMismatch):
            FeatureVector(np.zeros((2, 2)))


class TestFeatureTable(unittest.TestCase):
    def test_lookup(self):
        table = table_of(3, 5)
        assert len(table) == 12 and table.dim == 5
        sample = Sample('S02', Domain.FACE, View.SIDE, 'feature:S02/face/side')
        assert sample in table and 'S02/face/side' in table
        np.testing.assert_array_equal(table.row(sample).values, table.matrix[table.names.index('S02/face/side')])
        np.testing.assert_array_equal(table.gather(['S01/skull/front', 'S01/face/front']),
                                      table.matrix[[2, 0]])

    def test_select(self):
        table = table_of(3, 5)
        skulls = table.select(Domain.SKULL)
        assert len(skulls) == 6 and all(k[1] == Domain.SKULL for k in skulls.keys)
        assert len(table.select(Domain.FACE, View.FRONT)) == 3

    def test_unknown_row(self):
        with pytest.raises(UnresolvedSample):
            table_of(2, 3).row('S09/face/front')

    def test_invariants(self):
        with pytest.raises(DuplicateKey):
            FeatureTable((('S01', 'face', 'front'), ('S01', 'face', 'front')), np.zeros((2, 3)))
        with pytest.raises(DimMismatch):
            FeatureTable((('S01', 'face', 'front'),), np.zeros((2, 3)))
        with pytest.raises(NonFinite):
            FeatureTable((('S01', 'face', 'front'),), np.array([[np.nan, 1.]]))


class TestBranches(unittest.TestCase):
    def test_face_embedding_is_the_row(self):
        table = table_of(2, 4)
        sample = Sample('S01', Domain.FACE, View.FRONT, 'feature:S01/face/front')
        first = face_embedding(sample, table)
        np.testing.assert_array_equal(first.values, table.matrix[0])
        assert face_embedding(sample, table) == first

    def test_wrong_domain(self):
        table = table_of(2, 4)
        skull = Sample('S01', Domain.SKULL, View.FRONT, 'feature:S01/skull/front')
        with pytest.raises(WrongDomain):
            face_embedding(skull, table)
        face = Sample('S01', Domain.FACE, View.FRONT, 'feature:S01/face/front')
        with pytest.raises(WrongDomain):
            skull_features(face, table)
        assert skull_features(skull, table).dim == 4

    def test_extractor_callable(self):
        with TemporaryDirectory() as tmp:
            manifest = write_image_catalog(Path(tmp), 2)
            sample = manifest.samples(Domain.FACE)[0]
            vec = face_embedding(sample, BaselineExtractor())
            assert vec.dim == 128
            with pytest.raises(UnresolvedSample):
                BaselineExtractor()(Sample('S01', Domain.FACE, View.FRONT, 'feature:S01/face/front'))


class TestFeatureFiles(unittest.TestCase):
    def test_round_trip(self):
        table = table_of(40, 512)
        assert len(table.select(Domain.FACE)) == 80 and len(table.select(Domain.SKULL)) == 80
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / 'features.csv'
            write_feature_table(table, path)
            assert path.read_text().splitlines()[0].startswith('subject_id,domain,view,f0,f1,')
            back = load_feature_table(path)
            assert back.dim == 512 and back.keys == table.keys
            np.testing.assert_array_equal(back.matrix, table.matrix)

    def test_ragged_rows(self):
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / 'features.csv'
            path.write_text('subject_id,domain,view,f0,f1,f2\nS01,face,front,1,2,3\nS01,face,side,1,2\n')
            with pytest.raises(DimMismatch):
                load_feature_table(path)

    def test_non_finite(self):
        with TemporaryDirectory() as tmp:
            path = Path(tmp) / 'features.csv'
            path.write_text('subject_id,domain,view,f0,f1\nS01,face,front,1,inf\n')
            with pytest.raises(NonFinite):
                load_feature_table(path)

    def test_validate_against_manifest(self):
        manifest = make_manifest(3)
        validate_feature_table(table_of(3, 4), manifest)
        with pytest.raises(UnresolvedSample):
            validate_feature_table(table_of(2, 4), manifest)


class TestComputeFeatureTable(unittest.TestCase):
    def test_all_samples(self):
        with TemporaryDirectory() as tmp:
            manifest = write_image_catalog(Path(tmp), 3)
            table = compute_feature_table(manifest)
            assert len(table) == 12 and table.dim == 128
            assert table.source == FeatureSource.BASELINE
            assert table.names[:2] == ['S01/face/front', 'S01/face/side']

    def test_failures_listed(self):
        with TemporaryDirectory() as tmp:
            manifest = write_image_catalog(Path(tmp), 2)
            broken = Path(tmp) / 'S02_skull_side.pgm'
            broken.write_bytes(b'P5\n16 16\n255\n\x00')
            with pytest.raises(ImageLoadError) as info:
                compute_feature_table(manifest)
            assert str(broken) in info.value.failures

    def test_augmented_sampler(self):
        with TemporaryDirectory() as tmp:
            manifest = write_image_catalog(Path(tmp), 2)
            base = compute_feature_table(manifest, image_size=16)
            sampler = AugmentedFeatureSampler(manifest, base, AugmentConfig(), seed=4, image_size=16)
            first = sampler.sample(0)
            assert first.keys == base.keys
            np.testing.assert_array_equal(sampler.sample(0).matrix, first.matrix)
            faces = [i for i, k in enumerate(base.keys) if k[1] == Domain.FACE]
            np.testing.assert_array_equal(first.matrix[faces], base.matrix[faces])
            assert not np.array_equal(first.matrix, sampler.sample(1).matrix)

            identity = AugmentedFeatureSampler(manifest, base, AugmentConfig.identity(), seed=4,
                                               image_size=16)
            np.testing.assert_array_equal(identity.sample(3).matrix, base.matrix)

    def test_sampler_needs_baseline_dim(self):
        with TemporaryDirectory() as tmp:
            manifest = write_image_catalog(Path(tmp), 2)
            with pytest.raises(DimMismatch):
                AugmentedFeatureSampler(manifest, table_of(2, 64), AugmentConfig(), seed=0)
