import unittest
import pytest

import numpy as np

from skull2face.data import Domain, View, enumerate_triplets, manifest_from_json
from skull2face.errors import InvalidInputError
from skull2face.features import validate_feature_table
from skull2face.model import ProjectionHead
from skull2face.retrieval import DISTRACTOR
from skull2face.synth import SynthConfig, generate, generate_distractors, subject_ids
from skull2face.training import triplet_accuracy


class TestGenerate(unittest.TestCase):
    def test_shapes(self):
        data = generate(SynthConfig(num_subjects=5, latent_dim=3, feature_dim=7))
        assert data.manifest.n == 5
        assert len(data.features) == 20 and data.features.dim == 7
        assert data.latents.shape == (5, 3)

    def test_noise_free_views_identical(self):
        data = generate(SynthConfig(num_subjects=6, noise_sigma=0.))
        for subject_id in data.manifest.subject_ids:
            for domain in Domain:
                front = data.features.row(f'{subject_id}/{domain.value}/front').values
                side = data.features.row(f'{subject_id}/{domain.value}/side').values
                np.testing.assert_array_equal(front, side)

    def test_noisy_views_differ(self):
        data = generate(SynthConfig(num_subjects=3, noise_sigma=0.05))
        assert not np.array_equal(data.features.row('S01/face/front').values,
                                  data.features.row('S01/face/side').values)

    def test_deterministic(self):
        a = generate(SynthConfig(seed=11))
        b = generate(SynthConfig(seed=11))
        assert a.features.keys == b.features.keys
        assert a.features.matrix.tobytes() == b.features.matrix.tobytes()
        assert not np.array_equal(a.features.matrix, generate(SynthConfig(seed=12)).features.matrix)

    def test_catalog_validates(self):
        data = generate(SynthConfig(num_subjects=8))
        again = manifest_from_json(data.manifest.to_json())
        assert again.digest() == data.manifest.digest()
        validate_feature_table(data.features, data.manifest)
        assert all(s.is_feature_ref for s in data.manifest.samples())
        assert len(enumerate_triplets(data.manifest)) == 8 * 8 * 7

    def test_distinct_skulls(self):
        data = generate(SynthConfig(noise_sigma=0.))
        skulls = data.features.select(Domain.SKULL, View.FRONT).matrix
        for i in range(len(skulls)):
            for j in range(i + 1, len(skulls)):
                assert not np.array_equal(skulls[i], skulls[j])

    def test_linear_head_separates(self):
        data = generate(SynthConfig(noise_sigma=0.))
        skulls = data.features.select(Domain.SKULL)
        faces = data.features.gather(f'{k[0]}/face/{k[2].value}' for k in skulls.keys)
        # least squares W with skull @ W.T = face
        solution, *_ = np.linalg.lstsq(skulls.matrix, faces, rcond=None)
        head = ProjectionHead.from_arrays(solution.T, np.zeros(data.features.dim))
        np.testing.assert_allclose(head.embed(skulls.matrix), faces, atol=1e-9)
        assert triplet_accuracy(head, enumerate_triplets(data.manifest), data.features) == 1.

    def test_config_validation(self):
        for bad in ({'num_subjects': 1}, {'latent_dim': 0}, {'feature_dim': 0}, {'noise_sigma': -0.1},
                    {'unknown': 3}):
            with pytest.raises(ValueError):
                SynthConfig(**bad)


class TestDistractors(unittest.TestCase):
    def test_gallery(self):
        cfg = SynthConfig(num_subjects=4)
        gallery = generate_distractors(cfg, 445)
        assert len(gallery) == 445 and gallery.dim == cfg.feature_dim
        assert set(gallery.subject_ids) == {DISTRACTOR}
        assert gallery.ids[0] == 'D0001'
        np.testing.assert_array_equal(generate_distractors(cfg, 445).matrix, gallery.matrix)

    def test_catalog_unaffected(self):
        cfg = SynthConfig(num_subjects=4)
        before = generate(cfg).features.matrix
        generate_distractors(cfg, 10)
        np.testing.assert_array_equal(generate(cfg).features.matrix, before)
        assert len(generate_distractors(cfg, 0)) == 0
        with pytest.raises(InvalidInputError):
            generate_distractors(cfg, -1)


def test_subject_ids():
    assert subject_ids(3) == ['S01', 'S02', 'S03']
    assert subject_ids(120)[-1] == 'S120'
