"""
ViBE - Collaborative Filtering Tests
Tests for the matrix-completion baselines and their training loop
"""

import pytest
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.cf import CFModel, bce_loss_and_grad, cf_predict, cf_predict_pairs, logistic
from models.records import BodyRecord, DataQualityError, GarmentRecord, SyntheticSpec
from models.vibe import BodyTable, GarmentTable
from numkit import DimensionMismatchError, grad_check_detailed
from pipelines.body_typing import build_split, cluster_bodies, propagate_labels
from pipelines.synthetic import generate_synthetic
from pipelines.train_cf import CFTrainConfig, CFTrainer, cf_train, training_positives
from cli.verify import cf_objective, micro_cf_problem, micro_tables


@pytest.fixture(scope='module')
def prepared():
    spec = SyntheticSpec(num_types=3, bodies_per_type=(8, 6, 6), num_garments=60,
                         versatility_distribution=(4, 2, 1), visual_dim=6, seed=3)
    catalog = generate_synthetic(spec)
    clustering = cluster_bodies(catalog, k=3, seed=0)
    labels = propagate_labels(catalog, clustering)
    split = build_split(catalog, labels, clustering, seed=0)
    return catalog, clustering, labels, split


def quick_config(variant, **overrides):
    settings = {'variant': variant, 'learning_rate': 0.01, 'epochs': 30, 'latent_dim': 4, 'side_dim': 3}
    return CFTrainConfig(**{**settings, **overrides})


class TestLogistic:
    """Test the clipped logistic"""

    def test_values(self):
        np.testing.assert_allclose(logistic(np.array([0.0, 2.0])), [0.5, 1.0 / (1.0 + np.exp(-2.0))])

    def test_open_interval_at_extremes(self):
        p = logistic(np.array([-1000.0, 1000.0]))
        assert 0.0 < p[0] < 1e-300
        assert p[1] < 1.0


class TestCFModel:
    """Test model construction and prediction"""

    def test_initialize_shapes(self):
        model = CFModel.initialize('aware', ['b1', 'b2'], ['g1'], latent_dim=4, side_dim=3, garment_feature_dim=7)
        assert model.user_latent.shape == (2, 4)
        assert model.side_user.weights.shape == (3, 14)
        assert model.side_item.weights.shape == (3, 7)
        assert model.n_params == 1 + 8 + 2 + 4 + 1 + (42 + 3) + (21 + 3)
        assert not model.user_bias.any()

    def test_agnostic_has_no_side(self):
        model = CFModel.initialize('agnostic', ['b1'], ['g1'])
        assert model.side_dim == 0
        with pytest.raises(DataQualityError):
            model.zero_side()

    def test_aware_needs_garment_width(self):
        with pytest.raises(DataQualityError):
            CFModel.initialize('aware', ['b1'], ['g1'])

    def test_unknown_variant(self):
        with pytest.raises(DataQualityError):
            CFModel.initialize('hybrid', ['b1'], ['g1'])

    def test_set_flat_size_checked(self):
        model = CFModel.initialize('agnostic', ['b1'], ['g1'], latent_dim=2)
        with pytest.raises(DimensionMismatchError):
            model.set_flat(np.zeros(3))

    def test_unseen_entities_use_bias_only(self):
        """Test that bodies and garments outside the index get zero latent and bias"""
        model = CFModel.initialize('agnostic', ['b1'], ['g1'], latent_dim=2)
        model.global_bias = 0.7
        body = BodyRecord('new', [0.0] * 10, [160.0, 90.0, 70.0, 95.0])
        garment = GarmentRecord('fresh', 'dress', [1], [0.0])
        assert cf_predict(model, body, garment) == pytest.approx(logistic(np.array([0.7]))[0])

    def test_predictions_in_open_interval(self):
        rng = np.random.default_rng(0)
        model, bodies, garments, body_ids, garment_ids, _ = micro_cf_problem(rng, 'aware')
        p = cf_predict_pairs(model, bodies, garments, body_ids, garment_ids)
        assert np.all((p > 0.0) & (p < 1.0))

    def test_zero_side_matches_agnostic(self):
        rng = np.random.default_rng(1)
        bodies, garments = micro_tables(rng)
        kwargs = dict(latent_dim=3, side_dim=2, garment_feature_dim=11, seed=4)
        aware = CFModel.initialize('aware', bodies.ids, garments.ids, **kwargs)
        agnostic = CFModel.initialize('agnostic', bodies.ids, garments.ids, **kwargs)
        aware.zero_side()
        ids_b, ids_g = ['b0', 'b1', 'b3'], ['g4', 'g0', 'g2']
        np.testing.assert_array_equal(
            cf_predict_pairs(aware, bodies, garments, ids_b, ids_g),
            cf_predict_pairs(agnostic, bodies, garments, ids_b, ids_g),
        )

    def test_description_roundtrip(self):
        model = CFModel.initialize('aware', ['b1', 'b2'], ['g1', 'g2'], latent_dim=3, side_dim=2,
                                   garment_feature_dim=5, seed=2)
        rebuilt = CFModel.from_description(model.describe())
        rebuilt.set_flat(model.get_flat())
        np.testing.assert_array_equal(rebuilt.get_flat(), model.get_flat())
        assert rebuilt.item_ids == ['g1', 'g2']


class TestBinaryCrossEntropy:
    """Test the summed BCE and its gradient"""

    @pytest.mark.parametrize('variant', ['agnostic', 'aware'])
    def test_gradient_matches_finite_differences(self, variant):
        rng = np.random.default_rng(5)
        for _ in range(5):
            model, bodies, garments, body_ids, garment_ids, targets = micro_cf_problem(rng, variant)
            objective = cf_objective(model, bodies, garments, body_ids, garment_ids, targets)
            result = grad_check_detailed(objective, model.get_flat())
            assert result.max_relative_error < 1e-4

    def test_loss_matches_definition(self):
        rng = np.random.default_rng(6)
        model, bodies, garments, body_ids, garment_ids, targets = micro_cf_problem(rng, 'agnostic')
        p = cf_predict_pairs(model, bodies, garments, body_ids, garment_ids)
        expected = -np.sum(targets * np.log(p) + (1 - targets) * np.log(1 - p))
        loss, _ = bce_loss_and_grad(model, bodies, garments, body_ids, garment_ids, targets)
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_extreme_logits_stay_finite(self):
        model = CFModel.initialize('agnostic', ['b1'], ['g1'], latent_dim=1)
        model.global_bias = 800.0
        bodies = BodyTable(['b1'], np.zeros((1, 10)), np.zeros((1, 4)))
        garments = GarmentTable(['g1'], np.zeros((1, 1)), np.zeros((1, 1)))
        loss, grad = bce_loss_and_grad(model, bodies, garments, ['b1'], ['g1'], np.array([0.0]))
        assert np.isfinite(loss) and loss == pytest.approx(800.0, rel=1e-6)
        assert np.all(np.isfinite(grad))


class TestCFTraining:
    """Test the SGD training loop"""

    def test_config_defaults(self):
        assert CFTrainConfig(variant='agnostic').epochs == 60
        assert CFTrainConfig(variant='aware').epochs == 80
        assert CFTrainConfig(variant='aware').schedule == ((60, 0.1), (70, 0.1))

    def test_config_validation(self):
        with pytest.raises(DataQualityError):
            CFTrainConfig(variant='agnostic', zero_side=True).validate()
        with pytest.raises(DataQualityError):
            CFTrainConfig(epochs=20).validate()

    def test_training_positives_exclude_heldout(self, prepared):
        catalog, clustering, labels, split = prepared
        train = set(split.train_bodies)
        for source in ('propagated', 'observed'):
            pairs = training_positives(catalog, split, labels, clustering, source)
            assert pairs
            assert all(b in train and g not in split.heldout for b, g in pairs)

    @pytest.mark.parametrize('variant', ['agnostic', 'aware'])
    def test_loss_decreases(self, prepared, variant):
        catalog, clustering, labels, split = prepared
        trainer = CFTrainer(quick_config(variant), catalog, split, labels, clustering)
        trainer.fit()
        assert trainer.stats['final_loss'] < trainer.stats['initial_loss']
        assert len(trainer.trajectory()) == 30

    def test_zero_side_training_matches_agnostic(self, prepared):
        catalog, clustering, labels, split = prepared
        aware = cf_train(quick_config('aware', zero_side=True), catalog, split, labels, clustering)
        agnostic = cf_train(quick_config('agnostic'), catalog, split, labels, clustering)
        bodies = BodyTable.from_catalog(catalog, aware.stats)
        garments = GarmentTable.from_catalog(catalog, aware.stats)
        ids_b = [b for b in split.test_bodies for _ in split.train_garments[:5]]
        ids_g = [g for _ in split.test_bodies for g in split.train_garments[:5]]
        np.testing.assert_allclose(
            cf_predict_pairs(aware, bodies, garments, ids_b, ids_g),
            cf_predict_pairs(agnostic, bodies, garments, ids_b, ids_g),
            rtol=1e-12,
        )

    def test_variant_override(self, prepared):
        catalog, clustering, labels, split = prepared
        model = cf_train(quick_config('agnostic'), catalog, split, labels, clustering, variant='aware')
        assert model.variant == 'aware'
