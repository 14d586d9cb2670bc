"""
ViBE - Embedding Model Tests
Tests for the two-tower model, the margin objective and its gradients
"""

import pytest
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.records import BodyRecord, DataQualityError, GarmentRecord, SyntheticSpec
from models.vibe import (
    BodyTable, GarmentTable, Margins, Triplet, TripletBatch, ViBEModel,
    embed_bodies, embed_body, embed_garment, embed_garments, margin_loss, margin_terms,
    median_pairwise_distance, pairwise_garment_distances, score_affinity, score_pairs,
    total_loss, total_loss_and_grad
)
from numkit import DimensionMismatchError, grad_check_detailed
from pipelines.body_typing import build_split, cluster_bodies, propagate_labels
from pipelines.synthetic import generate_synthetic
from pipelines.train_vibe import ViBETrainConfig, ViBETrainer, largest_type_bodies, train_vibe
from pipelines.triplets import SamplingError, TripletSampler, sample_triplets
from cli.verify import micro_tables, micro_vibe_problem, vibe_objective


class TestArchitecture:
    """Test model construction"""

    def test_default_widths(self):
        model = ViBEModel.initialize(num_attributes=64, visual_dim=32, seed=0)
        widths = dict((name, net.widths) for name, net in model.networks())
        assert widths['attributes'] == [64, 64, 32, 8]
        assert widths['visual'] == [32, 32, 256, 8]
        assert widths['smpl'] == [10, 10, 8, 4]
        assert widths['vitals'] == [4, 4, 4, 4]
        assert widths['f_cloth'] == [16, 8, 4]
        assert widths['f_body'] == [8, 16, 4]
        assert model.embedding_dim == 4

    def test_subset_of_heads(self):
        """Test that the embedding head input shrinks with the enabled heads"""
        model = ViBEModel.initialize(10, 6, garment_heads=('attributes',), body_heads=('smpl',))
        assert model.f_cloth.in_dim == 8
        assert model.f_body.in_dim == 4
        assert model.visual_dim is None
        assert model.garment_heads == ('attributes',)

    def test_unknown_head(self):
        with pytest.raises(DataQualityError):
            ViBEModel.initialize(10, 6, garment_heads=('shoes',))

    def test_needs_heads_on_both_sides(self):
        with pytest.raises(DataQualityError):
            ViBEModel.initialize(10, 6, body_heads=())

    def test_same_seed_same_parameters(self):
        a = ViBEModel.initialize(12, 5, seed=3)
        b = ViBEModel.initialize(12, 5, seed=3)
        np.testing.assert_array_equal(a.get_flat(), b.get_flat())

    def test_set_flat_size_checked(self):
        model = ViBEModel.initialize(12, 5)
        with pytest.raises(DimensionMismatchError):
            model.set_flat(np.zeros(model.n_params - 1))

    def test_description_rebuilds_shapes(self):
        model = ViBEModel.initialize(12, 5, seed=1)
        rebuilt = ViBEModel.from_description(model.describe())
        rebuilt.set_flat(model.get_flat())
        assert rebuilt.describe() == model.describe()
        np.testing.assert_array_equal(rebuilt.get_flat(), model.get_flat())

    def test_copy_is_independent(self):
        model = ViBEModel.initialize(12, 5, seed=1)
        clone = model.copy()
        clone.set_flat(np.zeros(clone.n_params))
        assert np.any(model.get_flat() != 0.0)


class TestEmbeddings:
    """Test embedding and scoring"""

    @pytest.fixture
    def setup(self):
        rng = np.random.default_rng(4)
        bodies, garments = micro_tables(rng, num_bodies=6, num_garments=7)
        model = ViBEModel.initialize(garments.attributes.shape[1], garments.visual.shape[1], seed=2)
        return model, bodies, garments

    def test_unit_norm(self, setup):
        model, bodies, garments = setup
        np.testing.assert_allclose(np.linalg.norm(embed_bodies(model, bodies), axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(embed_garments(model, garments), axis=1), 1.0, atol=1e-9)

    def test_score_pairs_is_negative_distance(self, setup):
        model, bodies, garments = setup
        zb = embed_bodies(model, bodies)
        zg = embed_garments(model, garments)
        scores = score_pairs(model, bodies, garments, ['b1', 'b1', 'b3'], ['g0', 'g6', 'g0'])
        expected = [-np.linalg.norm(zb[1] - zg[0]), -np.linalg.norm(zb[1] - zg[6]), -np.linalg.norm(zb[3] - zg[0])]
        np.testing.assert_allclose(scores, expected)
        assert np.all(scores <= 0.0) and np.all(scores >= -2.0)

    def test_unknown_id(self, setup):
        model, bodies, garments = setup
        with pytest.raises(DataQualityError, match="unknown body_id"):
            score_pairs(model, bodies, garments, ['nobody'], ['g0'])

    def test_record_scoring_matches_table(self):
        body = BodyRecord('b1', [0.1 * i for i in range(10)], [165.0, 90.0, 72.0, 99.0])
        garment = GarmentRecord('g1', 'dress', [1, 0, 1, 1], [0.3, -0.2, 0.9])
        model = ViBEModel.initialize(4, 3, seed=5)
        expected = -np.linalg.norm(embed_body(model, body) - embed_garment(model, garment))
        assert score_affinity(model, body, garment) == pytest.approx(expected)

    def test_pairwise_distances(self, setup):
        model, _, garments = setup
        z = embed_garments(model, garments)
        distances = pairwise_garment_distances(model, garments)
        assert distances.size == 7 * 6 // 2
        assert distances[0] == pytest.approx(np.linalg.norm(z[0] - z[1]), abs=1e-7)
        assert median_pairwise_distance(model, garments) == pytest.approx(np.median(distances))


class TestMarginLoss:
    """Test the dual-margin objective"""

    def test_worked_example(self):
        a = np.zeros(4)
        loss = margin_loss(a, np.array([0.5, 0, 0, 0]), np.array([0, 0.1, 0, 0]), Margins(0.2, 0.4))
        assert loss == pytest.approx(0.6)

    def test_inactive_region(self):
        a = np.zeros(4)
        assert margin_loss(a, np.array([0.1, 0, 0, 0]), np.array([0, 0.9, 0, 0])) == 0.0

    def test_inactive_hinges_pass_no_gradient(self):
        a = np.zeros((1, 2))
        _, g_a, g_p, g_n = margin_terms(a, np.array([[0.1, 0.0]]), np.array([[0.9, 0.0]]), Margins())
        assert not g_a.any() and not g_p.any() and not g_n.any()

    def test_coincident_points_have_zero_direction(self):
        a = np.array([[1.0, 0.0]])
        losses, g_a, _, _ = margin_terms(a, a.copy(), a.copy(), Margins())
        assert losses[0] == pytest.approx(0.4)
        assert not g_a.any()

    def test_margin_order_enforced(self):
        with pytest.raises(DataQualityError):
            Margins(alpha_p=0.5, alpha_n=0.4)


class TestTotalLoss:
    """Test the batch loss and its exact gradient"""

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            model, batch = micro_vibe_problem(rng)
            result = grad_check_detailed(vibe_objective(model, batch), model.get_flat())
            assert result.max_relative_error < 1e-4
            assert result.checked > 0

    def test_loss_is_sum_of_kind_means(self):
        rng = np.random.default_rng(1)
        model, batch = micro_vibe_problem(rng, triplets=4)
        only_bc = TripletBatch(batch.body_cloth, [], batch.bodies, batch.garments)
        only_bb = TripletBatch([], batch.body_body, batch.bodies, batch.garments)
        assert total_loss(model, batch) == pytest.approx(total_loss(model, only_bc) + total_loss(model, only_bb))

    def test_body_body_only_leaves_garment_tower_untouched(self):
        rng = np.random.default_rng(2)
        model, batch = micro_vibe_problem(rng)
        only_bb = TripletBatch([], batch.body_body, batch.bodies, batch.garments)
        _, grad = total_loss_and_grad(model, only_bb)
        offset = 0
        for name, net in model.networks():
            block = grad[offset:offset + net.n_params]
            offset += net.n_params
            if name in ('attributes', 'visual', 'f_cloth'):
                assert not block.any()

    def test_batch_id_sets(self):
        bodies, garments = micro_tables(np.random.default_rng(0))
        batch = TripletBatch(
            [Triplet('b0', 'g1', 'g2', 'body_cloth')],
            [Triplet('b1', 'b2', 'b3', 'body_body')],
            bodies, garments,
        )
        assert len(batch) == 2
        assert batch.body_ids() == {'b0', 'b1', 'b2', 'b3'}
        assert batch.garment_ids() == {'g1', 'g2'}


@pytest.fixture(scope='module')
def planted_split():
    spec = SyntheticSpec(num_types=3, bodies_per_type=(6, 5, 5), num_garments=45,
                         versatility_distribution=(3, 1, 0.5), visual_dim=6, seed=13)
    catalog = generate_synthetic(spec)
    clustering = cluster_bodies(catalog, k=3, seed=0)
    labels = propagate_labels(catalog, clustering)
    return catalog, clustering, labels, build_split(catalog, labels, clustering, seed=0)


class TestTripletSampling:
    """Test triplets drawn from the training partition"""

    def test_triplets_respect_labels_and_split(self, planted_split):
        catalog, clustering, labels, split = planted_split
        batch = sample_triplets(split, labels, clustering, catalog, 50, np.random.default_rng(0))
        assert len(batch.body_cloth) == len(batch.body_body) == 50
        train = set(split.train_bodies)
        for triplet in batch.body_cloth:
            t = clustering.assignment[triplet.anchor]
            assert triplet.anchor in train
            assert triplet.positive in labels.positives[t]
            assert triplet.negative in labels.negatives[t]
            assert triplet.positive not in split.heldout and triplet.negative not in split.heldout
        for triplet in batch.body_body:
            t = clustering.assignment[triplet.anchor]
            assert triplet.positive != triplet.anchor
            assert clustering.assignment[triplet.positive] == t
            assert clustering.assignment[triplet.negative] != t
            assert {triplet.positive, triplet.negative} <= train

    def test_same_seed_same_batch(self, planted_split):
        catalog, clustering, labels, split = planted_split
        first = sample_triplets(split, labels, clustering, catalog, 10, np.random.default_rng(5))
        second = sample_triplets(split, labels, clustering, catalog, 10, np.random.default_rng(5))
        assert first.body_cloth == second.body_cloth
        assert first.body_body == second.body_body

    def test_body_body_can_be_disabled(self, planted_split):
        catalog, clustering, labels, split = planted_split
        batch = sample_triplets(split, labels, clustering, catalog, 8, np.random.default_rng(1),
                                include_body_body=False)
        assert batch.body_body == []

    def test_one_type_cannot_supply_body_body(self, planted_split):
        catalog, clustering, labels, split = planted_split
        bodies, garments = BodyTable.from_catalog(catalog), GarmentTable.from_catalog(catalog)
        pool = largest_type_bodies(split, clustering)
        with pytest.raises(SamplingError):
            TripletSampler(split, labels, clustering, bodies, garments, body_pool=pool)
        sampler = TripletSampler(split, labels, clustering, bodies, garments, body_pool=pool,
                                 include_body_body=False)
        assert set(sampler.cloth_anchors) <= set(pool)


class TestTraining:
    """Test short training runs"""

    CONFIG = ViBETrainConfig(epochs=6, schedule=((4, 0.3),), batch_size=16, batches_per_epoch=4, seed=2)

    def test_trajectory_and_unit_embeddings(self, planted_split):
        catalog, clustering, labels, split = planted_split
        trainer = ViBETrainer(self.CONFIG, catalog, split, labels, clustering)
        model = trainer.fit()
        trajectory = trainer.trajectory()
        assert trajectory['epoch'].tolist() == [1, 2, 3, 4, 5, 6]
        assert trajectory['learning_rate'].iloc[0] == pytest.approx(0.003)
        assert trajectory['learning_rate'].iloc[-1] == pytest.approx(0.0009)
        assert np.isfinite(trajectory['loss']).all()
        assert trainer.stats['steps_taken'] == 24
        norms = np.linalg.norm(embed_garments(model, GarmentTable.from_catalog(catalog, model.stats)), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-6)

    def test_deterministic_for_seed(self, planted_split):
        catalog, clustering, labels, split = planted_split
        first = train_vibe(self.CONFIG, catalog, split, labels, clustering)
        second = train_vibe(self.CONFIG, catalog, split, labels, clustering)
        np.testing.assert_array_equal(first.get_flat(), second.get_flat())

    def test_standardization_from_training_partition(self, planted_split):
        catalog, clustering, labels, split = planted_split
        model = train_vibe(self.CONFIG, catalog, split, labels, clustering)
        train_smpl = catalog.smpl_matrix(split.train_bodies)
        np.testing.assert_allclose(model.stats.smpl.mean, train_smpl.mean(axis=0))

    def test_agnostic_variant_trains(self, planted_split):
        catalog, clustering, labels, split = planted_split
        config = ViBETrainConfig.agnostic(epochs=3, schedule=(), batch_size=8, batches_per_epoch=2)
        trainer = ViBETrainer(config, catalog, split, labels, clustering)
        trainer.fit()
        assert trainer.stats['epochs_run'] == 3

    def test_invalid_schedule_rejected(self, planted_split):
        catalog, clustering, labels, split = planted_split
        with pytest.raises(DataQualityError):
            ViBETrainer(ViBETrainConfig(epochs=5, schedule=((5, 0.5),)), catalog, split, labels, clustering)
