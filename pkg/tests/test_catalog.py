"""
ViBE - Catalog Tests
Tests for records, catalog files, preprocessing and the synthetic generator
"""

import pytest
import sys
from pathlib import Path
import tempfile

import numpy as np

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.records import (
    BodyRecord, GarmentRecord, Catalog, DataQualityError, FeatureStats,
    StandardizationStats, SyntheticSpec
)
from pipelines.catalog_io import (
    load_catalog, save_catalog, load_bodies, load_oracle, load_id_triples,
    oracle_path_for, write_atomic
)
from pipelines.preprocess import standardize, median_aggregate, fit_standardization, clustering_features
from pipelines.synthetic import generate_synthetic, noise_free_spec, full_scale_spec, attribute_names


def make_body(body_id, offset=0.0):
    return BodyRecord(body_id, [offset + i * 0.1 for i in range(10)], [165.0, 90.0, 70.0, 98.0])


def make_garment(garment_id, bits=(1, 0, 1), visual=(0.5, -0.25)):
    return GarmentRecord(garment_id, 'dress', bits, visual)


def tiny_catalog():
    return Catalog(
        bodies=[make_body('b1'), make_body('b2', 1.0)],
        garments=[make_garment('g1'), make_garment('g2', (0, 1, 1), (1.0, 2.0))],
        positives=frozenset({('b1', 'g1'), ('b2', 'g2')}),
        attribute_vocabulary=['a-line', 'v-neck', 'maxi'],
    )


CATALOG_TEXT = """# test catalog
[attributes]
a-line
v-neck
[bodies]
b1 0 0 0 0 0 0 0 0 0 0 160 90 70 95
b2 1 1 1 1 1 1 1 1 1 1 170 95 75 100
[garments]
g1 dress 1 0 0.5 0.25
g2 dress 0 1 -1.0 2.0
[positives]
b1 g1
b2 g2
"""


class TestRecords:
    """Test record invariants"""

    def test_body_requires_ten_smpl(self):
        with pytest.raises(DataQualityError):
            BodyRecord('b1', [0.0] * 9, [165.0, 90.0, 70.0, 98.0])

    def test_body_requires_positive_vitals(self):
        with pytest.raises(DataQualityError):
            BodyRecord('b1', [0.0] * 10, [165.0, 0.0, 70.0, 98.0])

    def test_body_rejects_nan(self):
        with pytest.raises(DataQualityError):
            BodyRecord('b1', [float('nan')] + [0.0] * 9, [165.0, 90.0, 70.0, 98.0])

    def test_body_features_order(self):
        body = make_body('b1')
        assert body.features.shape == (14,)
        assert body.features[10] == 165.0

    def test_garment_rejects_non_binary(self):
        with pytest.raises(DataQualityError):
            make_garment('g1', bits=(1, 2, 0))

    def test_garment_rejects_unknown_category(self):
        with pytest.raises(DataQualityError):
            GarmentRecord('g1', 'skirt', (1,), (0.0,))

    def test_catalog_rejects_duplicate_ids(self):
        with pytest.raises(DataQualityError, match="duplicate body_id"):
            Catalog([make_body('b1'), make_body('b1')], [make_garment('g1')], frozenset(), ['x', 'y', 'z'])

    def test_catalog_rejects_mixed_categories(self):
        top = GarmentRecord('g2', 'top', (1, 0, 1), (0.0, 0.0))
        with pytest.raises(DataQualityError, match="Mixed garment categories"):
            Catalog([make_body('b1')], [make_garment('g1'), top], frozenset(), ['x', 'y', 'z'])

    def test_catalog_rejects_dangling_positive(self):
        with pytest.raises(DataQualityError, match="unknown ids"):
            Catalog([make_body('b1')], [make_garment('g1')], frozenset({('b9', 'g1')}), ['x', 'y', 'z'])

    def test_catalog_rejects_positive_against_oracle(self):
        with pytest.raises(DataQualityError, match="oracle"):
            Catalog(
                [make_body('b1')], [make_garment('g1')], frozenset({('b1', 'g1')}), ['x', 'y', 'z'],
                oracle={('b1', 'g1'): False},
            )

    def test_feature_matrices(self):
        catalog = tiny_catalog()
        assert catalog.smpl_matrix().shape == (2, 10)
        assert catalog.vitals_matrix(['b2']).shape == (1, 4)
        assert catalog.attribute_matrix(['g2']).tolist() == [[0.0, 1.0, 1.0]]
        assert catalog.visual_dim == 2
        assert catalog.category == 'dress'

    def test_wearers(self):
        assert tiny_catalog().wearers() == {'g1': ['b1'], 'g2': ['b2']}

    def test_unknown_ids_rejected(self):
        catalog = tiny_catalog()
        with pytest.raises(DataQualityError, match="unknown body_id 'b9'"):
            catalog.body('b9')
        with pytest.raises(DataQualityError, match="unknown garment_id"):
            catalog.attribute_matrix(['g9'])

    def test_stats_dict_roundtrip(self):
        stats = StandardizationStats(
            smpl=FeatureStats([0.0] * 10, [1.0] * 10),
            vitals=FeatureStats([1.0, 2.0, 3.0, 4.0], [0.5] * 4),
            visual=FeatureStats([0.0, 0.0], [1.0, 0.0]),
        )
        assert StandardizationStats.from_dict(stats.as_dict()) == stats


class TestCatalogFiles:
    """Test catalog ingestion and persistence"""

    @pytest.fixture
    def temp_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            yield Path(tmp)

    def test_load_catalog(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT)
        catalog = load_catalog(path)
        assert [b.body_id for b in catalog.bodies] == ['b1', 'b2']
        assert catalog.num_attributes == 2
        assert catalog.visual_dim == 2
        assert ('b2', 'g2') in catalog.positives
        assert catalog.oracle is None

    def test_save_then_load_is_exact(self, temp_dir):
        spec = SyntheticSpec(num_types=2, bodies_per_type=(3, 3), num_garments=10,
                             versatility_distribution=(1, 1), visual_dim=4, seed=5)
        catalog = generate_synthetic(spec)
        path = temp_dir / 'catalog.txt'
        save_catalog(catalog, path)
        loaded = load_catalog(path)
        assert loaded.bodies == catalog.bodies
        assert loaded.garments == catalog.garments
        assert loaded.positives == catalog.positives
        assert loaded.oracle == catalog.oracle
        assert oracle_path_for(path).exists()

    def test_missing_file(self, temp_dir):
        with pytest.raises(FileNotFoundError):
            load_catalog(temp_dir / 'nope.txt')

    def test_duplicate_body_reports_line(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT.replace('b2 1 1', 'b1 1 1'))
        with pytest.raises(DataQualityError, match="line 6"):
            load_catalog(path)

    def test_non_binary_attribute(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT.replace('g1 dress 1 0', 'g1 dress 2 0'))
        with pytest.raises(DataQualityError, match="non-binary"):
            load_catalog(path)

    def test_inconsistent_visual_length(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT.replace('-1.0 2.0', '-1.0 2.0 3.0'))
        with pytest.raises(DataQualityError, match="inconsistent visual"):
            load_catalog(path)

    def test_unknown_positive(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT + 'b7 g1\n')
        with pytest.raises(DataQualityError, match="unknown body_id"):
            load_catalog(path)

    def test_unknown_section(self, temp_dir):
        path = temp_dir / 'catalog.txt'
        path.write_text(CATALOG_TEXT + '[shoes]\n')
        with pytest.raises(DataQualityError, match="unknown section"):
            load_catalog(path)

    def test_load_bodies_without_header(self, temp_dir):
        path = temp_dir / 'bodies.txt'
        path.write_text('# new people\nn1 0 0 0 0 0 0 0 0 0 0 160 90 70 95\n')
        bodies = load_bodies(path)
        assert bodies[0].body_id == 'n1'

    def test_oracle_file(self, temp_dir):
        path = temp_dir / 'x.oracle'
        path.write_text('b1 g1 1\nb1 g2 0\n')
        assert load_oracle(path) == {('b1', 'g1'): True, ('b1', 'g2'): False}

    def test_judgment_labels_checked(self, temp_dir):
        path = temp_dir / 'judged.txt'
        path.write_text('b1 g1 yes\n')
        with pytest.raises(DataQualityError):
            load_id_triples(path, label_column=True)

    def test_write_atomic_leaves_no_temp_files(self, temp_dir):
        target = temp_dir / 'sub' / 'out.txt'
        write_atomic(target, 'hello\n')
        write_atomic(target, 'again\n')
        assert target.read_text() == 'again\n'
        assert [p.name for p in target.parent.iterdir()] == ['out.txt']


class TestPreprocess:
    """Test standardization and aggregation"""

    def test_training_mode_statistics(self):
        out, stats = standardize([[1.0, 5.0], [3.0, 5.0]])
        assert stats.mean == (2.0, 5.0)
        assert stats.std == (1.0, 0.0)
        # zero-variance dimension maps to 0
        np.testing.assert_allclose(out, [[-1.0, 0.0], [1.0, 0.0]])

    def test_reuses_given_statistics(self):
        stats = FeatureStats([1.0], [2.0])
        out, returned = standardize([[5.0]], stats)
        assert out[0, 0] == 2.0
        assert returned is stats

    def test_dimension_mismatch(self):
        with pytest.raises(DataQualityError):
            standardize([[1.0, 2.0]], FeatureStats([0.0], [1.0]))

    def test_empty_input(self):
        with pytest.raises(DataQualityError):
            standardize(np.zeros((0, 3)))

    def test_median_aggregate_even_count(self):
        result = median_aggregate([[1.0, 10.0], [3.0, 20.0], [2.0, 40.0], [4.0, 30.0]])
        np.testing.assert_allclose(result, [2.5, 25.0])

    def test_median_aggregate_empty(self):
        with pytest.raises(DataQualityError):
            median_aggregate([])

    def test_fit_standardization_uses_training_rows(self):
        catalog = tiny_catalog()
        stats = fit_standardization(catalog, ['b1'], ['g1', 'g2'])
        assert stats.smpl.std == tuple([0.0] * 10)
        assert stats.visual.mean == (0.75, 0.875)

    def test_clustering_features_shape(self):
        features, stats = clustering_features(tiny_catalog())
        assert features.shape == (2, 14)
        assert stats.dim == 14


class TestSyntheticGenerator:
    """Test the planted-structure generator"""

    @pytest.fixture
    def small_spec(self):
        return SyntheticSpec(num_types=3, bodies_per_type=(5, 4, 3), num_garments=60,
                             versatility_distribution=(3, 2, 1), visual_dim=8, seed=11)

    def test_sizes(self, small_spec):
        catalog = generate_synthetic(small_spec)
        assert len(catalog.bodies) == 12
        assert len(catalog.garments) == 60
        assert catalog.num_attributes == 64
        assert catalog.visual_dim == 8
        assert len(catalog.oracle) == 12 * 60

    def test_deterministic_for_seed(self, small_spec):
        a = generate_synthetic(small_spec)
        b = generate_synthetic(small_spec)
        assert a.bodies == b.bodies
        assert a.garments == b.garments
        assert a.positives == b.positives

    def test_positives_are_oracle_true(self, small_spec):
        catalog = generate_synthetic(small_spec)
        assert all(catalog.oracle[p] for p in catalog.positives)

    def test_planted_type_sizes(self, small_spec):
        catalog = generate_synthetic(small_spec)
        counts = np.bincount(list(catalog.planted_types.values()))
        assert counts.tolist() == [5, 4, 3]

    def test_noise_free_indicators_exact(self, small_spec):
        """Test that without noise every compatible type's indicator block is set"""
        spec = noise_free_spec(num_types=3, bodies_per_type=(5, 4, 3), num_garments=60,
                               versatility_distribution=(3, 2, 1), visual_dim=8, seed=11)
        catalog = generate_synthetic(spec)
        vocab = catalog.attribute_vocabulary
        for (body_id, garment_id), compatible in catalog.oracle.items():
            t = catalog.planted_types[body_id]
            bits = catalog.garment(garment_id).attributes
            block = [bits[vocab.index(name)] for name in catalog.planted_indicators[t]]
            assert all(block) == compatible

    def test_full_observation(self, small_spec):
        spec = SyntheticSpec(**{**small_spec.__dict__, 'observation_rate': 1.0})
        catalog = generate_synthetic(spec)
        assert catalog.positives == {p for p, ok in catalog.oracle.items() if ok}

    def test_infeasible_spec(self):
        with pytest.raises(DataQualityError):
            generate_synthetic(SyntheticSpec(num_types=2, bodies_per_type=(3,)))

    def test_full_scale_spec(self):
        assert full_scale_spec().num_garments == 950

    def test_attribute_names_extend(self):
        names = attribute_names(120)
        assert len(names) == 120
        assert len(set(names)) == 120
