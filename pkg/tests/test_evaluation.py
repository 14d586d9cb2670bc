"""
ViBE - Evaluation Tests
Tests for AUC, cold-start scenarios, specificity curves and metrics files
"""

import pytest
import sys
from pathlib import Path
import tempfile

import numpy as np
from sklearn.metrics import roc_auc_score

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.records import DataQualityError, SyntheticSpec
from pipelines.body_typing import ScenarioPairs, build_split, cluster_bodies, propagate_labels
from pipelines.evaluation import (
    PreferencePair, ScenarioReport, auc, constant_scorer, evaluate_run, evaluate_scenarios,
    format_metrics, judged_pair_auc, label_scorer, load_judgments, load_preferences,
    oracle_scorer, preference_auc, read_metrics, versatility_quantile_curve, write_metrics
)
from pipelines.synthetic import generate_synthetic
from cli.verify import brute_force_auc


@pytest.fixture(scope='module')
def prepared():
    spec = SyntheticSpec(num_types=3, bodies_per_type=(7, 6, 5), num_garments=60,
                         versatility_distribution=(4, 2, 1), visual_dim=6, seed=21)
    catalog = generate_synthetic(spec)
    clustering = cluster_bodies(catalog, k=3, seed=0)
    labels = propagate_labels(catalog, clustering)
    return catalog, clustering, labels


def label_trainer(labels, clustering):
    def trainer(split, seed):
        return label_scorer(labels, clustering)
    return trainer


class TestAuc:
    """Test the Mann-Whitney AUC"""

    def test_perfect_and_reversed(self):
        assert auc([2.0, 3.0], [0.0, 1.0]) == 1.0
        assert auc([0.0], [1.0]) == 0.0

    def test_ties_count_half(self):
        assert auc([1.0, 1.0], [1.0]) == 0.5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pos = rng.integers(0, 4, size=int(rng.integers(1, 20))) / 2.0
            neg = rng.integers(0, 4, size=int(rng.integers(1, 20))) / 2.0
            assert auc(pos, neg) == pytest.approx(brute_force_auc(pos, neg), abs=1e-12)

    def test_matches_sklearn(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=200)
        labels = rng.random(200) < 0.3
        assert auc(scores[labels], scores[~labels]) == pytest.approx(roc_auc_score(labels, scores))

    def test_empty_side_rejected(self):
        with pytest.raises(DataQualityError):
            auc([], [1.0])


class TestSpecificityCurve:
    """Test the versatility quantile curve"""

    def test_ties_in_versatility_cut_by_garment_id(self):
        pairs = ScenarioPairs(
            body_ids=['b1'] * 4 + ['b2'] * 4,
            garment_ids=['g1', 'g2', 'g3', 'g4'] * 2,
            labels=np.array([1, 0, 1, 0, 0, 1, 0, 1], dtype=bool),
        )
        versatility = {'g1': 1, 'g2': 2, 'g3': 2, 'g4': 2}
        # g3 and g4 are ranked backwards; g1 and g2 perfectly
        scores = np.array([0.9, 0.1, 0.05, 0.99, 0.3, 0.7, 0.98, 0.05])
        curve = dict(versatility_quantile_curve(scores, pairs, versatility, (100, 50)))
        assert curve[100] == pytest.approx(0.25)
        # half of 4 garments is g1 plus g2, not every garment of versatility 2
        assert curve[50] == pytest.approx(1.0)

    def test_quantile_keeps_ceiling_of_garment_count(self):
        pairs = ScenarioPairs(
            body_ids=['b1'] * 3 + ['b2'] * 3,
            garment_ids=['g1', 'g2', 'g3'] * 2,
            labels=np.array([1, 0, 1, 0, 1, 0], dtype=bool),
        )
        versatility = {'g1': 1, 'g2': 1, 'g3': 1}
        scores = np.array([0.8, 0.2, 0.1, 0.3, 0.9, 0.6])
        curve = dict(versatility_quantile_curve(scores, pairs, versatility, (50,)))
        kept = np.isin(pairs.garment_ids, ['g1', 'g2'])
        assert curve[50] == pytest.approx(auc(scores[kept & pairs.labels], scores[kept & ~pairs.labels]))

    def test_point_without_negatives_omitted(self):
        pairs = ScenarioPairs(['b1', 'b1'], ['g1', 'g2'], np.array([True, False]))
        curve = versatility_quantile_curve(np.array([1.0, 0.0]), pairs, {'g1': 1, 'g2': 2}, (100, 50))
        assert [q for q, _ in curve] == [100]


class TestScenarioEvaluation:
    """Test repeated split/train/score runs"""

    def test_label_scorer_is_perfect(self, prepared):
        catalog, clustering, labels = prepared
        split = build_split(catalog, labels, clustering, seed=0)
        aucs, _ = evaluate_run(label_scorer(labels, clustering), split, labels)
        assert aucs == {'i': 1.0, 'ii': 1.0, 'iii': 1.0}

    def test_constant_scorer_is_chance(self, prepared):
        catalog, clustering, labels = prepared
        split = build_split(catalog, labels, clustering, seed=0)
        aucs, curves = evaluate_run(constant_scorer(), split, labels, quantiles=(100, 50))
        assert all(value == 0.5 for value in aucs.values())
        assert set(curves) == {'i', 'ii', 'iii'}

    def test_oracle_scorer_scores_pairs(self, prepared):
        catalog, _, _ = prepared
        assert oracle_scorer(catalog)([catalog.bodies[0].body_id], [catalog.garments[0].garment_id]).shape == (1,)

    def test_runs_use_consecutive_seeds(self, prepared):
        catalog, clustering, labels = prepared
        seen = []

        def trainer(split, seed):
            seen.append((split.seed, seed))
            return constant_scorer()

        report = evaluate_scenarios(trainer, catalog, clustering, labels, runs=3, seed=10)
        assert report.seeds == [10, 11, 12]
        assert seen == [(10, 10), (11, 11), (12, 12)]
        assert report.num_runs == 3

    def test_parallel_matches_serial(self, prepared):
        catalog, clustering, labels = prepared
        trainer = label_trainer(labels, clustering)
        serial = evaluate_scenarios(trainer, catalog, clustering, labels, runs=3, quantiles=(100, 50))
        parallel = evaluate_scenarios(trainer, catalog, clustering, labels, runs=3, quantiles=(100, 50), jobs=3)
        assert serial.runs == parallel.runs
        assert serial.specificity == parallel.specificity

    def test_non_finite_scores_rejected(self, prepared):
        catalog, clustering, labels = prepared
        split = build_split(catalog, labels, clustering, seed=0)
        with pytest.raises(DataQualityError):
            evaluate_run(constant_scorer(float('nan')), split, labels)

    def test_report_statistics(self):
        report = ScenarioReport('vibe', seeds=[0, 1], runs={'i': [0.6, 0.8]},
                                specificity={'iii': {100: [0.7, 0.9], 25: [0.6, 0.6]}})
        assert report.mean('i') == pytest.approx(0.7)
        # population standard deviation
        assert report.std('i') == pytest.approx(0.1)
        assert report.specificity_curve('iii') == [(100, pytest.approx(0.8)), (25, pytest.approx(0.6))]


class TestPreferenceFiles:
    """Test preference-pair and judged-pair AUCs"""

    @pytest.fixture
    def temp_dir(self):
        with tempfile.TemporaryDirectory() as tmp:
            yield Path(tmp)

    def test_preference_auc(self):
        scorer = lambda bodies, garments: np.array([{'g1': 1.0, 'g2': 0.0, 'g3': 0.0}[g] for g in garments])
        pairs = [PreferencePair('b1', 'g1', 'g2'), PreferencePair('b1', 'g2', 'g1'), PreferencePair('b1', 'g2', 'g3')]
        assert preference_auc(scorer, pairs) == pytest.approx(0.5)

    def test_self_preference_rejected(self):
        with pytest.raises(DataQualityError):
            PreferencePair('b1', 'g1', 'g1')

    def test_unknown_ids_rejected(self, prepared):
        catalog, _, _ = prepared
        with pytest.raises(DataQualityError, match="unknown body_id"):
            preference_auc(constant_scorer(), [PreferencePair('nobody', 'g0001', 'g0002')], catalog)

    def test_judged_pairs_from_file(self, temp_dir):
        path = temp_dir / 'judged.txt'
        path.write_text('b1 g1 1\nb1 g2 0\nb2 g1 0\n')
        judgments = load_judgments(path)
        assert judgments[0] == ('b1', 'g1', True)
        scorer = lambda bodies, garments: np.array([1.0 if (b, g) == ('b1', 'g1') else 0.0
                                                    for b, g in zip(bodies, garments)])
        assert judged_pair_auc(scorer, judgments) == 1.0

    def test_preferences_from_file(self, temp_dir):
        path = temp_dir / 'prefs.txt'
        path.write_text('# body preferred rejected\nb1 g1 g2\n')
        assert load_preferences(path) == [PreferencePair('b1', 'g1', 'g2')]


class TestMetricsFile:
    """Test key=value metrics output"""

    def test_write_and_read(self):
        report = ScenarioReport('vibe', seeds=[0, 1], runs={'i': [0.5, 0.75], 'ii': [1.0, 1.0], 'iii': [0.6, 0.6]},
                                specificity={'iii': {100: [0.6, 0.6]}})
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'metrics.txt'
            write_metrics(path, [report], config_hash='abc')
            metrics = read_metrics(path)
        assert metrics['config_hash'] == 'abc'
        assert metrics['vibe.runs'] == '2'
        assert metrics['vibe.seeds'] == '0,1'
        assert float(metrics['vibe.scenario.i.mean']) == 0.625
        assert metrics['vibe.scenario.i.per_run'] == '0.5,0.75'
        assert float(metrics['vibe.specificity.iii.q100']) == pytest.approx(0.6)

    def test_output_is_deterministic(self):
        report = ScenarioReport('cf-aware', seeds=[3], runs={'i': [0.5], 'ii': [0.5], 'iii': [0.5]})
        assert format_metrics([report], 'h') == format_metrics([report], 'h')
        assert 'time' not in format_metrics([report], 'h')

    def test_missing_metrics_file(self):
        with pytest.raises(FileNotFoundError):
            read_metrics('/nonexistent/metrics.txt')
