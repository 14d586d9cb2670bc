"""
ViBE - Pipeline Tests
Tests for the results warehouse schema, the loader and the experiment pipeline
"""

import pytest
import sys
from pathlib import Path
from sqlalchemy import create_engine, text
import tempfile
import os

import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from models.records import DataQualityError, SyntheticSpec
from models.schema import (
    create_tables, get_session,
    DimMethod, DimScenario, FactScenarioAuc, FactTrainingLoss
)
from pipelines.evaluation import ScenarioReport, read_metrics
from pipelines.experiment import ExperimentPipeline
from pipelines.train_cf import CFTrainConfig
from pipelines.train_vibe import ViBETrainConfig
from pipelines.warehouse import ExperimentRecord, WarehouseLoader, scenario_auc_frame, sqlite_url


def sample_reports():
    return [
        ScenarioReport('vibe', seeds=[0, 1], runs={'i': [0.8, 0.9], 'ii': [0.7, 0.75], 'iii': [0.6, 0.7]},
                       specificity={'iii': {100: [0.6, 0.7], 50: [0.65, 0.75]}}),
        ScenarioReport('cf-aware', seeds=[0, 1], runs={'i': [0.6, 0.6], 'ii': [0.55, 0.5], 'iii': [0.5, 0.5]}),
    ]


def sample_trajectories():
    frame = pd.DataFrame({'epoch': [1, 2, 3], 'loss': [0.9, 0.5, 0.4], 'learning_rate': [0.003, 0.003, 0.0009]})
    return {('vibe', 0): frame, ('vibe', 1): frame}


class TestDatabaseSchema:
    """Test warehouse schema creation"""

    @pytest.fixture
    def temp_db(self):
        """Create a temporary database for testing"""
        fd, path = tempfile.mkstemp(suffix='.db')
        os.close(fd)
        engine = create_engine(f"sqlite:///{path}")
        yield engine, path
        engine.dispose()
        os.unlink(path)

    def test_create_tables(self, temp_db):
        engine, _ = temp_db
        create_tables(engine)

        with engine.connect() as conn:
            result = conn.execute(text("SELECT name FROM sqlite_master WHERE type='table'"))
            tables = [row[0] for row in result]

        for table in ['dim_method', 'dim_scenario', 'dim_experiment',
                      'fact_scenario_auc', 'fact_specificity_auc', 'fact_training_loss']:
            assert table in tables, f"Table {table} not created"

    def test_fact_table_columns(self, temp_db):
        engine, _ = temp_db
        create_tables(engine)

        with engine.connect() as conn:
            columns = [row[1] for row in conn.execute(text("PRAGMA table_info(fact_scenario_auc)"))]
        for col in ['experiment_key', 'method_key', 'scenario_key', 'run_seed', 'auc']:
            assert col in columns, f"Column {col} not in fact_scenario_auc"


class TestWarehouseLoader:
    """Test loading experiment results"""

    @pytest.fixture
    def db_url(self):
        with tempfile.TemporaryDirectory() as tmp:
            yield sqlite_url(Path(tmp) / 'nested' / 'results.db')

    def test_load_counts(self, db_url):
        stats = WarehouseLoader(db_url).run(ExperimentRecord('hash-a', runs=2), sample_reports(), sample_trajectories())
        assert stats['methods_loaded'] == 4
        assert stats['scenarios_loaded'] == 3
        assert stats['experiments_loaded'] == 1
        assert stats['aucs_loaded'] == 12
        assert stats['specificity_loaded'] == 2
        assert stats['losses_loaded'] == 6
        assert stats['errors'] == []

    def test_reload_adds_nothing(self, db_url):
        WarehouseLoader(db_url).run(ExperimentRecord('hash-a'), sample_reports(), sample_trajectories())
        stats = WarehouseLoader(db_url).run(ExperimentRecord('hash-a'), sample_reports(), sample_trajectories())
        for key in ('methods_loaded', 'scenarios_loaded', 'experiments_loaded',
                    'aucs_loaded', 'specificity_loaded', 'losses_loaded'):
            assert stats[key] == 0, key

        session = get_session(WarehouseLoader(db_url).engine)
        try:
            assert session.query(FactScenarioAuc).count() == 12
            assert session.query(FactTrainingLoss).count() == 6
            assert session.query(DimMethod).count() == 4
            assert session.query(DimScenario).filter_by(scenario_code='iii').one().new_body == 1
        finally:
            session.close()

    def test_second_experiment_is_separate(self, db_url):
        WarehouseLoader(db_url).run(ExperimentRecord('hash-a'), sample_reports())
        stats = WarehouseLoader(db_url).run(ExperimentRecord('hash-b'), sample_reports())
        assert stats['experiments_loaded'] == 1
        assert stats['aucs_loaded'] == 12

    def test_scenario_auc_frame(self, db_url):
        WarehouseLoader(db_url).run(ExperimentRecord('hash-a'), sample_reports())
        frame = scenario_auc_frame(db_url)
        assert list(frame.columns) == ['config_hash', 'method', 'scenario', 'run_seed', 'auc']
        assert len(frame) == 12
        vibe_iii = frame[(frame['method'] == 'vibe') & (frame['scenario'] == 'iii')]
        assert vibe_iii['auc'].tolist() == [0.6, 0.7]

    def test_unknown_method_rolls_back(self, db_url):
        bad = [ScenarioReport('knn', seeds=[0], runs={'i': [0.5]})]
        loader = WarehouseLoader(db_url)
        with pytest.raises(DataQualityError):
            loader.run(ExperimentRecord('hash-a'), bad)
        assert loader.stats['errors']

    def test_config_hash_required(self, db_url):
        with pytest.raises(DataQualityError):
            WarehouseLoader(db_url).run(ExperimentRecord(''), sample_reports())


class TestExperimentPipeline:
    """Test the end-to-end experiment on a small planted catalog"""

    SPEC = SyntheticSpec(num_types=2, bodies_per_type=(8, 6), num_garments=50,
                         versatility_distribution=(3, 1), visual_dim=6, seed=5)
    CONFIGS = {
        'vibe': ViBETrainConfig(epochs=4, schedule=((2, 0.5),), batch_size=16, batches_per_epoch=3),
        'cf-aware': CFTrainConfig.desk_scale(variant='aware', epochs=22),
    }

    @pytest.fixture(scope='class')
    def finished(self):
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            pipeline = ExperimentPipeline.from_spec(
                self.SPEC, methods=('vibe', 'cf-aware'), configs=self.CONFIGS, runs=2, seed=3,
                quantiles=(100, 50), metrics_path=root / 'metrics.txt',
                db_path=sqlite_url(root / 'results.db'), config_hash='pipeline-test',
            )
            stats = pipeline.run()
            metrics = read_metrics(root / 'metrics.txt')
            frame = scenario_auc_frame(sqlite_url(root / 'results.db'))
            yield pipeline, stats, metrics, frame

    def test_stats(self, finished):
        _, stats, _, _ = finished
        assert stats['methods_evaluated'] == 2
        assert stats['metrics_written']
        assert stats['warehouse']['aucs_loaded'] == 12
        assert stats['errors'] == []

    def test_reports_per_method(self, finished):
        pipeline, _, _, _ = finished
        assert [r.method for r in pipeline.reports] == ['vibe', 'cf-aware']
        assert pipeline.report('vibe').seeds == [3, 4]
        assert set(pipeline.trajectories) == {('vibe', 3), ('vibe', 4), ('cf-aware', 3), ('cf-aware', 4)}
        with pytest.raises(KeyError):
            pipeline.report('agnostic-embed')

    def test_metrics_and_warehouse_agree(self, finished):
        pipeline, _, metrics, frame = finished
        assert metrics['config_hash'] == 'pipeline-test'
        per_run = [float(v) for v in metrics['vibe.scenario.iii.per_run'].split(',')]
        stored = frame[(frame['method'] == 'vibe') & (frame['scenario'] == 'iii')]['auc'].tolist()
        assert stored == pytest.approx(per_run)
        assert per_run == pytest.approx(pipeline.report('vibe').runs['iii'])

    def test_unknown_method_rejected(self):
        with pytest.raises(DataQualityError):
            ExperimentPipeline.from_spec(self.SPEC, methods=('knn',))
