"""
ViBE - Results Warehouse Loader
Loads scenario reports, specificity curves and loss trajectories into the
SQLite results warehouse. Loading the same experiment twice adds nothing.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import pandas as pd
from sqlalchemy import text

from models.records import DataQualityError
from models.schema import (
    get_engine, create_tables, get_session,
    DimMethod, DimScenario, DimExperiment,
    FactScenarioAuc, FactSpecificityAuc, FactTrainingLoss
)
from pipelines.body_typing import SCENARIOS, SCENARIO_NAMES
from pipelines.evaluation import ScenarioReport

logger = logging.getLogger('Warehouse')

METHOD_FAMILIES = {
    'vibe': ('embedding', 'Body-aware embedding with body-body term'),
    'agnostic-embed': ('embedding', 'Embedding trained on one body type without body-body term'),
    'cf-agnostic': ('collaborative-filtering', 'Matrix completion on interactions only'),
    'cf-aware': ('collaborative-filtering', 'Matrix completion with body and garment side features'),
}
# scenario -> (new body, new garment)
SCENARIO_NOVELTY = {'i': (0, 1), 'ii': (1, 0), 'iii': (1, 1)}


@dataclass
class ExperimentRecord:
    config_hash: str
    catalog_name: str = ''
    num_bodies: int = 0
    num_garments: int = 0
    num_types: int = 0
    runs: int = 0
    base_seed: int = 0


def sqlite_url(path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{path}"


class WarehouseLoader:
    """Idempotent loader for experiment results"""

    def __init__(self, db_path: str = "sqlite:///output/vibe_results.db"):
        self.db_path = db_path
        self.engine = get_engine(db_path)
        self.session = None
        self.stats = {
            'methods_loaded': 0,
            'scenarios_loaded': 0,
            'experiments_loaded': 0,
            'aucs_loaded': 0,
            'specificity_loaded': 0,
            'losses_loaded': 0,
            'errors': []
        }

    def run(
        self,
        experiment: ExperimentRecord,
        reports: Sequence[ScenarioReport],
        trajectories: Optional[Mapping[Tuple[str, int], pd.DataFrame]] = None,
    ) -> Dict[str, Any]:
        logger.info("=" * 60)
        logger.info(f"Loading results of experiment {experiment.config_hash[:12]} into the warehouse")
        logger.info("=" * 60)

        try:
            self._init_database()
            self._load_methods()
            self._load_scenarios()
            experiment_key = self._load_experiment(experiment)
            for report in reports:
                self._load_report(experiment_key, report)
            for (method, run_seed), trajectory in sorted((trajectories or {}).items()):
                self._load_trajectory(experiment_key, method, run_seed, trajectory)

            self.session.commit()
            logger.info(f"Warehouse load completed: {self.stats}")

        except Exception as e:
            logger.error(f"Warehouse load failed: {str(e)}")
            self.stats['errors'].append(str(e))
            if self.session:
                self.session.rollback()
            raise
        finally:
            if self.session:
                self.session.close()

        return self.stats

    def _init_database(self):
        create_tables(self.engine)
        self.session = get_session(self.engine)

    def _load_methods(self):
        for name, (family, description) in METHOD_FAMILIES.items():
            if self.session.query(DimMethod).filter_by(method_name=name).first():
                continue
            self.session.add(DimMethod(method_name=name, family=family, description=description))
            self.stats['methods_loaded'] += 1
        self.session.flush()

    def _load_scenarios(self):
        for code in SCENARIOS:
            if self.session.query(DimScenario).filter_by(scenario_code=code).first():
                continue
            new_body, new_garment = SCENARIO_NOVELTY[code]
            self.session.add(DimScenario(
                scenario_code=code,
                scenario_name=SCENARIO_NAMES[code],
                new_body=new_body,
                new_garment=new_garment
            ))
            self.stats['scenarios_loaded'] += 1
        self.session.flush()

    def _load_experiment(self, experiment: ExperimentRecord) -> int:
        if not experiment.config_hash:
            raise DataQualityError("experiment needs a config hash")
        existing = self.session.query(DimExperiment).filter_by(config_hash=experiment.config_hash).first()
        if existing:
            logger.info(f"Experiment {experiment.config_hash[:12]} already registered")
            return existing.experiment_key

        row = DimExperiment(
            config_hash=experiment.config_hash,
            catalog_name=experiment.catalog_name,
            num_bodies=experiment.num_bodies,
            num_garments=experiment.num_garments,
            num_types=experiment.num_types,
            runs=experiment.runs,
            base_seed=experiment.base_seed
        )
        self.session.add(row)
        self.session.flush()
        self.stats['experiments_loaded'] += 1
        return row.experiment_key

    def _keys(self, method: str, scenario: Optional[str] = None) -> Tuple[int, Optional[int]]:
        method_row = self.session.query(DimMethod).filter_by(method_name=method).first()
        if not method_row:
            raise DataQualityError(f"unknown method '{method}'")
        if scenario is None:
            return method_row.method_key, None
        scenario_row = self.session.query(DimScenario).filter_by(scenario_code=scenario).first()
        return method_row.method_key, scenario_row.scenario_key

    def _load_report(self, experiment_key: int, report: ScenarioReport):
        for scenario, values in report.runs.items():
            method_key, scenario_key = self._keys(report.method, scenario)
            for run_seed, value in zip(report.seeds, values):
                existing = self.session.query(FactScenarioAuc).filter_by(
                    experiment_key=experiment_key,
                    method_key=method_key,
                    scenario_key=scenario_key,
                    run_seed=run_seed
                ).first()
                if existing:
                    continue
                self.session.add(FactScenarioAuc(
                    experiment_key=experiment_key,
                    method_key=method_key,
                    scenario_key=scenario_key,
                    run_seed=run_seed,
                    auc=float(value)
                ))
                self.stats['aucs_loaded'] += 1

        for scenario in report.specificity:
            method_key, scenario_key = self._keys(report.method, scenario)
            for quantile, value in report.specificity_curve(scenario):
                existing = self.session.query(FactSpecificityAuc).filter_by(
                    experiment_key=experiment_key,
                    method_key=method_key,
                    scenario_key=scenario_key,
                    quantile=quantile
                ).first()
                if existing:
                    continue
                self.session.add(FactSpecificityAuc(
                    experiment_key=experiment_key,
                    method_key=method_key,
                    scenario_key=scenario_key,
                    quantile=quantile,
                    auc=float(value)
                ))
                self.stats['specificity_loaded'] += 1
        self.session.flush()

    def _load_trajectory(self, experiment_key: int, method: str, run_seed: int, trajectory: pd.DataFrame):
        method_key, _ = self._keys(method)
        already = {
            epoch for (epoch,) in self.session.query(FactTrainingLoss.epoch).filter_by(
                experiment_key=experiment_key, method_key=method_key, run_seed=run_seed
            )
        }
        for _, row in trajectory.iterrows():
            epoch = int(row['epoch'])
            if epoch in already:
                continue
            self.session.add(FactTrainingLoss(
                experiment_key=experiment_key,
                method_key=method_key,
                run_seed=int(run_seed),
                epoch=epoch,
                loss=float(row['loss']),
                learning_rate=float(row['learning_rate']) if pd.notna(row['learning_rate']) else None
            ))
            self.stats['losses_loaded'] += 1
        self.session.flush()


def scenario_auc_frame(db_path: str) -> pd.DataFrame:
    """Per-run scenario AUCs joined with their dimensions"""
    engine = get_engine(db_path)
    query = (
        "SELECT e.config_hash, m.method_name AS method, s.scenario_code AS scenario, "
        "f.run_seed, f.auc "
        "FROM fact_scenario_auc f "
        "JOIN dim_experiment e ON f.experiment_key = e.experiment_key "
        "JOIN dim_method m ON f.method_key = m.method_key "
        "JOIN dim_scenario s ON f.scenario_key = s.scenario_key "
        "ORDER BY e.config_hash, m.method_name, s.scenario_code, f.run_seed"
    )
    with engine.connect() as connection:
        return pd.read_sql_query(text(query), connection)
