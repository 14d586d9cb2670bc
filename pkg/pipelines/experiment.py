"""
ViBE - Experiment Pipeline
Generates or loads a catalog, types its bodies, and evaluates every method
under the same repeated split/train/score protocol. Metrics go to a
key=value file and, optionally, the results warehouse.
"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from models.cf import CFModel, cf_predict_pairs
from models.records import Catalog, DataQualityError, SyntheticSpec
from models.vibe import BodyTable, GarmentTable, ViBEModel, score_pairs
from pipelines.body_typing import Clustering, PropagatedLabels, Split, cluster_bodies, propagate_labels
from pipelines.evaluation import (
    DEFAULT_QUANTILES, PairScorer, ScenarioReport, ScorerFactory, evaluate_scenarios, write_metrics
)
from pipelines.synthetic import generate_synthetic
from pipelines.train_cf import CFTrainConfig, CFTrainer
from pipelines.train_vibe import ViBETrainConfig, ViBETrainer
from pipelines.warehouse import ExperimentRecord, WarehouseLoader

logger = logging.getLogger('Experiment')

METHODS = ('vibe', 'agnostic-embed', 'cf-agnostic', 'cf-aware')
MethodConfig = Union[ViBETrainConfig, CFTrainConfig]
Model = Union[ViBEModel, CFModel]


def default_method_configs() -> Dict[str, MethodConfig]:
    return {
        'vibe': ViBETrainConfig(),
        'agnostic-embed': ViBETrainConfig.agnostic(),
        'cf-agnostic': CFTrainConfig(variant='agnostic'),
        'cf-aware': CFTrainConfig(variant='aware'),
    }


def train_method(
    method: str,
    config: MethodConfig,
    catalog: Catalog,
    split: Split,
    labels: PropagatedLabels,
    clustering: Clustering,
) -> Tuple[Model, pd.DataFrame]:
    """Train one method; returns the model and its loss trajectory"""
    if method in ('vibe', 'agnostic-embed'):
        if not isinstance(config, ViBETrainConfig):
            raise DataQualityError(f"method '{method}' needs a ViBETrainConfig")
        trainer = ViBETrainer(config, catalog, split, labels, clustering)
    elif method in ('cf-agnostic', 'cf-aware'):
        variant = method.split('-', 1)[1]
        if not isinstance(config, CFTrainConfig) or config.variant != variant:
            raise DataQualityError(f"method '{method}' needs a CFTrainConfig with variant '{variant}'")
        trainer = CFTrainer(config, catalog, split, labels, clustering)
    else:
        raise DataQualityError(f"unknown method '{method}'")
    model = trainer.fit()
    return model, trainer.trajectory()


def vibe_scorer(model: ViBEModel, catalog: Catalog) -> PairScorer:
    """Affinity scorer over every catalog entity, standardized with the model's statistics"""
    bodies = BodyTable.from_catalog(catalog, model.stats)
    garments = GarmentTable.from_catalog(catalog, model.stats)

    def score(body_ids, garment_ids):
        return score_pairs(model, bodies, garments, body_ids, garment_ids)
    return score


def cf_scorer(model: CFModel, catalog: Catalog) -> PairScorer:
    bodies = BodyTable.from_catalog(catalog, model.stats)
    garments = GarmentTable.from_catalog(catalog, model.stats)

    def score(body_ids, garment_ids):
        return cf_predict_pairs(model, bodies, garments, body_ids, garment_ids)
    return score


def model_scorer(model: Model, catalog: Catalog) -> PairScorer:
    if isinstance(model, ViBEModel):
        return vibe_scorer(model, catalog)
    return cf_scorer(model, catalog)


def method_factory(
    method: str,
    config: MethodConfig,
    catalog: Catalog,
    labels: PropagatedLabels,
    clustering: Clustering,
    trajectories: Optional[Dict[Tuple[str, int], pd.DataFrame]] = None,
) -> ScorerFactory:
    """trainer(split, seed) for evaluate_scenarios; each run trains with its own seed"""
    def trainer(split: Split, seed: int) -> PairScorer:
        model, trajectory = train_method(method, replace(config, seed=seed), catalog, split, labels, clustering)
        if trajectories is not None:
            trajectories[(method, seed)] = trajectory
        return model_scorer(model, catalog)
    return trainer


class ExperimentPipeline:
    """End-to-end evaluation of several methods on one catalog"""

    def __init__(
        self,
        catalog: Catalog,
        methods: Sequence[str] = METHODS,
        configs: Optional[Dict[str, MethodConfig]] = None,
        num_types: int = 5,
        cluster_seed: int = 0,
        runs: int = 10,
        seed: int = 0,
        quantiles: Optional[Sequence[int]] = DEFAULT_QUANTILES,
        body_holdout: float = 0.2,
        garment_holdout: float = 0.2,
        jobs: int = 1,
        metrics_path: Optional[Union[str, Path]] = None,
        db_path: Optional[str] = None,
        config_hash: str = '',
        catalog_name: str = 'synthetic',
    ):
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise DataQualityError(f"unknown methods {unknown}")
        self.catalog = catalog
        self.methods = list(methods)
        self.configs = {**default_method_configs(), **(configs or {})}
        self.num_types = num_types
        self.cluster_seed = cluster_seed
        self.runs = runs
        self.seed = seed
        self.quantiles = quantiles
        self.body_holdout = body_holdout
        self.garment_holdout = garment_holdout
        self.jobs = jobs
        self.metrics_path = metrics_path
        self.db_path = db_path
        self.config_hash = config_hash
        self.catalog_name = catalog_name

        self.clustering: Optional[Clustering] = None
        self.labels: Optional[PropagatedLabels] = None
        self.reports: List[ScenarioReport] = []
        self.trajectories: Dict[Tuple[str, int], pd.DataFrame] = {}
        self.stats = {
            'bodies': len(catalog.bodies),
            'garments': len(catalog.garments),
            'methods_evaluated': 0,
            'runs': runs,
            'metrics_written': False,
            'warehouse': None,
            'errors': []
        }

    @classmethod
    def from_spec(cls, spec: SyntheticSpec, **settings) -> "ExperimentPipeline":
        settings.setdefault('num_types', spec.num_types)
        return cls(generate_synthetic(spec), **settings)

    def run(self) -> Dict[str, Any]:
        logger.info("=" * 60)
        logger.info(f"Starting experiment: {', '.join(self.methods)} over {self.runs} runs")
        logger.info("=" * 60)

        try:
            self._type_bodies()
            for method in self.methods:
                self._evaluate(method)
            if self.metrics_path:
                write_metrics(self.metrics_path, self.reports, self.config_hash)
                self.stats['metrics_written'] = True
            if self.db_path:
                self._load_warehouse()

            logger.info("=" * 60)
            logger.info("Experiment completed successfully!")
            logger.info("=" * 60)

        except Exception as e:
            logger.error(f"Experiment failed: {str(e)}")
            self.stats['errors'].append(str(e))
            raise

        return self.stats

    def _type_bodies(self):
        if self.clustering is None:
            self.clustering = cluster_bodies(self.catalog, k=self.num_types, seed=self.cluster_seed)
        self.labels = propagate_labels(self.catalog, self.clustering)
        logger.info(f"Body types: sizes {self.clustering.sizes()}")

    def _evaluate(self, method: str):
        trainer = method_factory(
            method, self.configs[method], self.catalog, self.labels, self.clustering, self.trajectories
        )
        report = evaluate_scenarios(
            trainer, self.catalog, self.clustering, self.labels,
            runs=self.runs,
            seed=self.seed,
            method=method,
            quantiles=self.quantiles,
            body_holdout=self.body_holdout,
            garment_holdout=self.garment_holdout,
            jobs=self.jobs,
        )
        self.reports.append(report)
        self.stats['methods_evaluated'] += 1

    def _load_warehouse(self):
        record = ExperimentRecord(
            config_hash=self.config_hash or 'unhashed',
            catalog_name=self.catalog_name,
            num_bodies=len(self.catalog.bodies),
            num_garments=len(self.catalog.garments),
            num_types=self.clustering.k,
            runs=self.runs,
            base_seed=self.seed,
        )
        self.stats['warehouse'] = WarehouseLoader(self.db_path).run(record, self.reports, self.trajectories)

    def report(self, method: str) -> ScenarioReport:
        for report in self.reports:
            if report.method == method:
                return report
        raise KeyError(method)
