"""
ViBE - Evaluation
Mann-Whitney AUC, the three cold-start scenarios over repeated
split/train/score runs, body-specificity quantile curves, and AUCs over
pairwise preference and judged-pair files.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.records import Catalog, DataQualityError
from pipelines.body_typing import (
    SCENARIOS, Clustering, PropagatedLabels, ScenarioPairs, Split, build_split
)
from pipelines.catalog_io import load_id_triples, write_atomic

logger = logging.getLogger('Evaluation')

DEFAULT_QUANTILES = (100, 75, 50, 25)

# scorer(body_ids, garment_ids) -> one score per aligned pair, higher = more compatible
PairScorer = Callable[[Sequence[str], Sequence[str]], np.ndarray]
# trainer(split, seed) -> scorer
ScorerFactory = Callable[[Split, int], PairScorer]


def auc(positive_scores, negative_scores) -> float:
    """Probability a positive outscores a negative, ties counted half, via midranks"""
    pos = np.asarray(positive_scores, dtype=np.float64).ravel()
    neg = np.asarray(negative_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise DataQualityError("AUC needs at least one positive and one negative score")
    ranks = pd.Series(np.concatenate([pos, neg])).rank(method='average').to_numpy()
    rank_sum = ranks[:pos.size].sum()
    return float((rank_sum - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size))


def scenario_auc(scores: np.ndarray, pairs: ScenarioPairs) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    return auc(scores[pairs.labels], scores[~pairs.labels])


def garment_versatility(labels: PropagatedLabels, garment_ids: Sequence[str]) -> Dict[str, int]:
    return {g: labels.versatility(g) for g in garment_ids}


def versatility_quantile_curve(
    scores: np.ndarray,
    pairs: ScenarioPairs,
    versatility: Mapping[str, int],
    quantiles: Sequence[int] = DEFAULT_QUANTILES,
) -> List[Tuple[int, float]]:
    """
    AUC over pairs whose garment is among the q% most body-specific, for
    each quantile q. Garments are ordered by (versatility, garment id) and the
    first ceil(q% of them) are kept, so ties in versatility are cut by id.
    """
    scores = np.asarray(scores, dtype=np.float64)
    garments = sorted(set(pairs.garment_ids), key=lambda g: (versatility[g], g))
    garment_column = np.asarray(pairs.garment_ids)
    curve = []
    for q in quantiles:
        keep_count = max(math.ceil(round(len(garments) * q / 100.0, 9)), 1)
        kept = np.isin(garment_column, garments[:keep_count])
        positives = scores[kept & pairs.labels]
        negatives = scores[kept & ~pairs.labels]
        if positives.size == 0 or negatives.size == 0:
            logger.warning(f"Quantile {q}% leaves no positives or no negatives; point omitted")
            continue
        curve.append((int(q), auc(positives, negatives)))
    return curve


@dataclass
class ScenarioReport:
    method: str
    seeds: List[int] = field(default_factory=list)
    runs: Dict[str, List[float]] = field(default_factory=dict)
    # scenario -> quantile -> per-run AUC
    specificity: Dict[str, Dict[int, List[float]]] = field(default_factory=dict)

    def mean(self, scenario: str) -> float:
        return float(np.mean(self.runs[scenario]))

    def std(self, scenario: str) -> float:
        """Population standard deviation over runs"""
        return float(np.std(self.runs[scenario]))

    @property
    def num_runs(self) -> int:
        return len(self.seeds)

    def specificity_curve(self, scenario: str = 'iii') -> List[Tuple[int, float]]:
        """Mean AUC per quantile over the runs that produced the point"""
        points = self.specificity.get(scenario, {})
        return [(q, float(np.mean(points[q]))) for q in sorted(points, reverse=True)]


def evaluate_run(
    scorer: PairScorer,
    split: Split,
    labels: PropagatedLabels,
    quantiles: Optional[Sequence[int]] = None,
) -> Tuple[Dict[str, float], Dict[str, Dict[int, float]]]:
    """AUC per scenario for one trained scorer, plus specificity points when quantiles are given"""
    aucs, curves = {}, {}
    for scenario in SCENARIOS:
        pairs = split.scenarios[scenario]
        scores = np.asarray(scorer(pairs.body_ids, pairs.garment_ids), dtype=np.float64)
        if not np.all(np.isfinite(scores)):
            raise DataQualityError(f"scenario ({scenario}): scorer produced non-finite scores")
        aucs[scenario] = scenario_auc(scores, pairs)
        if quantiles:
            versatility = garment_versatility(labels, sorted(set(pairs.garment_ids)))
            curves[scenario] = dict(versatility_quantile_curve(scores, pairs, versatility, quantiles))
    return aucs, curves


def evaluate_scenarios(
    trainer: ScorerFactory,
    catalog: Catalog,
    clustering: Clustering,
    labels: PropagatedLabels,
    runs: int = 10,
    seed: int = 0,
    method: str = 'vibe',
    quantiles: Optional[Sequence[int]] = None,
    body_holdout: float = 0.2,
    garment_holdout: float = 0.2,
    jobs: int = 1,
) -> ScenarioReport:
    """
    Run r builds the split with seed + r, trains through trainer(split, seed + r)
    and scores every scenario pair list.
    """
    if runs < 1:
        raise DataQualityError("runs must be at least 1")
    seeds = [seed + r for r in range(runs)]
    logger.info(f"Evaluating {method}: {runs} runs, seeds {seeds[0]}..{seeds[-1]}, jobs={jobs}")

    def one_run(run_seed: int):
        split = build_split(catalog, labels, clustering, body_holdout, garment_holdout, seed=run_seed)
        scorer = trainer(split, run_seed)
        return evaluate_run(scorer, split, labels, quantiles)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one_run, seeds))
    else:
        results = [one_run(s) for s in seeds]

    report = ScenarioReport(method=method, seeds=seeds)
    for scenario in SCENARIOS:
        report.runs[scenario] = [aucs[scenario] for aucs, _ in results]
        if quantiles:
            points: Dict[int, List[float]] = {}
            for _, curves in results:
                for q, value in curves[scenario].items():
                    points.setdefault(q, []).append(value)
            report.specificity[scenario] = points
        logger.info(
            f"{method} scenario ({scenario}): AUC {report.mean(scenario):.4f} +/- {report.std(scenario):.4f}"
        )
    return report


@dataclass(frozen=True)
class PreferencePair:
    body_id: str
    preferred_id: str
    rejected_id: str

    def __post_init__(self):
        if self.preferred_id == self.rejected_id:
            raise DataQualityError(f"preference pair for {self.body_id} compares {self.preferred_id} with itself")


def load_preferences(path: Union[str, Path]) -> List[PreferencePair]:
    return [PreferencePair(*row) for row in load_id_triples(path)]


def load_judgments(path: Union[str, Path]) -> List[Tuple[str, str, bool]]:
    return [(b, g, flag == '1') for b, g, flag in load_id_triples(path, label_column=True)]


def _check_ids(catalog: Optional[Catalog], body_ids, garment_ids):
    if catalog is None:
        return
    for body_id in body_ids:
        if body_id not in catalog.body_index:
            raise DataQualityError(f"unknown body_id {body_id}")
    for garment_id in garment_ids:
        if garment_id not in catalog.garment_index:
            raise DataQualityError(f"unknown garment_id {garment_id}")


def preference_auc(scorer: PairScorer, pairs: Sequence[PreferencePair], catalog: Optional[Catalog] = None) -> float:
    """Fraction of pairs where the preferred garment outscores the rejected one, ties half"""
    if not pairs:
        raise DataQualityError("preference_auc needs at least one pair")
    bodies = [p.body_id for p in pairs]
    _check_ids(catalog, bodies, [p.preferred_id for p in pairs] + [p.rejected_id for p in pairs])
    preferred = np.asarray(scorer(bodies, [p.preferred_id for p in pairs]), dtype=np.float64)
    rejected = np.asarray(scorer(bodies, [p.rejected_id for p in pairs]), dtype=np.float64)
    wins = np.count_nonzero(preferred > rejected) + 0.5 * np.count_nonzero(preferred == rejected)
    return float(wins / len(pairs))


def judged_pair_auc(
    scorer: PairScorer, judgments: Sequence[Tuple[str, str, bool]], catalog: Optional[Catalog] = None
) -> float:
    """AUC over independently judged (body, garment, suitable) triples"""
    bodies = [j[0] for j in judgments]
    garments = [j[1] for j in judgments]
    _check_ids(catalog, bodies, garments)
    flags = np.array([j[2] for j in judgments], dtype=bool)
    scores = np.asarray(scorer(bodies, garments), dtype=np.float64)
    return auc(scores[flags], scores[~flags])


def label_scorer(labels: PropagatedLabels, clustering: Clustering) -> PairScorer:
    """Scores each pair with its own type-level label"""
    def score(body_ids, garment_ids):
        return np.array([
            1.0 if labels.is_positive(clustering.assignment[b], g) else 0.0
            for b, g in zip(body_ids, garment_ids)
        ])
    return score


def oracle_scorer(catalog: Catalog) -> PairScorer:
    if catalog.oracle is None:
        raise DataQualityError("catalog has no compatibility oracle")

    def score(body_ids, garment_ids):
        return np.array([1.0 if catalog.oracle[(b, g)] else 0.0 for b, g in zip(body_ids, garment_ids)])
    return score


def constant_scorer(value: float = 0.0) -> PairScorer:
    def score(body_ids, garment_ids):
        return np.full(len(body_ids), float(value))
    return score


# Metrics files

def _format_value(value: float) -> str:
    return repr(float(value))


def format_metrics(reports: Sequence[ScenarioReport], config_hash: str = '') -> str:
    """key=value lines in a fixed order, no timestamps"""
    lines = [f"config_hash={config_hash}"]
    for report in reports:
        prefix = report.method
        lines.append(f"{prefix}.runs={report.num_runs}")
        lines.append(f"{prefix}.seeds={','.join(str(s) for s in report.seeds)}")
        for scenario in SCENARIOS:
            if scenario not in report.runs:
                continue
            key = f"{prefix}.scenario.{scenario}"
            lines.append(f"{key}.mean={_format_value(report.mean(scenario))}")
            lines.append(f"{key}.std={_format_value(report.std(scenario))}")
            lines.append(f"{key}.per_run={','.join(_format_value(v) for v in report.runs[scenario])}")
        for scenario in SCENARIOS:
            for q, value in report.specificity_curve(scenario):
                lines.append(f"{prefix}.specificity.{scenario}.q{q}={_format_value(value)}")
    return '\n'.join(lines) + '\n'


def write_metrics(path: Union[str, Path], reports: Sequence[ScenarioReport], config_hash: str = ''):
    write_atomic(path, format_metrics(reports, config_hash))
    logger.info(f"Wrote metrics for {len(reports)} method(s) to {path}")


def read_metrics(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Metrics file not found: {path}")
    metrics = {}
    for lineno, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip() or line.startswith('#'):
            continue
        if '=' not in line:
            raise DataQualityError(f"{path}:{lineno}: expected key=value")
        key, value = line.split('=', 1)
        metrics[key.strip()] = value.strip()
    return metrics
