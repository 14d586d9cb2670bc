"""
ViBE - Built-in verification suite
Fast oracle checks (finite differences, brute-force enumeration, exact
identities) plus, with --full, the planted-oracle experiments on the
default synthetic catalog.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from models.cf import CFModel, bce_loss_and_grad, cf_predict_pairs
from models.records import BodyRecord, Catalog, GarmentRecord, SyntheticSpec
from models.vibe import (
    BodyTable, GarmentTable, Margins, Triplet, TripletBatch, ViBEModel,
    embed_bodies, embed_garments, margin_loss, median_pairwise_distance, score_pairs, total_loss_and_grad
)
from numkit import grad_check_detailed
from pipelines.body_typing import Clustering, build_split, cluster_bodies, propagate_labels
from pipelines.checkpoint import checkpoint_roundtrip
from pipelines.evaluation import auc, format_metrics
from pipelines.experiment import ExperimentPipeline, train_method
from pipelines.explain import explain_report
from pipelines.synthetic import generate_synthetic, noise_free_spec
from pipelines.train_cf import CFTrainConfig, CFTrainer
from pipelines.train_vibe import ViBETrainConfig

logger = logging.getLogger('Verify')

GRADIENT_TOLERANCE = 1e-4
NORM_TOLERANCE = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


# Micro-instances

def micro_tables(
    rng: np.random.Generator, num_bodies: int = 4, num_garments: int = 5,
    num_attributes: int = 6, visual_dim: int = 5,
) -> Tuple[BodyTable, GarmentTable]:
    bodies = BodyTable(
        [f"b{i}" for i in range(num_bodies)],
        rng.normal(size=(num_bodies, 10)),
        rng.normal(size=(num_bodies, 4)),
    )
    garments = GarmentTable(
        [f"g{i}" for i in range(num_garments)],
        (rng.random((num_garments, num_attributes)) < 0.5).astype(np.float64),
        rng.normal(size=(num_garments, visual_dim)),
    )
    return bodies, garments


def micro_vibe_problem(rng: np.random.Generator, triplets: int = 3) -> Tuple[ViBEModel, TripletBatch]:
    """Small random model plus a batch with both triplet kinds"""
    bodies, garments = micro_tables(rng)
    model = ViBEModel.initialize(
        garments.attributes.shape[1], garments.visual.shape[1], seed=int(rng.integers(0, 2 ** 31))
    )
    body_cloth, body_body = [], []
    for _ in range(triplets):
        anchor = str(rng.choice(bodies.ids))
        positive, negative = (str(g) for g in rng.choice(garments.ids, size=2, replace=False))
        body_cloth.append(Triplet(anchor, positive, negative, 'body_cloth'))
        a, p, n = (str(b) for b in rng.choice(bodies.ids, size=3, replace=False))
        body_body.append(Triplet(a, p, n, 'body_body'))
    return model, TripletBatch(body_cloth, body_body, bodies, garments)


def micro_cf_problem(
    rng: np.random.Generator, variant: str, pairs: int = 8
) -> Tuple[CFModel, BodyTable, GarmentTable, List[str], List[str], np.ndarray]:
    """Random CF model; one body and one garment are left out of its index"""
    bodies, garments = micro_tables(rng)
    model = CFModel.initialize(
        variant, bodies.ids[:-1], garments.ids[:-1],
        latent_dim=3, side_dim=2,
        garment_feature_dim=garments.attributes.shape[1] + garments.visual.shape[1],
        init_scale=0.5,
        seed=int(rng.integers(0, 2 ** 31)),
    )
    params = model.get_flat()
    model.set_flat(params + rng.normal(0.0, 0.3, size=params.size))
    body_ids = [str(b) for b in rng.choice(bodies.ids, size=pairs)]
    garment_ids = [str(g) for g in rng.choice(garments.ids, size=pairs)]
    targets = (rng.random(pairs) < 0.5).astype(np.float64)
    return model, bodies, garments, body_ids, garment_ids, targets


def vibe_objective(model: ViBEModel, batch: TripletBatch, margins: Margins = Margins()):
    def objective(params: np.ndarray):
        probe = model.copy()
        probe.set_flat(params)
        return total_loss_and_grad(probe, batch, margins)
    return objective


def cf_objective(model: CFModel, bodies, garments, body_ids, garment_ids, targets):
    def objective(params: np.ndarray):
        model.set_flat(params)
        return bce_loss_and_grad(model, bodies, garments, body_ids, garment_ids, targets)
    return objective


def brute_force_auc(positive_scores, negative_scores) -> float:
    wins = 0.0
    for p in positive_scores:
        for n in negative_scores:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(positive_scores) * len(negative_scores))


def random_labeling_instance(rng: np.random.Generator) -> Tuple[Catalog, Clustering]:
    num_bodies = int(rng.integers(1, 9))
    num_garments = int(rng.integers(1, 13))
    k = int(rng.integers(1, 4))
    bodies = [BodyRecord(f"b{i}", rng.normal(size=10), rng.uniform(50, 150, size=4)) for i in range(num_bodies)]
    garments = [GarmentRecord(f"g{j}", 'dress', [0, 1], [0.0]) for j in range(num_garments)]
    positives = {
        (b.body_id, g.garment_id) for b in bodies for g in garments if rng.random() < 0.3
    }
    catalog = Catalog(bodies, garments, frozenset(positives), ['a0', 'a1'])
    assignment = {b.body_id: int(rng.integers(0, k)) for b in bodies}
    return catalog, Clustering(k=k, centroids=np.zeros((k, 14)), assignment=assignment)


# Fast checks

def check_vibe_gradients(seed: int = 0, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        model, batch = micro_vibe_problem(rng)
        result = grad_check_detailed(vibe_objective(model, batch), model.get_flat())
        worst = max(worst, result.max_relative_error)
    return CheckResult(
        'vibe_gradient', worst < GRADIENT_TOLERANCE,
        f"max relative error {worst:.2e} over {instances} instances"
    )


def check_cf_gradients(seed: int = 0, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for variant in ('agnostic', 'aware'):
        for _ in range(instances):
            model, bodies, garments, body_ids, garment_ids, targets = micro_cf_problem(rng, variant)
            objective = cf_objective(model, bodies, garments, body_ids, garment_ids, targets)
            result = grad_check_detailed(objective, model.get_flat())
            worst = max(worst, result.max_relative_error)
    return CheckResult(
        'cf_gradient', worst < GRADIENT_TOLERANCE,
        f"max relative error {worst:.2e} over {2 * instances} instances"
    )


def check_hypersphere(seed: int = 0, samples: int = 10000) -> CheckResult:
    rng = np.random.default_rng(seed)
    half = samples // 2
    bodies, garments = micro_tables(rng, num_bodies=half, num_garments=samples - half)
    model = ViBEModel.initialize(garments.attributes.shape[1], garments.visual.shape[1], seed=seed)
    norms = np.concatenate([
        np.linalg.norm(embed_bodies(model, bodies), axis=1),
        np.linalg.norm(embed_garments(model, garments), axis=1),
    ])
    deviation = float(np.max(np.abs(norms - 1.0)))
    return CheckResult(
        'hypersphere', deviation <= NORM_TOLERANCE,
        f"max |norm - 1| = {deviation:.2e} over {norms.size} embeddings"
    )


def check_margin_identities() -> CheckResult:
    margins = Margins(0.2, 0.4)
    a = np.array([[0.0, 0.0, 0.0, 0.0]])
    # D(a, p) = 0.5, D(a, n) = 0.1
    worked = margin_loss(a, np.array([[0.5, 0.0, 0.0, 0.0]]), np.array([[0.0, 0.1, 0.0, 0.0]]), margins)
    # D(a, p) = 0.1, D(a, n) = 0.9: both hinges inactive
    inactive = margin_loss(a, np.array([[0.1, 0.0, 0.0, 0.0]]), np.array([[0.0, 0.9, 0.0, 0.0]]), margins)
    passed = abs(worked - 0.6) < 1e-12 and inactive == 0.0
    return CheckResult('margin_loss', passed, f"worked example {worked!r}, inactive region {inactive!r}")


def check_auc_equivalence(seed: int = 0, instances: int = 200) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        pos = rng.integers(0, 5, size=int(rng.integers(1, 51))) / 4.0
        neg = rng.integers(0, 5, size=int(rng.integers(1, 51))) / 4.0
        if auc(pos, neg) != brute_force_auc(pos, neg):
            mismatches += 1
    return CheckResult('auc_brute_force', mismatches == 0, f"{mismatches} mismatches in {instances} instances")


def check_label_propagation(seed: int = 0, instances: int = 500) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        catalog, clustering = random_labeling_instance(rng)
        labels = propagate_labels(catalog, clustering)
        everything = {g.garment_id for g in catalog.garments}
        for t in clustering.types:
            members = {b for b, bt in clustering.assignment.items() if bt == t}
            expected = {g for g in everything if any((b, g) in catalog.positives for b in members)}
            if labels.positives[t] != expected or labels.negatives[t] != everything - expected:
                mismatches += 1
                break
    return CheckResult('label_propagation', mismatches == 0, f"{mismatches} mismatches in {instances} instances")


def check_checkpoint_roundtrip(seed: int = 0, pairs: int = 100) -> CheckResult:
    rng = np.random.default_rng(seed)
    bodies, garments = micro_tables(rng, num_bodies=10, num_garments=12)
    body_ids = [str(b) for b in rng.choice(bodies.ids, size=pairs)]
    garment_ids = [str(g) for g in rng.choice(garments.ids, size=pairs)]

    vibe = ViBEModel.initialize(garments.attributes.shape[1], garments.visual.shape[1], seed=seed)
    restored = checkpoint_roundtrip(vibe, 'vibe')
    same = np.array_equal(
        score_pairs(vibe, bodies, garments, body_ids, garment_ids),
        score_pairs(restored, bodies, garments, body_ids, garment_ids),
    )
    cf = CFModel.initialize(
        'aware', bodies.ids, garments.ids, latent_dim=4, side_dim=2,
        garment_feature_dim=garments.attributes.shape[1] + garments.visual.shape[1], seed=seed,
    )
    restored_cf = checkpoint_roundtrip(cf, 'cf-aware')
    same = same and np.array_equal(
        cf_predict_pairs(cf, bodies, garments, body_ids, garment_ids),
        cf_predict_pairs(restored_cf, bodies, garments, body_ids, garment_ids),
    )
    return CheckResult('checkpoint_roundtrip', bool(same), f"{pairs} pair scores bit-identical: {bool(same)}")


FAST_CHECKS: List[Callable[[], CheckResult]] = [
    check_vibe_gradients,
    check_cf_gradients,
    check_hypersphere,
    check_margin_identities,
    check_auc_equivalence,
    check_label_propagation,
    check_checkpoint_roundtrip,
]


# Planted-oracle experiments

def desk_configs(seed: int = 0) -> Dict[str, object]:
    return {
        'vibe': ViBETrainConfig(seed=seed),
        'agnostic-embed': ViBETrainConfig.agnostic(seed=seed),
        'cf-agnostic': CFTrainConfig.desk_scale(variant='agnostic', seed=seed),
        'cf-aware': CFTrainConfig.desk_scale(variant='aware', seed=seed),
    }


def _prepared(spec: SyntheticSpec, seed: int = 0):
    catalog = generate_synthetic(spec)
    clustering = cluster_bodies(catalog, k=spec.num_types, seed=seed)
    labels = propagate_labels(catalog, clustering)
    split = build_split(catalog, labels, clustering, seed=seed)
    return catalog, clustering, labels, split


def collapse_experiment(seed: int = 0) -> Tuple[float, float]:
    """Median pairwise garment distance trained with and without the body-body term"""
    catalog, clustering, labels, split = _prepared(SyntheticSpec(seed=seed), seed)
    medians = []
    for use_body_body in (True, False):
        model, _ = train_method(
            'vibe', ViBETrainConfig(seed=seed, use_body_body=use_body_body), catalog, split, labels, clustering
        )
        medians.append(median_pairwise_distance(model, GarmentTable.from_catalog(catalog, model.stats)))
    return medians[0], medians[1]


def check_collapse(seed: int = 0) -> CheckResult:
    with_term, without_term = collapse_experiment(seed)
    return CheckResult(
        'collapse', without_term <= 0.5 * with_term,
        f"median distance without body-body {without_term:.4f}, with {with_term:.4f}"
    )


def method_comparison(seed: int = 0, runs: int = 10, spec: Optional[SyntheticSpec] = None) -> ExperimentPipeline:
    pipeline = ExperimentPipeline.from_spec(
        spec or SyntheticSpec(seed=seed), configs=desk_configs(seed), runs=runs, seed=seed, cluster_seed=seed
    )
    pipeline.run()
    return pipeline


def ordering_result(pipeline: ExperimentPipeline) -> CheckResult:
    mean = {m: pipeline.report(m).mean('iii') for m in pipeline.methods}
    passed = (
        mean['vibe'] >= mean['agnostic-embed'] + 0.05
        and mean['vibe'] >= mean['cf-aware']
        and mean['cf-aware'] >= mean['cf-agnostic']
        and mean['vibe'] >= 0.70
    )
    detail = ', '.join(f"{m} {v:.4f}" for m, v in mean.items())
    return CheckResult('method_ordering', passed, f"scenario (iii) mean AUC: {detail}")


def specificity_gaps(pipeline: ExperimentPipeline, scenario: str = 'iii') -> List[Tuple[int, float]]:
    vibe = dict(pipeline.report('vibe').specificity_curve(scenario))
    agnostic = dict(pipeline.report('agnostic-embed').specificity_curve(scenario))
    return [(q, vibe[q] - agnostic[q]) for q in sorted(vibe, reverse=True) if q in agnostic]


def specificity_result(pipeline: ExperimentPipeline) -> CheckResult:
    gaps = specificity_gaps(pipeline)
    values = [g for _, g in gaps]
    gap = dict(gaps)
    passed = (
        25 in gap and 100 in gap
        and gap[25] >= gap[100] + 0.02
        and all(b >= a - 0.01 for a, b in zip(values, values[1:]))
    )
    detail = ', '.join(f"q{q} {g:+.4f}" for q, g in gaps)
    return CheckResult('specificity_trend', passed, f"ViBE minus agnostic gaps: {detail}")


def check_cf_training(seed: int = 0) -> CheckResult:
    catalog, clustering, labels, split = _prepared(SyntheticSpec(seed=seed), seed)
    ratios = {}
    for variant in ('agnostic', 'aware'):
        trainer = CFTrainer(CFTrainConfig.desk_scale(variant=variant, seed=seed), catalog, split, labels, clustering)
        trainer.fit()
        ratios[variant] = trainer.stats['final_loss'] / trainer.stats['initial_loss']

    agnostic = CFTrainer(CFTrainConfig.desk_scale(variant='agnostic', seed=seed), catalog, split, labels, clustering)
    aware = CFTrainer(
        CFTrainConfig.desk_scale(variant='aware', seed=seed, epochs=60, zero_side=True),
        catalog, split, labels, clustering,
    )
    agnostic_model, aware_model = agnostic.fit(), aware.fit()
    pairs = split.scenarios['iii']
    bodies = BodyTable.from_catalog(catalog, agnostic_model.stats)
    garments = GarmentTable.from_catalog(catalog, agnostic_model.stats)
    identical = np.array_equal(
        cf_predict_pairs(agnostic_model, bodies, garments, pairs.body_ids, pairs.garment_ids),
        cf_predict_pairs(aware_model, bodies, garments, pairs.body_ids, pairs.garment_ids),
    )
    passed = all(r <= 0.5 for r in ratios.values()) and identical
    detail = ', '.join(f"{v} final/initial BCE {r:.3f}" for v, r in ratios.items())
    return CheckResult('cf_training', passed, f"{detail}; zeroed side matches agnostic: {identical}")


def explanation_hit_rate(seed: int = 0, m: int = 100, top_k: int = 3) -> float:
    """Share of test bodies whose top suitable attributes include their type's planted indicator"""
    catalog, clustering, labels, split = _prepared(noise_free_spec(seed=seed), seed)
    model, _ = train_method('vibe', ViBETrainConfig(seed=seed), catalog, split, labels, clustering)
    hits = 0
    for body_id in split.test_bodies:
        report = explain_report(model, catalog.body(body_id), catalog, m=m, top_k=top_k)
        planted = set(catalog.planted_indicators[catalog.planted_types[body_id]])
        hits += any(name in planted for name, _ in report.suitable)
    return hits / len(split.test_bodies)


def check_explanations(seed: int = 0) -> CheckResult:
    rate = explanation_hit_rate(seed)
    return CheckResult('explanation_fidelity', rate >= 0.9, f"planted indicator in top-3 for {rate:.1%} of test bodies")


def check_determinism(seed: int = 0) -> CheckResult:
    """Two identical short experiments must write byte-identical metrics"""
    spec = SyntheticSpec(seed=seed, num_garments=120)
    configs = {
        'vibe': ViBETrainConfig(seed=seed, epochs=6, schedule=((3, 0.3), (5, 0.3)), batches_per_epoch=4),
        'cf-aware': CFTrainConfig.desk_scale(variant='aware', seed=seed, epochs=24),
    }
    texts = []
    for _ in range(2):
        pipeline = ExperimentPipeline.from_spec(
            spec, methods=('vibe', 'cf-aware'), configs=configs, runs=2, seed=seed, cluster_seed=seed
        )
        pipeline.run()
        texts.append(format_metrics(pipeline.reports, 'determinism'))
    return CheckResult('determinism', texts[0] == texts[1], f"metrics identical across reruns: {texts[0] == texts[1]}")


def full_checks(seed: int = 0) -> List[Callable[[], CheckResult]]:
    comparison: Dict[str, ExperimentPipeline] = {}

    def compared() -> ExperimentPipeline:
        if 'pipeline' not in comparison:
            comparison['pipeline'] = method_comparison(seed)
        return comparison['pipeline']

    return [
        lambda: check_collapse(seed),
        lambda: ordering_result(compared()),
        lambda: specificity_result(compared()),
        lambda: check_cf_training(seed),
        lambda: check_explanations(seed),
        lambda: check_determinism(seed),
    ]


def run_checks(full: bool = False, seed: int = 0) -> List[CheckResult]:
    checks = [lambda c=c: c() for c in FAST_CHECKS]
    if full:
        checks += full_checks(seed)

    results = []
    for check in checks:
        started = time.perf_counter()
        result = check()
        result.seconds = time.perf_counter() - started
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"{result.name}: {'PASS' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results


def format_results(results: List[CheckResult]) -> str:
    lines = [
        f"{'PASS' if r.passed else 'FAIL'}  {r.name:<22} {r.seconds:7.2f}s  {r.detail}" for r in results
    ]
    passed = sum(r.passed for r in results)
    lines.append(f"{passed}/{len(results)} checks passed")
    return '\n'.join(lines) + '\n'
