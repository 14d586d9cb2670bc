"""
ViBE - Recommendation explanations
A body's nearest and furthest garments in the embedding train a linear
attribute probe; its largest and smallest weights name the attributes that
suit or do not suit that body.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from models.records import BodyRecord, Catalog, DataQualityError
from models.cf import logistic
from models.vibe import GarmentTable, ViBEModel, embed_body, embed_garments

logger = logging.getLogger('Explain')


@dataclass
class ProbeResult:
    weights: np.ndarray
    intercept: float
    accuracy: float
    iterations: int
    converged: bool


@dataclass
class AttributeReport:
    body_id: str
    suitable: List[Tuple[str, float]] = field(default_factory=list)
    unsuitable: List[Tuple[str, float]] = field(default_factory=list)
    probe_accuracy: float = 0.0
    extremes: int = 0


def select_extremes(
    model: ViBEModel, body: BodyRecord, garments: GarmentTable, m: int = 400
) -> Tuple[List[str], List[str]]:
    """
    The m nearest (suitable) and m furthest (unsuitable) garments to the
    body embedding, ordered by (distance, garment id).
    """
    n = len(garments.ids)
    if n == 0:
        raise DataQualityError("select_extremes needs a nonempty garment pool")
    if 2 * m > n:
        clamped = n // 2
        logger.warning(f"m={m} exceeds half of the {n} garments; using m={clamped}")
        m = clamped

    z_body = embed_body(model, body)
    distances = np.linalg.norm(embed_garments(model, garments) - z_body, axis=1)
    ids = np.asarray(garments.ids)
    order = np.lexsort((ids, distances))
    ranked = [garments.ids[i] for i in order]
    return ranked[:m], (ranked[n - m:] if m else [])


def fit_attribute_probe(
    suitable: np.ndarray,
    unsuitable: np.ndarray,
    ridge: float = 1e-3,
    tolerance: float = 1e-6,
    max_iter: int = 20000,
) -> ProbeResult:
    """
    Logistic regression (suitable = 1) on binary attribute rows by full-batch
    gradient descent (Nesterov momentum) on the mean log-loss plus
    ridge/2 * |w|^2. The intercept is not penalized.
    """
    pos = np.atleast_2d(np.asarray(suitable, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(unsuitable, dtype=np.float64))
    if pos.shape[0] == 0 or neg.shape[0] == 0 or pos.size == 0 or neg.size == 0:
        raise DataQualityError("the attribute probe needs both suitable and unsuitable garments")
    if ridge <= 0:
        raise DataQualityError(f"ridge must be positive, got {ridge}")
    x = np.vstack([pos, neg])
    y = np.concatenate([np.ones(pos.shape[0]), np.zeros(neg.shape[0])])
    n, a = x.shape
    design = np.hstack([x, np.ones((n, 1))])

    # 1/L step for the smooth objective
    curvature = 0.25 * np.linalg.eigvalsh(design.T @ design / n).max() + ridge
    step = 1.0 / curvature
    penalty = np.full(a + 1, ridge)
    penalty[-1] = 0.0

    momentum = (np.sqrt(curvature) - np.sqrt(ridge)) / (np.sqrt(curvature) + np.sqrt(ridge))

    def gradient_at(point: np.ndarray) -> np.ndarray:
        return design.T @ (logistic(design @ point) - y) / n + penalty * point

    theta = np.zeros(a + 1)
    lookahead = theta.copy()
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        if np.linalg.norm(gradient_at(theta)) < tolerance:
            converged = True
            break
        previous = theta
        theta = lookahead - step * gradient_at(lookahead)
        lookahead = theta + momentum * (theta - previous)
    if not converged:
        logger.warning(f"Attribute probe stopped at the iteration cap ({max_iter})")

    predictions = design @ theta > 0
    accuracy = float(np.mean(predictions == (y == 1)))
    return ProbeResult(theta[:a], float(theta[-1]), accuracy, iteration, converged)


def explain_report(
    model: ViBEModel,
    body: BodyRecord,
    catalog: Catalog,
    m: int = 400,
    top_k: int = 5,
    garment_ids: Optional[Sequence[str]] = None,
    ridge: float = 1e-3,
) -> AttributeReport:
    pool = catalog.garments if garment_ids is None else [catalog.garment(g) for g in garment_ids]
    table = GarmentTable.from_records(pool, model.stats)
    suitable, unsuitable = select_extremes(model, body, table, m)
    probe = fit_attribute_probe(
        table.attributes[table.rows(suitable)], table.attributes[table.rows(unsuitable)], ridge=ridge
    )

    names = catalog.attribute_vocabulary
    k = min(top_k, len(names) // 2)
    # stable descending order, ties by attribute index
    order = np.argsort(-probe.weights, kind='stable')
    top = [int(i) for i in order[:k]]
    chosen = set(top)
    bottom = [int(i) for i in order[::-1] if int(i) not in chosen][:k]

    report = AttributeReport(
        body_id=body.body_id,
        suitable=[(names[i], float(probe.weights[i])) for i in top],
        unsuitable=[(names[i], float(probe.weights[i])) for i in bottom],
        probe_accuracy=probe.accuracy,
        extremes=len(suitable),
    )
    logger.info(f"Explained {body.body_id}: probe accuracy {probe.accuracy:.3f} over {2 * len(suitable)} garments")
    return report


def format_report(report: AttributeReport) -> str:
    lines = [f"Body {report.body_id} (probe accuracy {report.probe_accuracy:.3f}, m={report.extremes})"]
    lines.append("  Suitable attributes:")
    lines.extend(f"    {name:<20} {weight:+.4f}" for name, weight in report.suitable)
    lines.append("  Unsuitable attributes:")
    lines.extend(f"    {name:<20} {weight:+.4f}" for name, weight in report.unsuitable)
    return '\n'.join(lines) + '\n'


def report_key_values(report: AttributeReport) -> str:
    prefix = f"explain.{report.body_id}"
    lines = [f"{prefix}.probe_accuracy={report.probe_accuracy!r}", f"{prefix}.m={report.extremes}"]
    for rank, (name, weight) in enumerate(report.suitable, start=1):
        lines.append(f"{prefix}.suitable.{rank}={name}:{weight!r}")
    for rank, (name, weight) in enumerate(report.unsuitable, start=1):
        lines.append(f"{prefix}.unsuitable.{rank}={name}:{weight!r}")
    return '\n'.join(lines) + '\n'


def rank_garments(scores: np.ndarray, garment_ids: Sequence[str], k: int) -> Tuple[List[Tuple[str, float]], List[Tuple[str, float]]]:
    """Top-k and bottom-k garments by score; equal scores order by garment id"""
    scores = np.asarray(scores, dtype=np.float64)
    ids = np.asarray(garment_ids)
    order = np.lexsort((ids, -scores))
    best = [(str(ids[i]), float(scores[i])) for i in order[:k]]
    worst_order = np.lexsort((ids, scores))
    worst = [(str(ids[i]), float(scores[i])) for i in worst_order[:k]]
    return best, worst
