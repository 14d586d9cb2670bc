"""
ViBE - Feature preprocessing
Standardization with persisted training statistics and multi-photo aggregation.
"""

from typing import Optional, Sequence, Tuple

import numpy as np

from models.records import (
    Catalog, DataQualityError, FeatureStats, StandardizationStats
)


def standardize(values, stats: Optional[FeatureStats] = None) -> Tuple[np.ndarray, FeatureStats]:
    """
    Standardize rows per dimension.

    Without stats the mean and population std are computed from the inputs
    (training mode) and returned; with stats they are reused. Dimensions
    with zero variance map to 0.
    """
    x = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if x.size == 0:
        raise DataQualityError("cannot standardize an empty set of vectors")

    if stats is None:
        stats = FeatureStats(mean=x.mean(axis=0), std=x.std(axis=0))
    elif stats.dim != x.shape[1]:
        raise DataQualityError(f"standardization stats cover {stats.dim} dims, got {x.shape[1]}")

    mean = np.asarray(stats.mean)
    std = np.asarray(stats.std)
    safe = np.where(std > 0, std, 1.0)
    out = np.where(std > 0, (x - mean) / safe, 0.0)
    return out, stats


def median_aggregate(samples: Sequence[Sequence[float]]) -> np.ndarray:
    """Coordinate-wise median of per-photo shape estimates (even counts average the middle pair)"""
    if len(samples) == 0:
        raise DataQualityError("median_aggregate needs at least one sample")
    return np.median(np.asarray(samples, dtype=np.float64), axis=0)


def fit_standardization(
    catalog: Catalog, body_ids: Sequence[str], garment_ids: Sequence[str]
) -> StandardizationStats:
    """Statistics from the training bodies and garments only"""
    _, smpl = standardize(catalog.smpl_matrix(body_ids))
    _, vitals = standardize(catalog.vitals_matrix(body_ids))
    _, visual = standardize(catalog.visual_matrix(garment_ids))
    return StandardizationStats(smpl=smpl, vitals=vitals, visual=visual)


def clustering_features(catalog: Catalog, stats: Optional[FeatureStats] = None) -> Tuple[np.ndarray, FeatureStats]:
    """Standardized concatenation of smpl (10) and vitals (4) for every body"""
    raw = np.hstack([catalog.smpl_matrix(), catalog.vitals_matrix()])
    return standardize(raw, stats)

