"""
ViBE - Body typing
Quantize bodies into types with k-means, propagate observed positives
within each type, and hold out bodies and garments for cold-start testing.
The types only serve to form training labels; embeddings stay continuous.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.records import BodyRecord, Catalog, DataQualityError, FeatureStats
from pipelines.catalog_io import format_real, write_atomic, _data_lines
from pipelines.preprocess import clustering_features, standardize

logger = logging.getLogger('BodyTyping')

PathLike = Union[str, Path]
SCENARIOS = ('i', 'ii', 'iii')
SCENARIO_NAMES = {
    'i': 'person seen, garment unseen',
    'ii': 'person unseen, garment seen',
    'iii': 'person unseen, garment unseen',
}


class SplitError(ValueError):
    """Raised when a catalog cannot be split per the holdout protocol"""
    pass


@dataclass
class Clustering:
    k: int
    centroids: np.ndarray
    assignment: Dict[str, int]
    # standardization applied to raw smpl+vitals before clustering
    feature_stats: Optional[FeatureStats] = None
    inertia: float = 0.0
    inertia_history: List[float] = field(default_factory=list)

    def members(self, type_index: int) -> List[str]:
        return sorted(b for b, t in self.assignment.items() if t == type_index)

    @property
    def types(self) -> List[int]:
        return list(range(self.k))

    def sizes(self) -> Dict[int, int]:
        return {t: len(self.members(t)) for t in self.types}


def _wcss(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sum((x - centroids[labels]) ** 2))


def _squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)


def _kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(0, n)]
    for i in range(1, k):
        dist_sq = _squared_distances(x, centroids[:i]).min(axis=1)
        total = dist_sq.sum()
        if total > 0:
            idx = rng.choice(n, p=dist_sq / total)
        else:
            idx = rng.integers(0, n)
        centroids[i] = x[idx]
    return centroids


def _repair_empty(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray, k: int):
    """Move the farthest point into each empty cluster"""
    for j in range(k):
        if np.any(labels == j):
            continue
        counts = np.bincount(labels, minlength=k)
        dist_sq = np.sum((x - centroids[labels]) ** 2, axis=1)
        dist_sq[counts[labels] <= 1] = -1.0
        far = int(np.argmax(dist_sq))
        centroids[j] = x[far]
        labels[far] = j


def _lloyd(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    centroids = _kmeans_plusplus(x, k, rng)
    labels = np.argmin(_squared_distances(x, centroids), axis=1)
    _repair_empty(x, centroids, labels, k)
    history = []
    for _ in range(max_iter):
        for j in range(k):
            centroids[j] = x[labels == j].mean(axis=0)
        history.append(_wcss(x, centroids, labels))

        new_labels = np.argmin(_squared_distances(x, centroids), axis=1)
        _repair_empty(x, centroids, new_labels, k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, history


def kmeans_fit(
    features: np.ndarray,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    restarts: int = 10,
    ids: Optional[Sequence[str]] = None,
    feature_stats: Optional[FeatureStats] = None,
) -> Clustering:
    """
    Lloyd's algorithm with k-means++ seeding; the restart with the lowest
    within-cluster sum of squares wins (earliest restart on ties).
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n = x.shape[0]
    if k < 1:
        raise DataQualityError("k must be at least 1")
    if k > n:
        raise DataQualityError(f"k={k} exceeds the number of points ({n})")
    ids = [str(i) for i in range(n)] if ids is None else list(ids)

    best = None
    for restart in range(max(1, restarts)):
        rng = np.random.default_rng([seed, restart])
        centroids, labels, history = _lloyd(x, k, rng, max_iter)
        inertia = _wcss(x, centroids, labels)
        if best is None or inertia < best[0]:
            best = (inertia, centroids.copy(), labels.copy(), history)

    inertia, centroids, labels, history = best
    logger.info(f"k-means: k={k}, {n} points, best inertia {inertia:.4f} over {restarts} restarts")
    return Clustering(
        k=k,
        centroids=centroids,
        assignment={body_id: int(t) for body_id, t in zip(ids, labels)},
        feature_stats=feature_stats,
        inertia=inertia,
        inertia_history=history,
    )


def cluster_bodies(catalog: Catalog, k: int = 5, seed: int = 0, max_iter: int = 100, restarts: int = 10) -> Clustering:
    """Cluster every catalog body on standardized smpl + vitals"""
    features, stats = clustering_features(catalog)
    return kmeans_fit(
        features, k, seed=seed, max_iter=max_iter, restarts=restarts,
        ids=[b.body_id for b in catalog.bodies], feature_stats=stats,
    )


def assign_type(clustering: Clustering, body_feature: np.ndarray) -> int:
    """Nearest centroid by Euclidean distance; lowest index wins ties"""
    feature = np.asarray(body_feature, dtype=np.float64).ravel()
    if feature.size != clustering.centroids.shape[1]:
        raise DataQualityError(
            f"body feature has {feature.size} dims, centroids have {clustering.centroids.shape[1]}"
        )
    distances = np.sum((clustering.centroids - feature) ** 2, axis=1)
    return int(np.argmin(distances))


def assign_body(clustering: Clustering, body: BodyRecord) -> int:
    """Type of a (possibly new) body, standardized like the clustered ones"""
    raw = body.features[None, :]
    feature = standardize(raw, clustering.feature_stats)[0] if clustering.feature_stats else raw
    return assign_type(clustering, feature[0])


@dataclass
class PropagatedLabels:
    positives: Dict[int, FrozenSet[str]]
    negatives: Dict[int, FrozenSet[str]]

    @property
    def types(self) -> List[int]:
        return sorted(self.positives)

    def versatility(self, garment_id: str) -> int:
        """Number of distinct types whose positive set contains the garment"""
        return sum(1 for t in self.positives if garment_id in self.positives[t])

    def is_positive(self, type_index: int, garment_id: str) -> bool:
        return garment_id in self.positives[type_index]


def propagate_labels(catalog: Catalog, clustering: Clustering) -> PropagatedLabels:
    """
    positive(type) = garments worn by any body of the type;
    negative(type) = garments worn by no body of the type.
    """
    missing = [b.body_id for b in catalog.bodies if b.body_id not in clustering.assignment]
    if missing:
        raise DataQualityError(f"clustering does not cover {len(missing)} bodies, e.g. {missing[0]}")

    worn: Dict[int, set] = {t: set() for t in clustering.types}
    for body_id, garment_id in catalog.positives:
        worn[clustering.assignment[body_id]].add(garment_id)

    all_garments = frozenset(g.garment_id for g in catalog.garments)
    positives = {t: frozenset(worn[t]) for t in clustering.types}
    negatives = {t: all_garments - positives[t] for t in clustering.types}
    return PropagatedLabels(positives=positives, negatives=negatives)


@dataclass
class ScenarioPairs:
    body_ids: List[str]
    garment_ids: List[str]
    labels: np.ndarray

    def __len__(self):
        return len(self.body_ids)

    @property
    def num_positive(self) -> int:
        return int(np.count_nonzero(self.labels))


@dataclass
class Split:
    seed: int
    train_bodies: List[str]
    test_bodies: List[str]
    heldout_by_type: Dict[int, FrozenSet[str]]
    train_garments: List[str]
    scenarios: Dict[str, ScenarioPairs] = field(default_factory=dict)

    @property
    def heldout(self) -> FrozenSet[str]:
        return frozenset().union(*self.heldout_by_type.values()) if self.heldout_by_type else frozenset()

    @property
    def heldout_garments(self) -> List[str]:
        return sorted(self.heldout)

    def train_positives(self, labels: PropagatedLabels, type_index: int) -> List[str]:
        return sorted(labels.positives[type_index] - self.heldout)

    def train_negatives(self, labels: PropagatedLabels, type_index: int) -> List[str]:
        return sorted(labels.negatives[type_index] - self.heldout)


def _holdout_count(fraction: float, size: int) -> int:
    # rounding first keeps 0.2 * 15 from ceiling to 4
    return math.ceil(round(fraction * size, 9))


def scenario_pairs(
    body_ids: Sequence[str], garment_ids: Sequence[str], labels: PropagatedLabels, clustering: Clustering
) -> ScenarioPairs:
    """Every body x garment combination, labeled through the body's type"""
    bodies, garments, flags = [], [], []
    for body_id in body_ids:
        positive = labels.positives[clustering.assignment[body_id]]
        for garment_id in garment_ids:
            bodies.append(body_id)
            garments.append(garment_id)
            flags.append(garment_id in positive)
    return ScenarioPairs(bodies, garments, np.asarray(flags, dtype=bool))


def attach_scenarios(split: Split, labels: PropagatedLabels, clustering: Clustering) -> Split:
    heldout = split.heldout_garments
    split.scenarios = {
        'i': scenario_pairs(split.train_bodies, heldout, labels, clustering),
        'ii': scenario_pairs(split.test_bodies, split.train_garments, labels, clustering),
        'iii': scenario_pairs(split.test_bodies, heldout, labels, clustering),
    }
    return split


def build_split(
    catalog: Catalog,
    labels: PropagatedLabels,
    clustering: Clustering,
    body_holdout: float = 0.2,
    garment_holdout: float = 0.2,
    seed: int = 0,
) -> Split:
    """
    Per type, hold out max(ceil(20%), 2) bodies and 20% of the type's
    positive garments. A garment held out for any type is excluded from
    training everywhere.
    """
    rng = np.random.default_rng(seed)
    train_bodies, test_bodies = [], []
    heldout_by_type: Dict[int, FrozenSet[str]] = {}

    for t in clustering.types:
        members = clustering.members(t)
        if len(members) < 3:
            raise SplitError(f"type {t} has {len(members)} bodies; at least 3 are needed to split")
        n_test = max(_holdout_count(body_holdout, len(members)), 2)
        test = set(rng.choice(members, size=n_test, replace=False).tolist())
        test_bodies.extend(sorted(test))
        train_bodies.extend(b for b in members if b not in test)

        positives = sorted(labels.positives[t])
        n_hold = _holdout_count(garment_holdout, len(positives))
        held = rng.choice(positives, size=n_hold, replace=False).tolist() if n_hold else []
        heldout_by_type[t] = frozenset(held)

    heldout = frozenset().union(*heldout_by_type.values())
    split = Split(
        seed=seed,
        train_bodies=sorted(train_bodies),
        test_bodies=sorted(test_bodies),
        heldout_by_type=heldout_by_type,
        train_garments=sorted(g.garment_id for g in catalog.garments if g.garment_id not in heldout),
    )
    attach_scenarios(split, labels, clustering)
    logger.info(
        f"Split (seed {seed}): {len(split.train_bodies)} train / {len(split.test_bodies)} test bodies, "
        f"{len(split.train_garments)} train / {len(heldout)} heldout garments"
    )
    return split


def dataset_statistics(split: Split, labels: PropagatedLabels, clustering: Clustering) -> pd.DataFrame:
    """Bodies and garments per type for each partition; shared garments count for every type"""
    train_set, test_set = set(split.train_bodies), set(split.test_bodies)
    rows = {}
    for t in clustering.types:
        members = clustering.members(t)
        rows[t + 1] = {
            'train_body': sum(1 for b in members if b in train_set),
            'train_clothing': len(labels.positives[t] - split.heldout),
            'test_body': sum(1 for b in members if b in test_set),
            'test_clothing': len(labels.positives[t] & split.heldout),
        }
    frame = pd.DataFrame(rows)
    frame.columns.name = 'type'
    return frame


def wearer_histogram(catalog: Catalog) -> pd.Series:
    """Garment counts by number of distinct observed wearers"""
    counts = pd.Series({g: len(w) for g, w in catalog.wearers().items()}, dtype='int64')
    return counts.value_counts().sort_index().rename('garments')


def type_histogram(labels: PropagatedLabels, garment_ids: Sequence[str]) -> pd.Series:
    """Garment counts by number of distinct body types wearing them"""
    counts = pd.Series({g: labels.versatility(g) for g in garment_ids}, dtype='int64')
    return counts.value_counts().sort_index().rename('garments')


# Persistence

def save_clustering(clustering: Clustering, path: PathLike):
    lines = ['# vibe clustering v1', '[clustering]', f"k {clustering.k}", f"inertia {format_real(clustering.inertia)}"]
    if clustering.feature_stats is not None:
        lines.append('[feature_stats]')
        lines.append('mean ' + ' '.join(format_real(v) for v in clustering.feature_stats.mean))
        lines.append('std ' + ' '.join(format_real(v) for v in clustering.feature_stats.std))
    lines.append('[centroids]')
    for t, row in enumerate(clustering.centroids):
        lines.append(f"{t} " + ' '.join(format_real(v) for v in row))
    lines.append('[assignment]')
    for body_id in sorted(clustering.assignment):
        lines.append(f"{body_id} {clustering.assignment[body_id]}")
    write_atomic(path, '\n'.join(lines) + '\n')
    logger.info(f"Saved clustering to {path}")


def load_clustering(path: PathLike) -> Clustering:
    path = Path(path)
    section = None
    k, inertia = None, 0.0
    stats: Dict[str, List[float]] = {}
    centroids: Dict[int, List[float]] = {}
    assignment: Dict[str, int] = {}
    try:
        for lineno, line in _data_lines(path):
            if line.startswith('['):
                section = line.strip('[]')
                continue
            tokens = line.split()
            if section == 'clustering':
                if tokens[0] == 'k':
                    k = int(tokens[1])
                elif tokens[0] == 'inertia':
                    inertia = float(tokens[1])
            elif section == 'feature_stats':
                stats[tokens[0]] = [float(v) for v in tokens[1:]]
            elif section == 'centroids':
                centroids[int(tokens[0])] = [float(v) for v in tokens[1:]]
            elif section == 'assignment':
                assignment[tokens[0]] = int(tokens[1])
            else:
                raise DataQualityError(f"{path}:{lineno}: unexpected line outside a known section")
    except (ValueError, IndexError) as e:
        if isinstance(e, DataQualityError):
            raise
        raise DataQualityError(f"{path}: malformed clustering file ({e})") from None

    if k is None or sorted(centroids) != list(range(k)):
        raise DataQualityError(f"{path}: clustering needs k and one centroid per type")
    if any(not 0 <= t < k for t in assignment.values()):
        raise DataQualityError(f"{path}: assignment outside [0, {k})")
    feature_stats = FeatureStats(stats['mean'], stats['std']) if stats else None
    return Clustering(
        k=k,
        centroids=np.array([centroids[t] for t in range(k)]),
        assignment=assignment,
        feature_stats=feature_stats,
        inertia=inertia,
    )


def save_split(split: Split, path: PathLike):
    lines = ['# vibe split v1', '[split]', f"seed {split.seed}", '[train_bodies]']
    lines.extend(split.train_bodies)
    lines.append('[test_bodies]')
    lines.extend(split.test_bodies)
    lines.append('[heldout]')
    for t in sorted(split.heldout_by_type):
        lines.extend(f"{t} {g}" for g in sorted(split.heldout_by_type[t]))
    write_atomic(path, '\n'.join(lines) + '\n')


def load_split(path: PathLike, catalog: Catalog, labels: PropagatedLabels, clustering: Clustering) -> Split:
    path = Path(path)
    section, seed = None, 0
    train, test = [], []
    heldout: Dict[int, set] = {t: set() for t in clustering.types}
    for lineno, line in _data_lines(path):
        if line.startswith('['):
            section = line.strip('[]')
            continue
        tokens = line.split()
        if section == 'split' and tokens[0] == 'seed':
            seed = int(tokens[1])
        elif section == 'train_bodies':
            train.append(tokens[0])
        elif section == 'test_bodies':
            test.append(tokens[0])
        elif section == 'heldout':
            heldout.setdefault(int(tokens[0]), set()).add(tokens[1])
        else:
            raise DataQualityError(f"{path}:{lineno}: unexpected line")

    unknown = [b for b in train + test if b not in catalog.body_index]
    if unknown:
        raise DataQualityError(f"{path}: split references unknown body_id {unknown[0]}")
    held = frozenset().union(*heldout.values())
    split = Split(
        seed=seed,
        train_bodies=sorted(train),
        test_bodies=sorted(test),
        heldout_by_type={t: frozenset(g) for t, g in heldout.items()},
        train_garments=sorted(g.garment_id for g in catalog.garments if g.garment_id not in held),
    )
    return attach_scenarios(split, labels, clustering)
