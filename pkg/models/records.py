"""
ViBE - Catalog records
Bodies, garments, observed body-garment interactions and the synthetic
generator settings that produce them.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

SMPL_DIM = 10
VITALS_DIM = 4
VITALS_NAMES = ('height', 'bust', 'waist', 'hips')
CATEGORIES = ('dress', 'top')
DEFAULT_ATTRIBUTE_COUNT = {'dress': 64, 'top': 100}

# CNN feature width of a real catalog; the synthetic default is much smaller
CNN_VISUAL_DIM = 2048


class DataQualityError(ValueError):
    """Custom exception for catalog data quality issues"""
    pass


def _all_finite(values: Sequence[float]) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class BodyRecord:
    """One person: 10 shape coefficients and 4 vital statistics (cm)"""
    body_id: str
    smpl: Tuple[float, ...]
    vitals: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'smpl', tuple(float(v) for v in self.smpl))
        object.__setattr__(self, 'vitals', tuple(float(v) for v in self.vitals))
        if len(self.smpl) != SMPL_DIM:
            raise DataQualityError(f"body {self.body_id}: expected {SMPL_DIM} smpl values, got {len(self.smpl)}")
        if len(self.vitals) != VITALS_DIM:
            raise DataQualityError(f"body {self.body_id}: expected {VITALS_DIM} vitals, got {len(self.vitals)}")
        if not _all_finite(self.smpl + self.vitals):
            raise DataQualityError(f"body {self.body_id}: non-finite feature value")
        if any(v <= 0 for v in self.vitals):
            raise DataQualityError(f"body {self.body_id}: vital statistics must be positive")

    @property
    def features(self) -> np.ndarray:
        """smpl followed by vitals, raw"""
        return np.asarray(self.smpl + self.vitals, dtype=np.float64)


@dataclass(frozen=True)
class GarmentRecord:
    """One catalog item: binary attributes, dense visual vector and category"""
    garment_id: str
    category: str
    attributes: Tuple[int, ...]
    visual: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'attributes', tuple(int(a) for a in self.attributes))
        object.__setattr__(self, 'visual', tuple(float(v) for v in self.visual))
        if self.category not in CATEGORIES:
            raise DataQualityError(f"garment {self.garment_id}: unknown category '{self.category}'")
        if any(a not in (0, 1) for a in self.attributes):
            raise DataQualityError(f"garment {self.garment_id}: non-binary attribute")
        if not _all_finite(self.visual):
            raise DataQualityError(f"garment {self.garment_id}: non-finite visual feature")


@dataclass
class Catalog:
    """Bodies, garments and observed positive interactions"""
    bodies: List[BodyRecord]
    garments: List[GarmentRecord]
    positives: FrozenSet[Tuple[str, str]]
    attribute_vocabulary: List[str]
    # full compatibility map, synthetic catalogs only
    oracle: Optional[Dict[Tuple[str, str], bool]] = None
    # generator ground truth, not persisted
    planted_types: Optional[Dict[str, int]] = field(default=None, compare=False)
    planted_indicators: Optional[Dict[int, List[str]]] = field(default=None, compare=False)

    def __post_init__(self):
        self.positives = frozenset(self.positives)
        self.validate()

    def validate(self):
        """Raise DataQualityError listing every invariant violation found"""
        errors = []

        body_ids = [b.body_id for b in self.bodies]
        garment_ids = [g.garment_id for g in self.garments]
        if len(set(body_ids)) != len(body_ids):
            errors.append(f"Found {len(body_ids) - len(set(body_ids))} duplicate body_id values")
        if len(set(garment_ids)) != len(garment_ids):
            errors.append(f"Found {len(garment_ids) - len(set(garment_ids))} duplicate garment_id values")

        categories = {g.category for g in self.garments}
        if len(categories) > 1:
            errors.append(f"Mixed garment categories in one catalog: {sorted(categories)}")

        if self.garments:
            n_attr = len(self.garments[0].attributes)
            n_vis = len(self.garments[0].visual)
            if any(len(g.attributes) != n_attr for g in self.garments):
                errors.append("Inconsistent attribute vector lengths")
            if any(len(g.visual) != n_vis for g in self.garments):
                errors.append("Inconsistent visual vector lengths")
            if len(self.attribute_vocabulary) != n_attr:
                errors.append(
                    f"Attribute vocabulary has {len(self.attribute_vocabulary)} names "
                    f"for {n_attr} attributes"
                )

        body_set, garment_set = set(body_ids), set(garment_ids)
        dangling = [(b, g) for b, g in self.positives if b not in body_set or g not in garment_set]
        if dangling:
            errors.append(f"Found {len(dangling)} positives with unknown ids, e.g. {sorted(dangling)[0]}")

        if self.oracle is not None:
            false_positives = [p for p in self.positives if not self.oracle.get(p, False)]
            if false_positives:
                errors.append(f"Found {len(false_positives)} positives the oracle marks incompatible")

        if errors:
            raise DataQualityError(f"Catalog data quality issues: {errors}")

    @cached_property
    def body_index(self) -> Dict[str, int]:
        return {b.body_id: i for i, b in enumerate(self.bodies)}

    @cached_property
    def garment_index(self) -> Dict[str, int]:
        return {g.garment_id: i for i, g in enumerate(self.garments)}

    @property
    def category(self) -> Optional[str]:
        return self.garments[0].category if self.garments else None

    @property
    def num_attributes(self) -> int:
        return len(self.attribute_vocabulary)

    @property
    def visual_dim(self) -> int:
        return len(self.garments[0].visual) if self.garments else 0

    def body(self, body_id: str) -> BodyRecord:
        if body_id not in self.body_index:
            raise DataQualityError(f"unknown body_id '{body_id}'")
        return self.bodies[self.body_index[body_id]]

    def garment(self, garment_id: str) -> GarmentRecord:
        if garment_id not in self.garment_index:
            raise DataQualityError(f"unknown garment_id '{garment_id}'")
        return self.garments[self.garment_index[garment_id]]

    def smpl_matrix(self, body_ids: Optional[Sequence[str]] = None) -> np.ndarray:
        bodies = self.bodies if body_ids is None else [self.body(b) for b in body_ids]
        return np.array([b.smpl for b in bodies], dtype=np.float64).reshape(len(bodies), SMPL_DIM)

    def vitals_matrix(self, body_ids: Optional[Sequence[str]] = None) -> np.ndarray:
        bodies = self.bodies if body_ids is None else [self.body(b) for b in body_ids]
        return np.array([b.vitals for b in bodies], dtype=np.float64).reshape(len(bodies), VITALS_DIM)

    def attribute_matrix(self, garment_ids: Optional[Sequence[str]] = None) -> np.ndarray:
        garments = self.garments if garment_ids is None else [self.garment(g) for g in garment_ids]
        return np.array([g.attributes for g in garments], dtype=np.float64).reshape(
            len(garments), self.num_attributes
        )

    def visual_matrix(self, garment_ids: Optional[Sequence[str]] = None) -> np.ndarray:
        garments = self.garments if garment_ids is None else [self.garment(g) for g in garment_ids]
        return np.array([g.visual for g in garments], dtype=np.float64).reshape(
            len(garments), self.visual_dim
        )

    def wearers(self) -> Dict[str, List[str]]:
        """garment_id -> sorted body ids observed wearing it"""
        result: Dict[str, List[str]] = {g.garment_id: [] for g in self.garments}
        for body_id, garment_id in sorted(self.positives):
            result[garment_id].append(body_id)
        return result


@dataclass
class SyntheticSpec:
    """
    Settings for a planted-structure catalog. The defaults mirror a real
    dress catalog: 60 bodies over 5 types and its observed versatility histogram.
    """
    num_types: int = 5
    bodies_per_type: Tuple[int, ...] = (23, 9, 14, 6, 8)
    num_garments: int = 400
    # relative weight of garments compatible with 1..num_types types
    versatility_distribution: Tuple[float, ...] = (291, 407, 187, 103, 10)
    body_noise: float = 0.3
    attribute_noise_flip_rate: float = 0.05
    visual_dim: int = 32
    visual_noise: float = 0.5
    observation_rate: float = 0.5
    category: str = 'dress'
    num_attributes: Optional[int] = None
    indicator_block: int = 4
    centroid_separation: float = 3.0
    seed: int = 0

    def __post_init__(self):
        self.bodies_per_type = tuple(int(n) for n in self.bodies_per_type)
        self.versatility_distribution = tuple(float(w) for w in self.versatility_distribution)
        if self.num_attributes is None:
            self.num_attributes = DEFAULT_ATTRIBUTE_COUNT.get(self.category, 64)

    def validate(self):
        errors = []
        if self.num_types < 1:
            errors.append("num_types must be positive")
        if len(self.bodies_per_type) != self.num_types:
            errors.append(f"bodies_per_type lists {len(self.bodies_per_type)} types, expected {self.num_types}")
        if any(n <= 0 for n in self.bodies_per_type):
            errors.append("every type needs at least one body")
        if self.num_garments <= 0:
            errors.append("num_garments must be positive")
        if len(self.versatility_distribution) != self.num_types:
            errors.append("versatility_distribution needs one weight per possible subset size")
        if any(w < 0 for w in self.versatility_distribution) or sum(self.versatility_distribution) <= 0:
            errors.append("versatility_distribution weights must be non-negative with positive sum")
        if self.body_noise < 0 or self.visual_noise < 0:
            errors.append("noise scales must be non-negative")
        if not 0.0 <= self.attribute_noise_flip_rate <= 1.0:
            errors.append("attribute_noise_flip_rate must lie in [0, 1]")
        if not 0.0 < self.observation_rate <= 1.0:
            errors.append("observation_rate must lie in (0, 1]")
        if self.visual_dim <= 0:
            errors.append("visual_dim must be positive")
        if self.category not in CATEGORIES:
            errors.append(f"unknown category '{self.category}'")
        if self.indicator_block < 1 or self.num_types * self.indicator_block > self.num_attributes:
            errors.append("indicator blocks do not fit in the attribute vector")
        if errors:
            raise DataQualityError(f"Infeasible synthetic spec: {errors}")


@dataclass(frozen=True)
class FeatureStats:
    """Per-dimension mean and (population) standard deviation"""
    mean: Tuple[float, ...]
    std: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'mean', tuple(float(v) for v in self.mean))
        object.__setattr__(self, 'std', tuple(float(v) for v in self.std))
        if len(self.mean) != len(self.std):
            raise DataQualityError("mean and std lengths differ")
        if any(s < 0 for s in self.std):
            raise DataQualityError("standard deviations must be non-negative")

    @property
    def dim(self) -> int:
        return len(self.mean)


@dataclass(frozen=True)
class StandardizationStats:
    """Training-partition statistics for smpl, vitals and visual features"""
    smpl: FeatureStats
    vitals: FeatureStats
    visual: FeatureStats

    def as_dict(self) -> Dict[str, Dict[str, List[float]]]:
        return {
            name: {'mean': list(stats.mean), 'std': list(stats.std)}
            for name, stats in (('smpl', self.smpl), ('vitals', self.vitals), ('visual', self.visual))
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Dict[str, List[float]]]) -> "StandardizationStats":
        return cls(**{
            name: FeatureStats(mean=data[name]['mean'], std=data[name]['std'])
            for name in ('smpl', 'vitals', 'visual')
        })
