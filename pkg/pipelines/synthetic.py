"""
ViBE - Synthetic catalog generator
Planted body types, garments compatible with a random subset of types, and
a ground-truth compatibility oracle. Observed positives are a subsample of
the oracle-true pairs, which reproduces the missing-positive problem that
label propagation is meant to fix.
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from models.records import (
    BodyRecord, Catalog, DataQualityError, GarmentRecord, SMPL_DIM, SyntheticSpec, VITALS_DIM
)

logger = logging.getLogger('Synthetic')

# height, bust, waist, hips (cm) around which type centroids are placed
BASE_VITALS = np.array([165.0, 92.0, 74.0, 100.0])
VITALS_SPREAD_CM = 3.0
VITALS_NOISE_CM = 2.0
CENTROID_SCALE = 1.5
FILLER_BIT_RATE = 0.25
MAX_CENTROID_DRAWS = 1000

ATTRIBUTE_LEXICON = [
    'a-line', 'shift', 'sheath', 'wrap', 'bodycon', 'fit-and-flare', 'empire', 'peplum',
    'v-neck', 'scoop-neck', 'crew-neck', 'boat-neck', 'halter', 'off-shoulder', 'sweetheart', 'high-neck',
    'sleeveless', 'cap-sleeve', 'short-sleeve', 'three-quarter', 'long-sleeve', 'bell-sleeve', 'puff-sleeve', 'flutter',
    'mini', 'knee-length', 'midi', 'maxi', 'asymmetric', 'high-low', 'tiered', 'pleated',
    'ruched', 'draped', 'belted', 'tie-waist', 'elastic-waist', 'drop-waist', 'corset', 'button-front',
    'zip-back', 'keyhole', 'cut-out', 'slit', 'ruffle', 'lace', 'sequin', 'embroidered',
    'floral', 'striped', 'polka-dot', 'geometric', 'animal-print', 'abstract', 'solid', 'colour-block',
    'silk', 'satin', 'chiffon', 'jersey', 'crepe', 'linen', 'cotton', 'velvet',
    'stretch', 'structured', 'flowy', 'tailored', 'oversized', 'cropped', 'longline', 'relaxed',
    'square-neck', 'cowl-neck', 'turtleneck', 'collared', 'henley', 'one-shoulder', 'strapless', 'spaghetti-strap',
    'raglan', 'dolman', 'cold-shoulder', 'smocked', 'shirred', 'pintuck', 'lace-up', 'wrap-front',
    'neutral', 'pastel', 'bright', 'dark', 'metallic', 'sheer', 'lined', 'textured',
    'knit', 'woven', 'denim', 'chambray',
]


def attribute_names(count: int) -> List[str]:
    if count <= len(ATTRIBUTE_LEXICON):
        return list(ATTRIBUTE_LEXICON[:count])
    extra = [f"attribute-{i}" for i in range(len(ATTRIBUTE_LEXICON), count)]
    return list(ATTRIBUTE_LEXICON) + extra


def _draw_centroids(rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    for _ in range(MAX_CENTROID_DRAWS):
        centroids = rng.normal(0.0, CENTROID_SCALE, size=(spec.num_types, SMPL_DIM))
        if spec.num_types == 1:
            return centroids
        gaps = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
        gaps[np.diag_indices(spec.num_types)] = np.inf
        if gaps.min() >= spec.centroid_separation:
            return centroids
    raise DataQualityError(
        f"could not place {spec.num_types} centroids {spec.centroid_separation} apart"
    )


def generate_synthetic(spec: SyntheticSpec) -> Catalog:
    """Deterministic planted-structure catalog for a fixed seed"""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_types = spec.num_types
    n_attr = spec.num_attributes

    # (1) type centroids; vitals are a fixed linear function of shape
    centroids = _draw_centroids(rng, spec)
    loading = rng.normal(0.0, VITALS_SPREAD_CM / np.sqrt(SMPL_DIM), size=(VITALS_DIM, SMPL_DIM))
    vitals_centroids = BASE_VITALS + centroids @ loading.T

    # (2) bodies, shuffled so identifiers carry no type information
    body_types = np.repeat(np.arange(n_types), spec.bodies_per_type)
    body_types = body_types[rng.permutation(body_types.size)]
    bodies: List[BodyRecord] = []
    planted_types: Dict[str, int] = {}
    for i, t in enumerate(body_types):
        body_id = f"b{i + 1:03d}"
        smpl = centroids[t] + rng.normal(0.0, spec.body_noise, SMPL_DIM)
        vitals = vitals_centroids[t] + rng.normal(0.0, spec.body_noise * VITALS_NOISE_CM, VITALS_DIM)
        bodies.append(BodyRecord(body_id, smpl, np.maximum(vitals, 1.0)))
        planted_types[body_id] = int(t)

    # (3) garments: type-indicator blocks, filler bits, visual = linear map + noise
    vocabulary = attribute_names(n_attr)
    indicator_columns = rng.permutation(n_attr)[:n_types * spec.indicator_block].reshape(
        n_types, spec.indicator_block
    )
    planted_indicators = {
        t: [vocabulary[c] for c in indicator_columns[t]] for t in range(n_types)
    }
    indicator_mask = np.zeros(n_attr, dtype=bool)
    indicator_mask[indicator_columns.ravel()] = True

    mixing = rng.normal(0.0, 1.0 / np.sqrt(n_attr), size=(spec.visual_dim, n_attr))
    weights = np.asarray(spec.versatility_distribution, dtype=np.float64)
    weights = weights / weights.sum()

    garments: List[GarmentRecord] = []
    compatible_types: Dict[str, Tuple[int, ...]] = {}
    for i in range(spec.num_garments):
        garment_id = f"g{i + 1:04d}"
        size = int(rng.choice(np.arange(1, n_types + 1), p=weights))
        subset = tuple(sorted(int(t) for t in rng.choice(n_types, size=size, replace=False)))

        bits = (rng.random(n_attr) < FILLER_BIT_RATE).astype(np.int64)
        bits[indicator_mask] = 0
        for t in subset:
            bits[indicator_columns[t]] = 1
        flips = (rng.random(n_attr) < spec.attribute_noise_flip_rate) & indicator_mask
        bits = np.where(flips, 1 - bits, bits)

        visual = mixing @ bits + rng.normal(0.0, spec.visual_noise, spec.visual_dim)
        garments.append(GarmentRecord(garment_id, spec.category, bits.tolist(), visual))
        compatible_types[garment_id] = subset

    # (4) oracle and (5) observed positives
    oracle: Dict[Tuple[str, str], bool] = {}
    positives = set()
    for body in bodies:
        t = planted_types[body.body_id]
        for garment in garments:
            compatible = t in compatible_types[garment.garment_id]
            oracle[(body.body_id, garment.garment_id)] = compatible
            if compatible and (spec.observation_rate >= 1.0 or rng.random() < spec.observation_rate):
                positives.add((body.body_id, garment.garment_id))

    logger.info(
        f"Generated synthetic {spec.category} catalog: {len(bodies)} bodies, "
        f"{len(garments)} garments, {len(positives)} observed positives (seed {spec.seed})"
    )
    return Catalog(
        bodies=bodies,
        garments=garments,
        positives=frozenset(positives),
        attribute_vocabulary=vocabulary,
        oracle=oracle,
        planted_types=planted_types,
        planted_indicators=planted_indicators,
    )


def full_scale_spec(**overrides) -> SyntheticSpec:
    """Garment count of a full-size dress catalog instead of the desk-scale 400"""
    return SyntheticSpec(**{'num_garments': 950, **overrides})


def noise_free_spec(**overrides) -> SyntheticSpec:
    settings = {'body_noise': 0.0, 'attribute_noise_flip_rate': 0.0, 'visual_noise': 0.0}
    return SyntheticSpec(**{**settings, **overrides})
