"""
ViBE - Triplet sampling
Uniform body-cloth and body-body triplets drawn from the training partition.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from models.records import Catalog
from models.vibe import BodyTable, GarmentTable, Triplet, TripletBatch
from pipelines.body_typing import Clustering, PropagatedLabels, Split

logger = logging.getLogger('ViBE_Train')


class SamplingError(ValueError):
    """Raised when the training partition cannot supply a triplet kind"""
    pass


class TripletSampler:
    """
    Pools are fixed at construction: training bodies (optionally a subset),
    and per type the training positives and negatives. Heldout garments and
    test bodies never enter a pool.
    """

    def __init__(
        self,
        split: Split,
        labels: PropagatedLabels,
        clustering: Clustering,
        bodies: BodyTable,
        garments: GarmentTable,
        body_pool: Optional[Sequence[str]] = None,
        include_body_body: bool = True,
    ):
        self.bodies = bodies
        self.garments = garments
        self.include_body_body = include_body_body
        self.type_of = clustering.assignment

        train = set(split.train_bodies)
        pool = sorted(train if body_pool is None else set(body_pool) & train)
        if not pool:
            raise SamplingError("no training bodies to anchor triplets")

        self.positives: Dict[int, List[str]] = {}
        self.negatives: Dict[int, List[str]] = {}
        for t in sorted({self.type_of[b] for b in pool}):
            self.positives[t] = split.train_positives(labels, t)
            self.negatives[t] = split.train_negatives(labels, t)

        self.cloth_anchors = [
            b for b in pool if self.positives[self.type_of[b]] and self.negatives[self.type_of[b]]
        ]
        if not self.cloth_anchors:
            raise SamplingError("no training body has both a positive and a negative garment")

        self.members: Dict[int, List[str]] = {}
        for b in pool:
            self.members.setdefault(self.type_of[b], []).append(b)

        self.body_anchors: List[str] = []
        if include_body_body:
            if len(self.members) < 2:
                raise SamplingError("body-body triplets need training bodies from at least 2 types")
            lonely = sorted(t for t, m in self.members.items() if len(m) < 2)
            if lonely:
                logger.warning(f"Types {lonely} have one training body; skipped as body-body anchors")
            self.body_anchors = [b for b in pool if len(self.members[self.type_of[b]]) >= 2]
            self.others: Dict[int, List[str]] = {
                t: [b for b in pool if self.type_of[b] != t] for t in self.members
            }

    @staticmethod
    def _pick(items: List[str], rng: np.random.Generator) -> str:
        return items[int(rng.integers(0, len(items)))]

    def sample(self, count: int, rng: np.random.Generator) -> TripletBatch:
        """count triplets of each enabled kind"""
        body_cloth = []
        for _ in range(count):
            anchor = self._pick(self.cloth_anchors, rng)
            t = self.type_of[anchor]
            body_cloth.append(Triplet(
                anchor, self._pick(self.positives[t], rng), self._pick(self.negatives[t], rng), 'body_cloth'
            ))

        body_body = []
        if self.include_body_body:
            for _ in range(count):
                anchor = self._pick(self.body_anchors, rng)
                t = self.type_of[anchor]
                mates = [b for b in self.members[t] if b != anchor]
                body_body.append(Triplet(
                    anchor, self._pick(mates, rng), self._pick(self.others[t], rng), 'body_body'
                ))
        return TripletBatch(body_cloth, body_body, self.bodies, self.garments)


def sample_triplets(
    split: Split,
    labels: PropagatedLabels,
    clustering: Clustering,
    catalog: Catalog,
    count: int,
    rng: np.random.Generator,
    include_body_body: bool = True,
) -> TripletBatch:
    """One batch with count triplets per kind, on unstandardized catalog features"""
    sampler = TripletSampler(
        split, labels, clustering,
        BodyTable.from_catalog(catalog), GarmentTable.from_catalog(catalog),
        include_body_body=include_body_body,
    )
    return sampler.sample(count, rng)
