"""
ViBE - Collaborative-filtering training
Minibatch SGD on summed binary cross entropy. Each epoch pairs every
training positive with freshly sampled type-level negatives.
"""

import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from models.cf import CF_VARIANTS, CFModel, bce_loss_and_grad
from models.records import Catalog, DataQualityError
from models.vibe import BodyTable, GarmentTable
from numkit import NonFiniteLossError, SgdState, scheduled_learning_rate, sgd_step
from pipelines.body_typing import Clustering, PropagatedLabels, Split
from pipelines.preprocess import fit_standardization

logger = logging.getLogger('CF_Train')

LABEL_SOURCES = ('propagated', 'observed')


@dataclass
class CFTrainConfig:
    variant: str = 'agnostic'
    learning_rate: float = 0.0001
    weight_decay: float = 0.0001
    # 60 for the agnostic variant, 80 for the aware one
    epochs: Optional[int] = None
    latent_dim: int = 20
    side_dim: int = 5
    batch_size: int = 32
    negatives_per_positive: int = 1
    init_scale: float = 0.1
    label_source: str = 'propagated'
    zero_side: bool = False
    log_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs is None:
            self.epochs = 80 if self.variant == 'aware' else 60

    @property
    def schedule(self) -> Tuple[Tuple[int, float], ...]:
        """x0.1 at 20 and again at 10 epochs before the end"""
        return ((self.epochs - 20, 0.1), (self.epochs - 10, 0.1))

    def validate(self):
        errors = []
        if self.variant not in CF_VARIANTS:
            errors.append(f"unknown variant '{self.variant}'")
        if self.epochs <= 20:
            errors.append("epochs must exceed 20")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            errors.append("learning_rate must be positive and weight_decay non-negative")
        if self.batch_size <= 0 or self.negatives_per_positive <= 0:
            errors.append("batch_size and negatives_per_positive must be positive")
        if self.latent_dim <= 0 or self.side_dim <= 0:
            errors.append("latent_dim and side_dim must be positive")
        if self.label_source not in LABEL_SOURCES:
            errors.append(f"label_source must be one of {LABEL_SOURCES}")
        if self.zero_side and self.variant != 'aware':
            errors.append("zero_side applies to the aware variant only")
        if errors:
            raise DataQualityError(f"Invalid CF training config: {errors}")

    @classmethod
    def desk_scale(cls, **overrides) -> "CFTrainConfig":
        """Learning rate that moves a 60-body catalog within the stock epoch budget"""
        return cls(**{'learning_rate': 0.005, **overrides})

    def as_dict(self) -> Dict[str, Any]:
        return {
            'variant': self.variant,
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'epochs': self.epochs,
            'latent_dim': self.latent_dim,
            'side_dim': self.side_dim,
            'batch_size': self.batch_size,
            'negatives_per_positive': self.negatives_per_positive,
            'init_scale': self.init_scale,
            'label_source': self.label_source,
            'zero_side': self.zero_side,
            'seed': self.seed,
        }


def training_positives(
    catalog: Catalog, split: Split, labels: PropagatedLabels, clustering: Clustering, source: str = 'propagated'
) -> List[Tuple[str, str]]:
    """Positive (train body, train garment) pairs, sorted"""
    heldout = split.heldout
    if source == 'observed':
        train = set(split.train_bodies)
        return sorted((b, g) for b, g in catalog.positives if b in train and g not in heldout)
    pairs = []
    for body_id in split.train_bodies:
        for garment_id in split.train_positives(labels, clustering.assignment[body_id]):
            pairs.append((body_id, garment_id))
    return pairs


class CFTrainer:
    """Trains one CFModel; per-epoch mean BCE is kept in self.history"""

    def __init__(
        self,
        config: CFTrainConfig,
        catalog: Catalog,
        split: Split,
        labels: PropagatedLabels,
        clustering: Clustering,
    ):
        config.validate()
        self.config = config
        self.catalog = catalog
        self.split = split
        self.labels = labels
        self.clustering = clustering
        self.history: List[Dict[str, float]] = []
        self.stats = {
            'positives': 0,
            'epochs_run': 0,
            'initial_loss': None,
            'final_loss': None,
            'errors': []
        }

    def fit(self) -> CFModel:
        config = self.config
        logger.info("=" * 60)
        logger.info(f"Training {config.variant} CF baseline (seed {config.seed}, {config.epochs} epochs)")
        logger.info("=" * 60)

        try:
            model = self._fit()
        except Exception as e:
            logger.error(f"CF training failed: {str(e)}")
            self.stats['errors'].append(str(e))
            raise

        logger.info(
            f"CF training done: mean BCE {self.stats['initial_loss']:.4f} -> {self.stats['final_loss']:.4f}"
        )
        return model

    def _fit(self) -> CFModel:
        config = self.config
        stats = fit_standardization(self.catalog, self.split.train_bodies, self.split.train_garments)
        self.bodies = BodyTable.from_catalog(self.catalog, stats)
        self.garments = GarmentTable.from_catalog(self.catalog, stats)

        positives = training_positives(self.catalog, self.split, self.labels, self.clustering, config.label_source)
        if not positives:
            raise DataQualityError("no training positives for the CF baseline")
        self.stats['positives'] = len(positives)
        negatives = {
            t: self.split.train_negatives(self.labels, t) for t in self.clustering.types
        }

        users = sorted({b for b, _ in positives})
        items = sorted({g for _, g in positives} | {g for t in negatives for g in negatives[t]})
        model = CFModel.initialize(
            config.variant, users, items,
            latent_dim=config.latent_dim,
            side_dim=config.side_dim,
            garment_feature_dim=self.catalog.num_attributes + self.catalog.visual_dim,
            init_scale=config.init_scale,
            seed=config.seed,
            stats=stats,
        )
        if config.zero_side:
            model.zero_side()

        rng = np.random.default_rng([config.seed, 1])
        probe_pairs = self._epoch_pairs(positives, negatives, rng)
        self.stats['initial_loss'] = self._mean_bce(model, probe_pairs)

        params = model.get_flat()
        state = SgdState(
            base_learning_rate=config.learning_rate,
            weight_decay=config.weight_decay,
            schedule=list(config.schedule),
        )
        for epoch in range(1, config.epochs + 1):
            pairs = probe_pairs if epoch == 1 else self._epoch_pairs(positives, negatives, rng)
            order = rng.permutation(len(pairs[0]))
            total = 0.0
            for start in range(0, order.size, config.batch_size):
                rows = order[start:start + config.batch_size]
                loss, grad = bce_loss_and_grad(
                    model, self.bodies, self.garments,
                    [pairs[0][r] for r in rows], [pairs[1][r] for r in rows], pairs[2][rows],
                )
                if not np.isfinite(loss):
                    raise NonFiniteLossError(f"epoch {epoch}, batch at row {start}: BCE is {loss}")
                params, state = sgd_step(params, grad, state, epoch)
                model.set_flat(params)
                total += loss

            mean_loss = total / order.size
            self.history.append({
                'epoch': epoch,
                'loss': mean_loss,
                'learning_rate': scheduled_learning_rate(config.learning_rate, config.schedule, epoch),
            })
            self.stats['epochs_run'] = epoch
            if epoch % config.log_every == 0 or epoch == config.epochs:
                logger.info(f"Epoch {epoch}/{config.epochs}: mean BCE {mean_loss:.4f}")

        self.stats['final_loss'] = self._mean_bce(model, probe_pairs)
        return model

    def _epoch_pairs(self, positives, negatives, rng: np.random.Generator):
        """Positives plus negatives_per_positive sampled negatives each, as (bodies, garments, targets)"""
        body_ids, garment_ids, targets = [], [], []
        type_of = self.clustering.assignment
        for body_id, garment_id in positives:
            body_ids.append(body_id)
            garment_ids.append(garment_id)
            targets.append(1.0)
            pool = negatives[type_of[body_id]]
            if not pool:
                continue
            for _ in range(self.config.negatives_per_positive):
                body_ids.append(body_id)
                garment_ids.append(pool[int(rng.integers(0, len(pool)))])
                targets.append(0.0)
        return body_ids, garment_ids, np.asarray(targets)

    def _mean_bce(self, model: CFModel, pairs) -> float:
        loss, _ = bce_loss_and_grad(model, self.bodies, self.garments, pairs[0], pairs[1], pairs[2], with_grad=False)
        return loss / len(pairs[0])

    def trajectory(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=['epoch', 'loss', 'learning_rate'])


def cf_train(
    config: CFTrainConfig,
    catalog: Catalog,
    split: Split,
    labels: PropagatedLabels,
    clustering: Clustering,
    variant: Optional[str] = None,
) -> CFModel:
    if variant is not None and variant != config.variant:
        config = replace(config, variant=variant)
    return CFTrainer(config, catalog, split, labels, clustering).fit()
