"""
ViBE - Embedding training
Adam over uniformly sampled triplets, resampled every batch, with a
step-decayed learning rate. The body-agnostic baseline runs through the same
loop restricted to the largest type and without the body-body term.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from models.records import Catalog, DataQualityError
from models.vibe import (
    BODY_HEADS, GARMENT_HEADS, BodyTable, GarmentTable, Margins, ViBEModel, total_loss_and_grad
)
from numkit import AdamState, NonFiniteLossError, adam_step, scheduled_learning_rate
from pipelines.body_typing import Clustering, PropagatedLabels, Split
from pipelines.preprocess import fit_standardization
from pipelines.triplets import TripletSampler

logger = logging.getLogger('ViBE_Train')


@dataclass
class ViBETrainConfig:
    learning_rate: float = 0.003
    weight_decay: float = 0.01
    # (epoch, multiplier): the multiplier applies from that epoch on
    schedule: Tuple[Tuple[int, float], ...] = ((100, 0.3), (130, 0.3))
    epochs: int = 180
    batch_size: int = 64
    batches_per_epoch: int = 20
    alpha_p: float = 0.2
    alpha_n: float = 0.4
    use_body_body: bool = True
    restrict_to_largest_type: bool = False
    garment_heads: Tuple[str, ...] = GARMENT_HEADS
    body_heads: Tuple[str, ...] = BODY_HEADS
    log_every: int = 20
    seed: int = 0

    def __post_init__(self):
        self.schedule = tuple((int(e), float(m)) for e, m in self.schedule)
        self.garment_heads = tuple(self.garment_heads)
        self.body_heads = tuple(self.body_heads)

    @property
    def margins(self) -> Margins:
        return Margins(self.alpha_p, self.alpha_n)

    def validate(self):
        errors = []
        if self.epochs <= 0:
            errors.append("epochs must be positive")
        if any(e >= self.epochs for e, _ in self.schedule):
            errors.append("schedule epochs must be below the total epoch count")
        if self.batch_size <= 0 or self.batches_per_epoch <= 0:
            errors.append("batch_size and batches_per_epoch must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            errors.append("learning_rate must be positive and weight_decay non-negative")
        try:
            self.margins
        except DataQualityError as e:
            errors.append(str(e))
        if errors:
            raise DataQualityError(f"Invalid ViBE training config: {errors}")

    @classmethod
    def agnostic(cls, **overrides) -> "ViBETrainConfig":
        """Body-agnostic embedding: one type's bodies, no body-body term"""
        settings = {
            'learning_rate': 0.05,
            'schedule': ((70, 0.3), (100, 0.3)),
            'epochs': 130,
            'use_body_body': False,
            'restrict_to_largest_type': True,
        }
        return cls(**{**settings, **overrides})

    def as_dict(self) -> Dict[str, Any]:
        return {
            'learning_rate': self.learning_rate,
            'weight_decay': self.weight_decay,
            'schedule': [list(s) for s in self.schedule],
            'epochs': self.epochs,
            'batch_size': self.batch_size,
            'batches_per_epoch': self.batches_per_epoch,
            'alpha_p': self.alpha_p,
            'alpha_n': self.alpha_n,
            'use_body_body': self.use_body_body,
            'restrict_to_largest_type': self.restrict_to_largest_type,
            'garment_heads': list(self.garment_heads),
            'body_heads': list(self.body_heads),
            'seed': self.seed,
        }


def largest_type_bodies(split: Split, clustering: Clustering) -> List[str]:
    """Training bodies of the type with most training bodies (lowest index on ties)"""
    train = set(split.train_bodies)
    counts = {t: sum(1 for b in clustering.members(t) if b in train) for t in clustering.types}
    largest = max(clustering.types, key=lambda t: (counts[t], -t))
    return [b for b in clustering.members(largest) if b in train]


class ViBETrainer:
    """Trains one ViBEModel; the loss trajectory is kept in self.history"""

    def __init__(
        self,
        config: ViBETrainConfig,
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
            'epochs_run': 0,
            'steps_taken': 0,
            'initial_loss': None,
            'final_loss': None,
            'errors': []
        }

    def fit(self) -> ViBEModel:
        config = self.config
        logger.info("=" * 60)
        logger.info(
            f"Training ViBE embedding (seed {config.seed}, {config.epochs} epochs, "
            f"body-body {'on' if config.use_body_body else 'off'})"
        )
        logger.info("=" * 60)

        try:
            stats = fit_standardization(self.catalog, self.split.train_bodies, self.split.train_garments)
            bodies = BodyTable.from_catalog(self.catalog, stats)
            garments = GarmentTable.from_catalog(self.catalog, stats)
            pool = largest_type_bodies(self.split, self.clustering) if config.restrict_to_largest_type else None
            sampler = TripletSampler(
                self.split, self.labels, self.clustering, bodies, garments,
                body_pool=pool, include_body_body=config.use_body_body,
            )

            model = ViBEModel.initialize(
                self.catalog.num_attributes, self.catalog.visual_dim, seed=config.seed, stats=stats,
                garment_heads=config.garment_heads, body_heads=config.body_heads,
            )
            model = self._optimize(model, sampler)
        except Exception as e:
            logger.error(f"ViBE training failed: {str(e)}")
            self.stats['errors'].append(str(e))
            raise

        logger.info(
            f"ViBE training done: loss {self.stats['initial_loss']:.4f} -> {self.stats['final_loss']:.4f}"
        )
        return model

    def _optimize(self, model: ViBEModel, sampler: TripletSampler) -> ViBEModel:
        config = self.config
        margins = config.margins
        rng = np.random.default_rng([config.seed, 1])
        params = model.get_flat()
        state = AdamState.for_parameters(
            params.size,
            base_learning_rate=config.learning_rate,
            weight_decay=config.weight_decay,
            schedule=list(config.schedule),
        )

        for epoch in range(1, config.epochs + 1):
            losses = []
            for batch_index in range(config.batches_per_epoch):
                batch = sampler.sample(config.batch_size, rng)
                loss, grad = total_loss_and_grad(model, batch, margins)
                if not np.isfinite(loss):
                    raise NonFiniteLossError(f"epoch {epoch}, batch {batch_index}: loss is {loss}")
                params, state = adam_step(params, grad, state, epoch)
                model.set_flat(params)
                losses.append(loss)

            mean_loss = float(np.mean(losses))
            self.history.append({
                'epoch': epoch,
                'loss': mean_loss,
                'learning_rate': scheduled_learning_rate(config.learning_rate, config.schedule, epoch),
            })
            if self.stats['initial_loss'] is None:
                self.stats['initial_loss'] = mean_loss
            self.stats['final_loss'] = mean_loss
            self.stats['epochs_run'] = epoch
            self.stats['steps_taken'] = state.step_count
            if epoch % config.log_every == 0 or epoch == config.epochs:
                logger.info(f"Epoch {epoch}/{config.epochs}: loss {mean_loss:.4f}")
        return model

    def trajectory(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=['epoch', 'loss', 'learning_rate'])


def train_vibe(
    config: ViBETrainConfig,
    catalog: Catalog,
    split: Split,
    labels: PropagatedLabels,
    clustering: Clustering,
) -> ViBEModel:
    return ViBETrainer(config, catalog, split, labels, clustering).fit()
