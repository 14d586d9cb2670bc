"""
ViBE - Collaborative-filtering baselines
Matrix completion with user/item biases, optionally augmented with side
vectors projected from body and garment features.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.records import BodyRecord, DataQualityError, GarmentRecord, StandardizationStats
from models.vibe import BodyTable, GarmentTable
from numkit import DimensionMismatchError, LinearLayer

CF_VARIANTS = ('agnostic', 'aware')
_ABOVE_ZERO = np.nextafter(0.0, 1.0)
_BELOW_ONE = np.nextafter(1.0, 0.0)


def logistic(x: np.ndarray) -> np.ndarray:
    """Overflow-free logistic, kept strictly inside (0, 1)"""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    p = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(p, _ABOVE_ZERO, _BELOW_ONE)


def body_side_features(table: BodyTable, rows: np.ndarray) -> np.ndarray:
    """Standardized smpl and vitals, 14 columns"""
    return np.hstack([table.smpl[rows], table.vitals[rows]])


def garment_side_features(table: GarmentTable, rows: np.ndarray) -> np.ndarray:
    """Attribute bits followed by standardized visual features"""
    return np.hstack([table.attributes[rows], table.visual[rows]])


@dataclass
class CFModel:
    variant: str
    user_ids: List[str]
    item_ids: List[str]
    user_latent: np.ndarray
    user_bias: np.ndarray
    item_latent: np.ndarray
    item_bias: np.ndarray
    global_bias: float = 0.0
    side_user: Optional[LinearLayer] = None
    side_item: Optional[LinearLayer] = None
    stats: Optional[StandardizationStats] = None
    user_index: Dict[str, int] = field(init=False, repr=False)
    item_index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant not in CF_VARIANTS:
            raise DataQualityError(f"unknown CF variant '{self.variant}'")
        self.user_latent = np.array(self.user_latent, dtype=np.float64).reshape(len(self.user_ids), -1)
        self.item_latent = np.array(self.item_latent, dtype=np.float64).reshape(len(self.item_ids), -1)
        self.user_bias = np.array(self.user_bias, dtype=np.float64).ravel()
        self.item_bias = np.array(self.item_bias, dtype=np.float64).ravel()
        self.global_bias = float(self.global_bias)
        if self.user_latent.shape[1] != self.item_latent.shape[1]:
            raise DimensionMismatchError("item latent", self.user_latent.shape[1], self.item_latent.shape[1])
        if self.user_bias.size != len(self.user_ids) or self.item_bias.size != len(self.item_ids):
            raise DataQualityError("one bias per user and per item is required")
        has_side = self.side_user is not None and self.side_item is not None
        if (self.variant == 'aware') != has_side:
            raise DataQualityError("the aware variant needs both side projections; the agnostic one none")
        if has_side and self.side_user.out_dim != self.side_item.out_dim:
            raise DimensionMismatchError("item side vector", self.side_user.out_dim, self.side_item.out_dim)
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {g: i for i, g in enumerate(self.item_ids)}

    @classmethod
    def initialize(
        cls,
        variant: str,
        user_ids: Sequence[str],
        item_ids: Sequence[str],
        latent_dim: int = 20,
        side_dim: int = 5,
        body_feature_dim: int = 14,
        garment_feature_dim: int = 0,
        init_scale: float = 0.1,
        seed: int = 0,
        stats: Optional[StandardizationStats] = None,
    ) -> "CFModel":
        """Zero biases, small uniform latents, side maps scaled by fan-in"""
        rng = np.random.default_rng(seed)
        user_latent = rng.uniform(-init_scale, init_scale, size=(len(user_ids), latent_dim))
        item_latent = rng.uniform(-init_scale, init_scale, size=(len(item_ids), latent_dim))
        side_user = side_item = None
        if variant == 'aware':
            if garment_feature_dim <= 0:
                raise DataQualityError("the aware variant needs the garment feature width")
            side_user = LinearLayer(
                rng.uniform(-1, 1, size=(side_dim, body_feature_dim)) * init_scale / np.sqrt(body_feature_dim),
                np.zeros(side_dim),
            )
            side_item = LinearLayer(
                rng.uniform(-1, 1, size=(side_dim, garment_feature_dim)) * init_scale / np.sqrt(garment_feature_dim),
                np.zeros(side_dim),
            )
        return cls(
            variant=variant,
            user_ids=list(user_ids),
            item_ids=list(item_ids),
            user_latent=user_latent,
            user_bias=np.zeros(len(user_ids)),
            item_latent=item_latent,
            item_bias=np.zeros(len(item_ids)),
            side_user=side_user,
            side_item=side_item,
            stats=stats,
        )

    @property
    def latent_dim(self) -> int:
        return self.user_latent.shape[1]

    @property
    def side_dim(self) -> int:
        return self.side_user.out_dim if self.side_user is not None else 0

    def blocks(self) -> List[np.ndarray]:
        blocks = [np.array([self.global_bias]), self.user_latent, self.user_bias, self.item_latent, self.item_bias]
        if self.variant == 'aware':
            blocks += [self.side_user.weights, self.side_user.bias, self.side_item.weights, self.side_item.bias]
        return blocks

    @property
    def n_params(self) -> int:
        return sum(b.size for b in self.blocks())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks()])

    def set_flat(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.n_params:
            raise DimensionMismatchError("CF parameter vector", self.n_params, values.size)
        pieces = []
        offset = 0
        for block in self.blocks():
            pieces.append(values[offset:offset + block.size].reshape(block.shape).copy())
            offset += block.size
        self.global_bias = float(pieces[0][0])
        self.user_latent, self.user_bias, self.item_latent, self.item_bias = pieces[1:5]
        if self.variant == 'aware':
            self.side_user = LinearLayer(pieces[5], pieces[6])
            self.side_item = LinearLayer(pieces[7], pieces[8])

    def zero_side(self):
        """Zero both side projections (aware variant only)"""
        if self.variant != 'aware':
            raise DataQualityError("only the aware variant has side projections")
        self.side_user = LinearLayer(np.zeros_like(self.side_user.weights), np.zeros(self.side_dim))
        self.side_item = LinearLayer(np.zeros_like(self.side_item.weights), np.zeros(self.side_dim))

    def describe(self) -> Dict:
        return {
            'variant': self.variant,
            'user_ids': list(self.user_ids),
            'item_ids': list(self.item_ids),
            'latent_dim': self.latent_dim,
            'side_dim': self.side_dim,
            'body_feature_dim': self.side_user.in_dim if self.side_user is not None else 0,
            'garment_feature_dim': self.side_item.in_dim if self.side_item is not None else 0,
        }

    @classmethod
    def from_description(cls, description: Dict, stats: Optional[StandardizationStats] = None) -> "CFModel":
        variant = description['variant']
        users, items = description['user_ids'], description['item_ids']
        d, n = description['latent_dim'], description['side_dim']
        side_user = side_item = None
        if variant == 'aware':
            side_user = LinearLayer(np.zeros((n, description['body_feature_dim'])), np.zeros(n))
            side_item = LinearLayer(np.zeros((n, description['garment_feature_dim'])), np.zeros(n))
        return cls(
            variant, users, items,
            np.zeros((len(users), d)), np.zeros(len(users)),
            np.zeros((len(items), d)), np.zeros(len(items)),
            side_user=side_user, side_item=side_item, stats=stats,
        )


@dataclass
class _PairCache:
    user_rows: np.ndarray
    item_rows: np.ndarray
    x_u: np.ndarray
    y_i: np.ndarray
    feat_u: Optional[np.ndarray] = None
    feat_i: Optional[np.ndarray] = None
    v_u: Optional[np.ndarray] = None
    v_i: Optional[np.ndarray] = None


def _lookup(index: Dict[str, int], ids: Sequence[str]) -> np.ndarray:
    return np.array([index.get(i, -1) for i in ids], dtype=np.int64)


def _gather(values: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Rows of values, zeros where the row is -1"""
    out = np.zeros((rows.size,) + values.shape[1:])
    seen = rows >= 0
    out[seen] = values[rows[seen]]
    return out


def cf_logits(
    model: CFModel,
    bodies: BodyTable,
    garments: GarmentTable,
    body_ids: Sequence[str],
    garment_ids: Sequence[str],
) -> Tuple[np.ndarray, _PairCache]:
    """
    <x_u', y_i'> + b_u + b_i + b_g per pair. Entities outside the model's
    index contribute zero latent and zero bias.
    """
    user_rows = _lookup(model.user_index, body_ids)
    item_rows = _lookup(model.item_index, garment_ids)
    x_u = _gather(model.user_latent, user_rows)
    y_i = _gather(model.item_latent, item_rows)
    b_u = _gather(model.user_bias, user_rows)
    b_i = _gather(model.item_bias, item_rows)

    logits = np.sum(x_u * y_i, axis=1) + b_u + b_i + model.global_bias
    cache = _PairCache(user_rows, item_rows, x_u, y_i)
    if model.variant == 'aware':
        cache.feat_u = body_side_features(bodies, bodies.rows(body_ids))
        cache.feat_i = garment_side_features(garments, garments.rows(garment_ids))
        cache.v_u = cache.feat_u @ model.side_user.weights.T + model.side_user.bias
        cache.v_i = cache.feat_i @ model.side_item.weights.T + model.side_item.bias
        logits = logits + np.sum(cache.v_u * cache.v_i, axis=1)
    return logits, cache


def cf_predict_pairs(
    model: CFModel,
    bodies: BodyTable,
    garments: GarmentTable,
    body_ids: Sequence[str],
    garment_ids: Sequence[str],
) -> np.ndarray:
    logits, _ = cf_logits(model, bodies, garments, body_ids, garment_ids)
    return logistic(logits)


def cf_predict(model: CFModel, body: BodyRecord, garment: GarmentRecord) -> float:
    """Interaction probability for one (possibly unseen) body and garment"""
    bodies = BodyTable.from_records([body], model.stats)
    garments = GarmentTable.from_records([garment], model.stats)
    return float(cf_predict_pairs(model, bodies, garments, [body.body_id], [garment.garment_id])[0])


def bce_loss_and_grad(
    model: CFModel,
    bodies: BodyTable,
    garments: GarmentTable,
    body_ids: Sequence[str],
    garment_ids: Sequence[str],
    targets: np.ndarray,
    with_grad: bool = True,
) -> Tuple[float, Optional[np.ndarray]]:
    """Summed binary cross entropy over the pairs, gradient in get_flat order"""
    targets = np.asarray(targets, dtype=np.float64)
    logits, cache = cf_logits(model, bodies, garments, body_ids, garment_ids)
    # -[p log s + (1 - p) log(1 - s)] = softplus(l) - p l
    loss = float(np.sum(np.logaddexp(0.0, logits) - targets * logits))
    if not with_grad:
        return loss, None

    g = logistic(logits) - targets
    seen_u = cache.user_rows >= 0
    seen_i = cache.item_rows >= 0

    grad_user_latent = np.zeros_like(model.user_latent)
    grad_user_bias = np.zeros_like(model.user_bias)
    grad_item_latent = np.zeros_like(model.item_latent)
    grad_item_bias = np.zeros_like(model.item_bias)
    np.add.at(grad_user_latent, cache.user_rows[seen_u], g[seen_u, None] * cache.y_i[seen_u])
    np.add.at(grad_user_bias, cache.user_rows[seen_u], g[seen_u])
    np.add.at(grad_item_latent, cache.item_rows[seen_i], g[seen_i, None] * cache.x_u[seen_i])
    np.add.at(grad_item_bias, cache.item_rows[seen_i], g[seen_i])

    blocks = [np.array([g.sum()]), grad_user_latent, grad_user_bias, grad_item_latent, grad_item_bias]
    if model.variant == 'aware':
        grad_v_u = g[:, None] * cache.v_i
        grad_v_i = g[:, None] * cache.v_u
        blocks += [grad_v_u.T @ cache.feat_u, grad_v_u.sum(axis=0), grad_v_i.T @ cache.feat_i, grad_v_i.sum(axis=0)]
    return loss, np.concatenate([b.ravel() for b in blocks])
