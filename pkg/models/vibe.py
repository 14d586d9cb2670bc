"""
ViBE - Body-aware embedding model
Projection heads per feature family, one embedding head per entity kind,
unit-sphere outputs and the dual margin-based triplet objective.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.records import (
    BodyRecord, Catalog, DataQualityError, GarmentRecord, SMPL_DIM, StandardizationStats, VITALS_DIM
)
from numkit import (
    DimensionMismatchError, Mlp, flatten_gradients, l2_normalize, l2_normalize_backward,
    mlp_apply, mlp_backprop
)
from pipelines.preprocess import standardize

EMBEDDING_DIM = 4
GARMENT_HEADS = ('attributes', 'visual')
BODY_HEADS = ('smpl', 'vitals')
HEAD_OUTPUT = {'attributes': 8, 'visual': 8, 'smpl': 4, 'vitals': 4}


def head_widths(name: str, input_dim: int) -> List[int]:
    """Square first layer, then the fixed funnel down to the head output"""
    hidden = {'attributes': [32], 'visual': [256], 'smpl': [8], 'vitals': [4]}[name]
    return [input_dim, input_dim] + hidden + [HEAD_OUTPUT[name]]


def cloth_widths(input_dim: int, embedding_dim: int = EMBEDDING_DIM) -> List[int]:
    return [input_dim, 8, embedding_dim]


def body_widths(input_dim: int, embedding_dim: int = EMBEDDING_DIM) -> List[int]:
    return [input_dim, 16, embedding_dim]


@dataclass(frozen=True)
class Margins:
    alpha_p: float = 0.2
    alpha_n: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.alpha_p < self.alpha_n <= 2.0:
            raise DataQualityError(
                f"margins must satisfy 0 <= alpha_p < alpha_n <= 2, got {self.alpha_p}, {self.alpha_n}"
            )


class ViBEModel:
    """
    Garment tower: h_attr, h_cnn -> f_cloth. Body tower: h_smpl, h_meas -> f_body.
    Either tower may run on a subset of its heads; the embedding head input
    width is the sum of the enabled head outputs.
    """

    def __init__(
        self,
        heads: Dict[str, Mlp],
        f_cloth: Mlp,
        f_body: Mlp,
        stats: Optional[StandardizationStats] = None,
    ):
        self.heads = dict(heads)
        self.f_cloth = f_cloth
        self.f_body = f_body
        self.stats = stats
        if not self.garment_heads or not self.body_heads:
            raise DataQualityError("the model needs at least one garment head and one body head")
        garment_out = sum(self.heads[h].out_dim for h in self.garment_heads)
        body_out = sum(self.heads[h].out_dim for h in self.body_heads)
        if f_cloth.in_dim != garment_out:
            raise DimensionMismatchError("f_cloth input", garment_out, f_cloth.in_dim)
        if f_body.in_dim != body_out:
            raise DimensionMismatchError("f_body input", body_out, f_body.in_dim)
        if f_cloth.out_dim != f_body.out_dim:
            raise DimensionMismatchError("embedding width", f_cloth.out_dim, f_body.out_dim)

    @classmethod
    def initialize(
        cls,
        num_attributes: int,
        visual_dim: int,
        seed: int = 0,
        stats: Optional[StandardizationStats] = None,
        garment_heads: Sequence[str] = GARMENT_HEADS,
        body_heads: Sequence[str] = BODY_HEADS,
        embedding_dim: int = EMBEDDING_DIM,
    ) -> "ViBEModel":
        unknown = set(garment_heads) - set(GARMENT_HEADS) | set(body_heads) - set(BODY_HEADS)
        if unknown:
            raise DataQualityError(f"unknown heads: {sorted(unknown)}")
        if not garment_heads or not body_heads:
            raise DataQualityError("the model needs at least one garment head and one body head")
        inputs = {'attributes': num_attributes, 'visual': visual_dim, 'smpl': SMPL_DIM, 'vitals': VITALS_DIM}
        rng = np.random.default_rng(seed)
        heads = {}
        for name in GARMENT_HEADS + BODY_HEADS:
            if name in garment_heads or name in body_heads:
                heads[name] = Mlp.initialize(head_widths(name, inputs[name]), rng)
        garment_out = sum(HEAD_OUTPUT[h] for h in garment_heads)
        body_out = sum(HEAD_OUTPUT[h] for h in body_heads)
        f_cloth = Mlp.initialize(cloth_widths(garment_out, embedding_dim), rng)
        f_body = Mlp.initialize(body_widths(body_out, embedding_dim), rng)
        return cls(heads, f_cloth, f_body, stats)

    @property
    def garment_heads(self) -> Tuple[str, ...]:
        return tuple(h for h in GARMENT_HEADS if h in self.heads)

    @property
    def body_heads(self) -> Tuple[str, ...]:
        return tuple(h for h in BODY_HEADS if h in self.heads)

    @property
    def embedding_dim(self) -> int:
        return self.f_cloth.out_dim

    @property
    def num_attributes(self) -> Optional[int]:
        return self.heads['attributes'].in_dim if 'attributes' in self.heads else None

    @property
    def visual_dim(self) -> Optional[int]:
        return self.heads['visual'].in_dim if 'visual' in self.heads else None

    def networks(self) -> List[Tuple[str, Mlp]]:
        """Parameter order used by get_flat, set_flat and checkpoints"""
        named = [(h, self.heads[h]) for h in self.garment_heads + self.body_heads]
        return named + [('f_cloth', self.f_cloth), ('f_body', self.f_body)]

    @property
    def n_params(self) -> int:
        return sum(net.n_params for _, net in self.networks())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([net.get_flat() for _, net in self.networks()])

    def set_flat(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.n_params:
            raise DimensionMismatchError("model parameter vector", self.n_params, values.size)
        offset = 0
        for _, net in self.networks():
            net.set_flat(values[offset:offset + net.n_params])
            offset += net.n_params

    def copy(self) -> "ViBEModel":
        return ViBEModel(
            {name: net.copy() for name, net in self.heads.items()},
            self.f_cloth.copy(), self.f_body.copy(), self.stats,
        )

    def describe(self) -> Dict:
        """Architecture summary stored in checkpoint headers"""
        return {
            'garment_heads': list(self.garment_heads),
            'body_heads': list(self.body_heads),
            'widths': {name: net.widths for name, net in self.networks()},
        }

    @classmethod
    def from_description(cls, description: Dict, stats: Optional[StandardizationStats] = None) -> "ViBEModel":
        widths = description['widths']
        heads = {
            name: Mlp.zeros(widths[name])
            for name in list(description['garment_heads']) + list(description['body_heads'])
        }
        return cls(heads, Mlp.zeros(widths['f_cloth']), Mlp.zeros(widths['f_body']), stats)


@dataclass
class GarmentTable:
    """Garment model inputs: raw attribute bits and standardized visual features"""
    ids: List[str]
    attributes: np.ndarray
    visual: np.ndarray
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {g: i for i, g in enumerate(self.ids)}

    @classmethod
    def from_records(cls, garments: Sequence[GarmentRecord], stats: Optional[StandardizationStats] = None):
        if not garments:
            raise DataQualityError("no garments to tabulate")
        attributes = np.array([g.attributes for g in garments], dtype=np.float64)
        visual = np.array([g.visual for g in garments], dtype=np.float64)
        if stats is not None:
            visual, _ = standardize(visual, stats.visual)
        return cls([g.garment_id for g in garments], attributes, visual)

    @classmethod
    def from_catalog(cls, catalog: Catalog, stats: Optional[StandardizationStats] = None):
        return cls.from_records(catalog.garments, stats)

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.index[g] for g in ids], dtype=np.int64)
        except KeyError as e:
            raise DataQualityError(f"unknown garment_id {e.args[0]}") from None

    def inputs(self, rows: np.ndarray) -> Dict[str, np.ndarray]:
        return {'attributes': self.attributes[rows], 'visual': self.visual[rows]}


@dataclass
class BodyTable:
    """Body model inputs: standardized smpl and vitals"""
    ids: List[str]
    smpl: np.ndarray
    vitals: np.ndarray
    index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {b: i for i, b in enumerate(self.ids)}

    @classmethod
    def from_records(cls, bodies: Sequence[BodyRecord], stats: Optional[StandardizationStats] = None):
        if not bodies:
            raise DataQualityError("no bodies to tabulate")
        smpl = np.array([b.smpl for b in bodies], dtype=np.float64)
        vitals = np.array([b.vitals for b in bodies], dtype=np.float64)
        if stats is not None:
            smpl, _ = standardize(smpl, stats.smpl)
            vitals, _ = standardize(vitals, stats.vitals)
        return cls([b.body_id for b in bodies], smpl, vitals)

    @classmethod
    def from_catalog(cls, catalog: Catalog, stats: Optional[StandardizationStats] = None):
        return cls.from_records(catalog.bodies, stats)

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.index[b] for b in ids], dtype=np.int64)
        except KeyError as e:
            raise DataQualityError(f"unknown body_id {e.args[0]}") from None

    def inputs(self, rows: np.ndarray) -> Dict[str, np.ndarray]:
        return {'smpl': self.smpl[rows], 'vitals': self.vitals[rows]}


@dataclass
class _TowerCache:
    head_tapes: list
    head_names: Tuple[str, ...]
    head_widths: List[int]
    top_tape: object
    pre_norm: np.ndarray


def _tower_forward(heads: Dict[str, Mlp], names: Tuple[str, ...], top: Mlp, inputs: Dict[str, np.ndarray]):
    outputs, tapes = [], []
    for name in names:
        out, tape = mlp_apply(heads[name], inputs[name])
        outputs.append(np.atleast_2d(out))
        tapes.append(tape)
    joint = np.hstack(outputs)
    pre_norm, top_tape = mlp_apply(top, joint)
    z = l2_normalize(pre_norm)
    cache = _TowerCache(tapes, names, [o.shape[1] for o in outputs], top_tape, pre_norm)
    return z, cache


def _tower_backward(heads: Dict[str, Mlp], top: Mlp, top_name: str, cache: _TowerCache, grad_z: np.ndarray):
    grads = {}
    grad_pre = l2_normalize_backward(cache.pre_norm, grad_z)
    top_grads, grad_joint = mlp_backprop(top, cache.top_tape, grad_pre)
    grads[top_name] = flatten_gradients(top_grads)
    offset = 0
    for name, width, tape in zip(cache.head_names, cache.head_widths, cache.head_tapes):
        head_grads, _ = mlp_backprop(heads[name], tape, grad_joint[:, offset:offset + width])
        grads[name] = flatten_gradients(head_grads)
        offset += width
    return grads


def embed_garments(model: ViBEModel, table: GarmentTable, rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Unit embeddings (n x d) for table rows (all rows by default)"""
    rows = np.arange(len(table.ids)) if rows is None else rows
    z, _ = _tower_forward(model.heads, model.garment_heads, model.f_cloth, table.inputs(rows))
    return z


def embed_bodies(model: ViBEModel, table: BodyTable, rows: Optional[np.ndarray] = None) -> np.ndarray:
    rows = np.arange(len(table.ids)) if rows is None else rows
    z, _ = _tower_forward(model.heads, model.body_heads, model.f_body, table.inputs(rows))
    return z


def embed_garment(model: ViBEModel, garment: GarmentRecord) -> np.ndarray:
    table = GarmentTable.from_records([garment], model.stats)
    return embed_garments(model, table)[0]


def embed_body(model: ViBEModel, body: BodyRecord) -> np.ndarray:
    table = BodyTable.from_records([body], model.stats)
    return embed_bodies(model, table)[0]


def score_affinity(model: ViBEModel, body: BodyRecord, garment: GarmentRecord) -> float:
    """Negative Euclidean distance between the body and garment embeddings"""
    return -float(np.linalg.norm(embed_body(model, body) - embed_garment(model, garment)))


def score_pairs(
    model: ViBEModel,
    bodies: BodyTable,
    garments: GarmentTable,
    body_ids: Sequence[str],
    garment_ids: Sequence[str],
) -> np.ndarray:
    """score_affinity over aligned id lists, embedding each entity once"""
    body_rows = bodies.rows(body_ids)
    garment_rows = garments.rows(garment_ids)
    unique_b, inv_b = np.unique(body_rows, return_inverse=True)
    unique_g, inv_g = np.unique(garment_rows, return_inverse=True)
    zb = embed_bodies(model, bodies, unique_b)[inv_b]
    zg = embed_garments(model, garments, unique_g)[inv_g]
    return -np.linalg.norm(zb - zg, axis=1)


def _directions(diff: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # gradient of a distance at zero separation is taken as 0
    safe = np.where(dist > 0, dist, 1.0)[:, None]
    return np.where(dist[:, None] > 0, diff / safe, 0.0)


def margin_terms(z_a: np.ndarray, z_p: np.ndarray, z_n: np.ndarray, margins: Margins):
    """Per-row margin loss and its gradients with respect to z_a, z_p and z_n"""
    d_pos = np.linalg.norm(z_a - z_p, axis=1)
    d_neg = np.linalg.norm(z_a - z_n, axis=1)
    pos_term = d_pos - margins.alpha_p
    neg_term = margins.alpha_n - d_neg
    pos_active = (pos_term > 0)[:, None]
    neg_active = (neg_term > 0)[:, None]
    losses = np.maximum(pos_term, 0.0) + np.maximum(neg_term, 0.0)

    u_pos = _directions(z_a - z_p, d_pos) * pos_active
    u_neg = _directions(z_a - z_n, d_neg) * neg_active
    return losses, u_pos - u_neg, -u_pos, u_neg


def margin_loss(z_a, z_p, z_n, margins: Margins = Margins()) -> float:
    """(D(a,p) - alpha_p)+ + (alpha_n - D(a,n))+"""
    losses, _, _, _ = margin_terms(
        np.atleast_2d(z_a).astype(np.float64),
        np.atleast_2d(z_p).astype(np.float64),
        np.atleast_2d(z_n).astype(np.float64),
        margins,
    )
    return float(losses[0])


@dataclass(frozen=True)
class Triplet:
    anchor: str
    positive: str
    negative: str
    kind: str  # 'body_cloth' or 'body_body'


@dataclass
class TripletBatch:
    """Triplets of both kinds plus the feature tables their ids resolve against"""
    body_cloth: List[Triplet]
    body_body: List[Triplet]
    bodies: BodyTable
    garments: GarmentTable

    def __len__(self):
        return len(self.body_cloth) + len(self.body_body)

    def body_ids(self) -> set:
        ids = {t.anchor for t in self.body_cloth}
        for t in self.body_body:
            ids.update((t.anchor, t.positive, t.negative))
        return ids

    def garment_ids(self) -> set:
        ids = set()
        for t in self.body_cloth:
            ids.update((t.positive, t.negative))
        return ids


def total_loss_and_grad(
    model: ViBEModel, batch: TripletBatch, margins: Margins = Margins(), with_grad: bool = True
) -> Tuple[float, Optional[np.ndarray]]:
    """
    Mean body-cloth margin loss plus mean body-body margin loss, with the
    gradient in the order of model.get_flat(). An empty kind contributes 0.
    """
    bc, bb = batch.body_cloth, batch.body_body
    n_bc, n_bb = len(bc), len(bb)

    body_rows = np.concatenate([
        batch.bodies.rows([t.anchor for t in bc]),
        batch.bodies.rows([t.anchor for t in bb]),
        batch.bodies.rows([t.positive for t in bb]),
        batch.bodies.rows([t.negative for t in bb]),
    ])
    garment_rows = np.concatenate([
        batch.garments.rows([t.positive for t in bc]),
        batch.garments.rows([t.negative for t in bc]),
    ])

    loss = 0.0
    grads: Dict[str, np.ndarray] = {}
    unique_b, inv_b = np.unique(body_rows, return_inverse=True)
    zb_unique, body_cache = _tower_forward(
        model.heads, model.body_heads, model.f_body, batch.bodies.inputs(unique_b)
    )
    zb = zb_unique[inv_b]
    grad_zb = np.zeros_like(zb)

    grad_zg, garment_cache, inv_g, zg_unique = None, None, None, None
    if n_bc:
        unique_g, inv_g = np.unique(garment_rows, return_inverse=True)
        zg_unique, garment_cache = _tower_forward(
            model.heads, model.garment_heads, model.f_cloth, batch.garments.inputs(unique_g)
        )
        zg = zg_unique[inv_g]
        losses, g_a, g_p, g_n = margin_terms(zb[:n_bc], zg[:n_bc], zg[n_bc:], margins)
        loss += losses.mean()
        grad_zb[:n_bc] = g_a / n_bc
        grad_zg = np.concatenate([g_p, g_n]) / n_bc

    if n_bb:
        a = zb[n_bc:n_bc + n_bb]
        p = zb[n_bc + n_bb:n_bc + 2 * n_bb]
        n = zb[n_bc + 2 * n_bb:]
        losses, g_a, g_p, g_n = margin_terms(a, p, n, margins)
        loss += losses.mean()
        grad_zb[n_bc:] = np.concatenate([g_a, g_p, g_n]) / n_bb

    if not with_grad:
        return float(loss), None

    scattered = np.zeros_like(zb_unique)
    np.add.at(scattered, inv_b, grad_zb)
    grads.update(_tower_backward(model.heads, model.f_body, 'f_body', body_cache, scattered))
    if n_bc:
        scattered = np.zeros_like(zg_unique)
        np.add.at(scattered, inv_g, grad_zg)
        grads.update(_tower_backward(model.heads, model.f_cloth, 'f_cloth', garment_cache, scattered))

    flat = np.concatenate([
        grads.get(name, np.zeros(net.n_params)) for name, net in model.networks()
    ])
    return float(loss), flat


def total_loss(model: ViBEModel, batch: TripletBatch, margins: Margins = Margins()) -> float:
    loss, _ = total_loss_and_grad(model, batch, margins, with_grad=False)
    return loss


def pairwise_garment_distances(model: ViBEModel, table: GarmentTable) -> np.ndarray:
    """Distances between all distinct garment pairs (upper triangle, row-major)"""
    z = embed_garments(model, table)
    gram = np.clip(z @ z.T, -1.0, 1.0)
    # |a - b|^2 = 2 - 2<a, b> on the unit sphere
    dist = np.sqrt(np.maximum(2.0 - 2.0 * gram, 0.0))
    upper = np.triu_indices(len(table.ids), k=1)
    return dist[upper]


def median_pairwise_distance(model: ViBEModel, table: GarmentTable) -> float:
    return float(np.median(pairwise_garment_distances(model, table)))
