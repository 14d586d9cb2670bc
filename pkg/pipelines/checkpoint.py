"""
ViBE - Model checkpoints

    VIBE-CHECKPOINT <format version>
    {"method": ..., "architecture": ..., "config": ..., "config_hash": ..., "stats": ...}
    <tensor name> <count> <values...>      one line per parameter block
    sha256 <hex digest of every preceding byte>

Reals use the shortest round-trip decimal form, so save followed by load
restores parameters bit for bit.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from models.cf import CFModel
from models.records import StandardizationStats
from models.vibe import ViBEModel
from pipelines.catalog_io import format_real, write_atomic

logger = logging.getLogger('Checkpoint')

FORMAT_VERSION = 1
MAGIC = 'VIBE-CHECKPOINT'
EMBEDDING_METHODS = ('vibe', 'agnostic-embed')
CF_METHODS = {'cf-agnostic': 'agnostic', 'cf-aware': 'aware'}
METHODS = EMBEDDING_METHODS + tuple(CF_METHODS)

Model = Union[ViBEModel, CFModel]
PathLike = Union[str, Path]


class CheckpointError(ValueError):
    """Raised for unreadable, corrupted, or mismatched checkpoints"""
    pass


@dataclass
class Checkpoint:
    method: str
    model: Model
    config: Dict[str, Any] = field(default_factory=dict)
    config_hash: str = ''


def _tensors(model: Model) -> List[Tuple[str, np.ndarray]]:
    if isinstance(model, ViBEModel):
        return [(name, net.get_flat()) for name, net in model.networks()]
    names = ['global_bias', 'user_latent', 'user_bias', 'item_latent', 'item_bias']
    if model.variant == 'aware':
        names += ['side_user_weights', 'side_user_bias', 'side_item_weights', 'side_item_bias']
    return [(name, block.ravel()) for name, block in zip(names, model.blocks())]


def _check_method(method: str, model: Model):
    if method not in METHODS:
        raise CheckpointError(f"unknown method '{method}'")
    if method in EMBEDDING_METHODS and not isinstance(model, ViBEModel):
        raise CheckpointError(f"method '{method}' needs a ViBEModel")
    if method in CF_METHODS and (not isinstance(model, CFModel) or model.variant != CF_METHODS[method]):
        raise CheckpointError(f"method '{method}' needs a {CF_METHODS[method]} CFModel")


def format_checkpoint(
    model: Model, method: str, config: Optional[Dict[str, Any]] = None, config_hash: str = ''
) -> str:
    _check_method(method, model)
    header = {
        'method': method,
        'architecture': model.describe(),
        'config': config or {},
        'config_hash': config_hash,
        'stats': model.stats.as_dict() if model.stats is not None else None,
    }
    lines = [f"{MAGIC} {FORMAT_VERSION}", json.dumps(header, sort_keys=True)]
    for name, values in _tensors(model):
        lines.append(' '.join([name, str(values.size)] + [format_real(v) for v in values]))
    body = '\n'.join(lines) + '\n'
    digest = hashlib.sha256(body.encode('utf-8')).hexdigest()
    return body + f"sha256 {digest}\n"


def save_checkpoint(
    path: PathLike, model: Model, method: str, config: Optional[Dict[str, Any]] = None, config_hash: str = ''
):
    write_atomic(path, format_checkpoint(model, method, config, config_hash))
    logger.info(f"Saved {method} checkpoint to {path}")


def parse_checkpoint(text: str, expected_method: Optional[str] = None, source: str = '<checkpoint>') -> Checkpoint:
    lines = text.split('\n')
    first = lines[0].split()
    if len(first) != 2 or first[0] != MAGIC:
        raise CheckpointError(f"{source}: not a ViBE checkpoint")
    if first[1] != str(FORMAT_VERSION):
        raise CheckpointError(f"{source}: format version {first[1]} is not supported (expected {FORMAT_VERSION})")

    trailer = text.rstrip('\n').rsplit('\n', 1)
    if len(trailer) != 2 or not trailer[1].startswith('sha256 '):
        raise CheckpointError(f"{source}: missing sha256 trailer")
    body = trailer[0] + '\n'
    digest = hashlib.sha256(body.encode('utf-8')).hexdigest()
    if trailer[1].split()[1] != digest:
        raise CheckpointError(f"{source}: content hash mismatch (file corrupted)")

    try:
        header = json.loads(lines[1])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{source}: unreadable header ({e})") from None
    method = header.get('method')
    if expected_method is not None and method != expected_method:
        raise CheckpointError(f"{source}: checkpoint holds method '{method}', expected '{expected_method}'")

    stats = StandardizationStats.from_dict(header['stats']) if header.get('stats') else None
    if method in EMBEDDING_METHODS:
        model: Model = ViBEModel.from_description(header['architecture'], stats)
    elif method in CF_METHODS:
        model = CFModel.from_description(header['architecture'], stats)
    else:
        raise CheckpointError(f"{source}: unknown method '{method}'")
    _check_method(method, model)

    expected = _tensors(model)
    tensor_lines = body.rstrip('\n').split('\n')[2:]
    if len(tensor_lines) != len(expected):
        raise CheckpointError(f"{source}: expected {len(expected)} tensors, found {len(tensor_lines)}")
    values = []
    for line, (name, template) in zip(tensor_lines, expected):
        tokens = line.split()
        if tokens[0] != name or int(tokens[1]) != template.size or len(tokens) != template.size + 2:
            raise CheckpointError(f"{source}: tensor '{tokens[0]}' does not match the architecture")
        values.append(np.array([float(v) for v in tokens[2:]], dtype=np.float64))
    model.set_flat(np.concatenate(values) if values else np.zeros(0))
    return Checkpoint(method, model, header.get('config', {}), header.get('config_hash', ''))


def load_checkpoint(path: PathLike, expected_method: Optional[str] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    checkpoint = parse_checkpoint(path.read_text(encoding='utf-8'), expected_method, str(path))
    logger.info(f"Loaded {checkpoint.method} checkpoint from {path}")
    return checkpoint


def checkpoint_roundtrip(model: Model, method: str) -> Model:
    """Serialize and parse in memory"""
    return parse_checkpoint(format_checkpoint(model, method), method).model
