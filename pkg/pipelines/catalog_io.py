"""
ViBE - Catalog file ingestion and persistence

Line-delimited text, one entity per line, whitespace-separated fields,
'#' starts a comment line. A catalog file has four sections:

    [attributes]   one attribute name per line (defines A)
    [bodies]       body_id smpl_1 .. smpl_10 height bust waist hips
    [garments]     garment_id category attr_1 .. attr_A visual_1 .. visual_V
    [positives]    body_id garment_id

Synthetic catalogs carry an oracle companion file (<catalog>.oracle) of
'body_id garment_id 0|1' lines. Reals are written with Python's shortest
round-trip repr, so save followed by load is exact.
"""

import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

from models.records import (
    BodyRecord, Catalog, DataQualityError, GarmentRecord, SMPL_DIM, VITALS_DIM
)

logger = logging.getLogger('Catalog_IO')

PathLike = Union[str, Path]
CATALOG_SECTIONS = ('attributes', 'bodies', 'garments', 'positives')


def write_atomic(path: PathLike, text: str):
    """Write to a temporary sibling then rename over the target"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_real(value: float) -> str:
    return repr(float(value))


def oracle_path_for(catalog_path: PathLike) -> Path:
    catalog_path = Path(catalog_path)
    return catalog_path.with_name(catalog_path.name + '.oracle')


def _data_lines(path: Path) -> Iterator[Tuple[int, str]]:
    if not path.exists():
        logger.error(f"File not found: {path}")
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line and not line.startswith('#'):
                yield lineno, line


def _parse_real(token: str, where: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise DataQualityError(f"{where}: '{token}' is not a number") from None


def _parse_body(tokens: List[str], where: str) -> BodyRecord:
    if len(tokens) != 1 + SMPL_DIM + VITALS_DIM:
        raise DataQualityError(
            f"{where}: body line needs id + {SMPL_DIM} smpl + {VITALS_DIM} vitals, got {len(tokens)} fields"
        )
    values = [_parse_real(t, where) for t in tokens[1:]]
    try:
        return BodyRecord(body_id=tokens[0], smpl=values[:SMPL_DIM], vitals=values[SMPL_DIM:])
    except DataQualityError as e:
        raise DataQualityError(f"{where}: {e}") from None


def load_bodies(path: PathLike) -> List[BodyRecord]:
    """Read body lines, with or without a [bodies] header"""
    path = Path(path)
    bodies = []
    for lineno, line in _data_lines(path):
        if line.startswith('['):
            if line != '[bodies]':
                raise DataQualityError(f"{path}:{lineno}: unexpected section {line} in a body file")
            continue
        bodies.append(_parse_body(line.split(), f"{path}:{lineno}"))
    return bodies


def load_catalog(path: PathLike, oracle_path: Optional[PathLike] = None) -> Catalog:
    """
    Read and validate a catalog file.

    The oracle companion is loaded from oracle_path, or from <path>.oracle
    when that file exists.
    """
    path = Path(path)
    logger.info(f"Loading catalog from {path}")

    section = None
    vocabulary: List[str] = []
    bodies: List[BodyRecord] = []
    garments: List[GarmentRecord] = []
    positives: Set[Tuple[str, str]] = set()
    body_lines: Dict[str, int] = {}
    garment_lines: Dict[str, int] = {}
    visual_dim = None

    for lineno, line in _data_lines(path):
        where = f"{path}:{lineno}"
        if line.startswith('[') and line.endswith(']'):
            section = line[1:-1].strip()
            if section not in CATALOG_SECTIONS:
                raise DataQualityError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise DataQualityError(f"{where}: data before the first section header")

        tokens = line.split()
        if section == 'attributes':
            vocabulary.append(line)

        elif section == 'bodies':
            body = _parse_body(tokens, where)
            if body.body_id in body_lines:
                raise DataQualityError(
                    f"{where}: duplicate body_id {body.body_id} (first seen on line {body_lines[body.body_id]})"
                )
            body_lines[body.body_id] = lineno
            bodies.append(body)

        elif section == 'garments':
            n_attr = len(vocabulary)
            if len(tokens) < 2 + n_attr:
                raise DataQualityError(f"{where}: garment line needs id, category and {n_attr} attribute bits")
            garment_id, category = tokens[0], tokens[1]
            bits = tokens[2:2 + n_attr]
            if any(b not in ('0', '1') for b in bits):
                bad = next(b for b in bits if b not in ('0', '1'))
                raise DataQualityError(f"{where}: non-binary attribute value '{bad}' for garment {garment_id}")
            visual = [_parse_real(t, where) for t in tokens[2 + n_attr:]]
            if visual_dim is None:
                visual_dim = len(visual)
            elif len(visual) != visual_dim:
                raise DataQualityError(
                    f"{where}: inconsistent visual vector length {len(visual)} (expected {visual_dim})"
                )
            if garment_id in garment_lines:
                raise DataQualityError(
                    f"{where}: duplicate garment_id {garment_id} (first seen on line {garment_lines[garment_id]})"
                )
            try:
                garment = GarmentRecord(garment_id, category, [int(b) for b in bits], visual)
            except DataQualityError as e:
                raise DataQualityError(f"{where}: {e}") from None
            garment_lines[garment_id] = lineno
            garments.append(garment)

        elif section == 'positives':
            if len(tokens) != 2:
                raise DataQualityError(f"{where}: positive line needs body_id and garment_id")
            body_id, garment_id = tokens
            if body_id not in body_lines:
                raise DataQualityError(f"{where}: positive references unknown body_id {body_id}")
            if garment_id not in garment_lines:
                raise DataQualityError(f"{where}: positive references unknown garment_id {garment_id}")
            positives.add((body_id, garment_id))

    oracle = None
    companion = Path(oracle_path) if oracle_path is not None else oracle_path_for(path)
    if oracle_path is not None or companion.exists():
        oracle = load_oracle(companion)

    catalog = Catalog(
        bodies=bodies,
        garments=garments,
        positives=frozenset(positives),
        attribute_vocabulary=vocabulary,
        oracle=oracle,
    )
    logger.info(
        f"Loaded {len(bodies)} bodies, {len(garments)} garments, {len(positives)} positives"
    )
    return catalog


def load_oracle(path: PathLike) -> Dict[Tuple[str, str], bool]:
    path = Path(path)
    oracle = {}
    for lineno, line in _data_lines(path):
        tokens = line.split()
        if len(tokens) != 3 or tokens[2] not in ('0', '1'):
            raise DataQualityError(f"{path}:{lineno}: oracle line needs body_id garment_id 0|1")
        oracle[(tokens[0], tokens[1])] = tokens[2] == '1'
    return oracle


def format_catalog(catalog: Catalog) -> str:
    lines = ['# vibe catalog v1', '[attributes]']
    lines.extend(catalog.attribute_vocabulary)

    lines.append('[bodies]')
    lines.append('# body_id smpl_1..smpl_10 height bust waist hips')
    for body in catalog.bodies:
        lines.append(' '.join([body.body_id] + [format_real(v) for v in body.smpl + body.vitals]))

    lines.append('[garments]')
    lines.append('# garment_id category attributes... visual...')
    for garment in catalog.garments:
        fields = [garment.garment_id, garment.category]
        fields.extend(str(a) for a in garment.attributes)
        fields.extend(format_real(v) for v in garment.visual)
        lines.append(' '.join(fields))

    lines.append('[positives]')
    for body_id, garment_id in sorted(catalog.positives):
        lines.append(f"{body_id} {garment_id}")
    return '\n'.join(lines) + '\n'


def save_catalog(catalog: Catalog, path: PathLike):
    """Write the catalog, plus its oracle companion when present"""
    path = Path(path)
    write_atomic(path, format_catalog(catalog))
    if catalog.oracle is not None:
        save_oracle(catalog.oracle, oracle_path_for(path))
    logger.info(f"Saved catalog to {path}")


def save_oracle(oracle: Dict[Tuple[str, str], bool], path: PathLike):
    lines = ['# body_id garment_id compatible']
    for (body_id, garment_id), compatible in sorted(oracle.items()):
        lines.append(f"{body_id} {garment_id} {int(compatible)}")
    write_atomic(path, '\n'.join(lines) + '\n')


def load_id_triples(path: PathLike, label_column: bool = False) -> List[Tuple[str, ...]]:
    """
    Read 3-field lines: 'body_id preferred_id rejected_id' for preference
    files, or 'body_id garment_id 0|1' for judged-pair files (label_column).
    """
    path = Path(path)
    rows = []
    for lineno, line in _data_lines(path):
        tokens = line.split()
        if len(tokens) != 3:
            raise DataQualityError(f"{path}:{lineno}: expected 3 fields, got {len(tokens)}")
        if label_column and tokens[2] not in ('0', '1'):
            raise DataQualityError(f"{path}:{lineno}: label must be 0 or 1")
        rows.append(tuple(tokens))
    return rows
