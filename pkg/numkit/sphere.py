"""
ViBE - Hypersphere projection
"""

import numpy as np

from .errors import DegenerateDirectionError

NORM_FLOOR = 1e-8


def _row_norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1, keepdims=True))


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """Scale a vector (or each row) to unit Euclidean norm"""
    v = np.asarray(v, dtype=np.float64)
    norms = _row_norms(v)
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateDirectionError(
            f"cannot normalize a vector with norm <= {NORM_FLOOR:g} (min norm {norms.min():.3g})"
        )
    return v / norms


def l2_normalize_backward(v: np.ndarray, output_gradient: np.ndarray) -> np.ndarray:
    """Apply the Jacobian (I - u u^T) / |v| of l2_normalize at v"""
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(output_gradient, dtype=np.float64)
    norms = _row_norms(v)
    u = v / norms
    radial = np.sum(u * g, axis=-1, keepdims=True)
    return (g - u * radial) / norms
