"""
ViBE - Finite-difference gradient checking
"""

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .errors import NumericError

# loss_function(params) -> (loss, analytic gradient)
LossWithGradient = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_index: int
    checked: int
    excluded: List[int] = field(default_factory=list)
    # both slopes below what central differences can resolve in float64
    unresolved: List[int] = field(default_factory=list)


def grad_check_detailed(
    loss_function: LossWithGradient,
    params: np.ndarray,
    perturbation: float = 1e-5,
    kink_tolerance: float = 1e-2,
    resolution_factor: float = 1e4,
) -> GradCheckResult:
    """
    Compare analytic gradients with central differences, one parameter at a time.

    A parameter whose forward and backward one-sided slopes disagree by more
    than kink_tolerance (relative to max(1, |central|)) sits on a rectifier or
    hinge kink inside the probe interval and is excluded. So is a parameter
    whose analytic and central slopes are both below
    resolution_factor * eps * max(1, |loss|) / perturbation, where rounding
    in the loss dominates the difference quotient.
    """
    if not 1e-7 <= perturbation <= 1e-3:
        raise NumericError(f"perturbation {perturbation:g} outside [1e-7, 1e-3]")

    params = np.array(params, dtype=np.float64)
    base_loss, analytic = loss_function(params.copy())
    analytic = np.asarray(analytic, dtype=np.float64)

    worst, worst_index = 0.0, -1
    excluded, unresolved = [], []
    resolution = resolution_factor * np.finfo(np.float64).eps * max(1.0, abs(base_loss)) / perturbation
    probe = params.copy()
    for i in range(params.size):
        original = probe[i]
        probe[i] = original + perturbation
        loss_plus, _ = loss_function(probe.copy())
        probe[i] = original - perturbation
        loss_minus, _ = loss_function(probe.copy())
        probe[i] = original

        central = (loss_plus - loss_minus) / (2.0 * perturbation)
        forward = (loss_plus - base_loss) / perturbation
        backward = (base_loss - loss_minus) / perturbation
        if abs(forward - backward) > kink_tolerance * max(1.0, abs(central)):
            excluded.append(i)
            continue

        a = analytic[i]
        if max(abs(a), abs(central)) < resolution:
            unresolved.append(i)
            continue
        error = abs(a - central) / max(abs(a), abs(central), 1e-8)
        if error > worst:
            worst, worst_index = error, i

    return GradCheckResult(
        max_relative_error=worst,
        worst_index=worst_index,
        checked=params.size - len(excluded) - len(unresolved),
        excluded=excluded,
        unresolved=unresolved,
    )


def grad_check(loss_function: LossWithGradient, params: np.ndarray, perturbation: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients"""
    return grad_check_detailed(loss_function, params, perturbation).max_relative_error
