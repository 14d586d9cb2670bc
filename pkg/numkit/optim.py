"""
ViBE - Optimizers
Adam and plain SGD over flat float64 parameter vectors, both with decoupled
weight decay and a piecewise-constant learning-rate schedule.
"""

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, NonFiniteGradientError, NumericError

Schedule = List[Tuple[int, float]]


def scheduled_learning_rate(base: float, schedule: Sequence[Tuple[int, float]], epoch: int) -> float:
    """Base rate times every multiplier whose epoch has been reached"""
    lr = base
    for at_epoch, multiplier in schedule:
        if at_epoch <= epoch:
            lr *= multiplier
    return lr


def _check_gradients(params: np.ndarray, grads: np.ndarray):
    if params.shape != grads.shape:
        raise DimensionMismatchError("gradient vector", params.size, grads.size)
    if not np.all(np.isfinite(grads)):
        bad = int(np.count_nonzero(~np.isfinite(grads)))
        raise NonFiniteGradientError(f"{bad} non-finite gradient entries")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    base_learning_rate: float = 0.003
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule: Schedule = field(default_factory=list)

    def __post_init__(self):
        if self.first_moment.shape != self.second_moment.shape:
            raise DimensionMismatchError("Adam moments", self.first_moment.size, self.second_moment.size)
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise NumericError("Adam betas must lie in (0, 1)")
        if self.step_count < 0:
            raise NumericError("step_count must be >= 0")

    @classmethod
    def for_parameters(cls, n_params: int, **settings) -> "AdamState":
        return cls(first_moment=np.zeros(n_params), second_moment=np.zeros(n_params), **settings)


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, current_epoch: int
) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns new parameters and a new state"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    _check_gradients(params, grads)
    if state.first_moment.shape != params.shape:
        raise DimensionMismatchError("Adam moments", params.size, state.first_moment.size)

    lr = scheduled_learning_rate(state.base_learning_rate, state.schedule, current_epoch)
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)

    decayed = params * (1.0 - lr * state.weight_decay)
    updated = decayed - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return updated, replace(state, first_moment=m, second_moment=v, step_count=t)


@dataclass
class SgdState:
    step_count: int = 0
    base_learning_rate: float = 0.0001
    weight_decay: float = 0.0001
    schedule: Schedule = field(default_factory=list)


def sgd_step(
    params: np.ndarray, grads: np.ndarray, state: SgdState, current_epoch: int
) -> Tuple[np.ndarray, SgdState]:
    """Plain gradient step with decoupled weight decay"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    _check_gradients(params, grads)
    lr = scheduled_learning_rate(state.base_learning_rate, state.schedule, current_epoch)
    updated = params * (1.0 - lr * state.weight_decay) - lr * grads
    return updated, replace(state, step_count=state.step_count + 1)
