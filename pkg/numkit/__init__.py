"""ViBE - Dense numeric kernel"""

from .errors import (
    NumericError,
    DimensionMismatchError,
    StaleTapeError,
    DegenerateDirectionError,
    NonFiniteGradientError,
    NonFiniteLossError
)
from .layers import (
    LinearLayer,
    LayerGradient,
    Mlp,
    Tape,
    dense_matrix,
    mlp_apply,
    mlp_backprop,
    flatten_gradients
)
from .sphere import NORM_FLOOR, l2_normalize, l2_normalize_backward
from .optim import AdamState, SgdState, adam_step, sgd_step, scheduled_learning_rate
from .gradcheck import GradCheckResult, grad_check, grad_check_detailed

__all__ = [
    'NumericError',
    'DimensionMismatchError',
    'StaleTapeError',
    'DegenerateDirectionError',
    'NonFiniteGradientError',
    'NonFiniteLossError',
    'LinearLayer',
    'LayerGradient',
    'Mlp',
    'Tape',
    'dense_matrix',
    'mlp_apply',
    'mlp_backprop',
    'flatten_gradients',
    'NORM_FLOOR',
    'l2_normalize',
    'l2_normalize_backward',
    'AdamState',
    'SgdState',
    'adam_step',
    'sgd_step',
    'scheduled_learning_rate',
    'GradCheckResult',
    'grad_check',
    'grad_check_detailed'
]
