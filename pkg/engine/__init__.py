"""Engine package: float64 tensors with reverse-mode differentiation."""

from .tensor import ComputationRecord, Tensor, detect_anomaly, is_grad_enabled, no_grad
from .functional import BatchNormState
from .gradcheck import GradcheckReport, GradcheckResult, gradcheck

__all__ = [
    'Tensor',
    'ComputationRecord',
    'BatchNormState',
    'GradcheckReport',
    'GradcheckResult',
    'gradcheck',
    'no_grad',
    'detect_anomaly',
    'is_grad_enabled',
]
