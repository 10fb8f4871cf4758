"""
Central finite-difference gradient checks for torch modules (float64).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-5
# denominator floor of the relative error: gradients below it are compared
# absolutely, scaled by 1/ERROR_FLOOR
ERROR_FLOOR = 1e-4


@dataclass
class GradCheckResult:
    max_relative_error: float = 0.0
    per_parameter: Dict[str, float] = field(default_factory=dict)
    checked_elements: int = 0

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor, floor: float = ERROR_FLOOR) -> torch.Tensor:
    scale = torch.maximum(torch.maximum(analytic.abs(), numeric.abs()), torch.full_like(analytic, floor))
    return (analytic - numeric).abs() / scale


def numerical_gradient(loss_fn: Callable[[], torch.Tensor], param: torch.Tensor,
                       eps: float = DEFAULT_EPS,
                       indices: Optional[Iterable[Tuple[int, ...]]] = None) -> torch.Tensor:
    """(f(p + eps) - f(p - eps)) / 2eps per element, other elements held fixed."""
    grad = torch.zeros_like(param)
    positions = indices if indices is not None else np.ndindex(*param.shape)
    with torch.no_grad():
        for index in positions:
            original = param[index].item()
            param[index] = original + eps
            plus = float(loss_fn())
            param[index] = original - eps
            minus = float(loss_fn())
            param[index] = original
            grad[index] = (plus - minus) / (2 * eps)
    return grad


def check_module_gradients(module: nn.Module, loss_fn: Callable[[], torch.Tensor],
                           eps: float = DEFAULT_EPS, max_elements: Optional[int] = None,
                           rng: Optional[np.random.Generator] = None) -> GradCheckResult:
    """Compare autograd gradients of ``loss_fn`` with finite differences.

    The module must already be float64. With ``max_elements`` a random subset
    of each parameter's elements is checked.
    """
    rng = rng or np.random.default_rng(0)
    module.zero_grad(set_to_none=True)
    loss_fn().backward()

    result = GradCheckResult()
    for name, param in module.named_parameters():
        if not param.requires_grad:
            continue
        if param.dtype != torch.float64:
            raise TypeError(f"parameter {name} is {param.dtype}, gradient checks need float64")
        analytic = param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)

        indices = list(np.ndindex(*param.shape))
        if max_elements is not None and len(indices) > max_elements:
            chosen = rng.choice(len(indices), size=max_elements, replace=False)
            indices = [indices[i] for i in sorted(chosen)]

        numeric = numerical_gradient(loss_fn, param.data, eps, indices)
        mask = torch.zeros_like(param, dtype=torch.bool)
        for index in indices:
            mask[index] = True
        error = float(relative_error(analytic[mask], numeric[mask]).max()) if indices else 0.0

        result.per_parameter[name] = error
        result.max_relative_error = max(result.max_relative_error, error)
        result.checked_elements += len(indices)

    logger.debug(f"Проверка градиентов: max rel. error {result.max_relative_error:.3e}",
                 extra={'elements': result.checked_elements})
    return result
