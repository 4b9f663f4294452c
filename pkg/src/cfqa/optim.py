"""AdaDelta parameter updates (accumulated-RMS step sizing)."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class AdaDeltaSlot:
    """Per-parameter accumulators for the AdaDelta rule."""

    def __init__(self, shape, rho: float = 0.95, eps: float = 1e-6, dtype=np.float32):
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0,1), got {rho}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.accum_grad_sq = np.zeros(shape, dtype=dtype)
        self.accum_update_sq = np.zeros(shape, dtype=dtype)
        self.rho = rho
        self.eps = eps


def adadelta_update(param: np.ndarray, grad: np.ndarray, slot: AdaDeltaSlot) -> None:
    """Apply one AdaDelta step to ``param`` in place.

    Accumulate decayed grad^2, scale the step by the RMS ratio of past
    updates to past gradients, then accumulate decayed update^2. The step is
    elementwise opposed to the gradient; there is no external learning rate.
    """
    if param.shape != grad.shape or param.shape != slot.accum_grad_sq.shape:
        raise ShapeError(
            f"parameter {param.shape}, gradient {grad.shape} and slot "
            f"{slot.accum_grad_sq.shape} must share one shape")
    rho, eps = slot.rho, slot.eps
    slot.accum_grad_sq *= rho
    slot.accum_grad_sq += (1.0 - rho) * grad * grad
    delta = -np.sqrt(slot.accum_update_sq + eps) / np.sqrt(slot.accum_grad_sq + eps) * grad
    param += delta
    slot.accum_update_sq *= rho
    slot.accum_update_sq += (1.0 - rho) * delta * delta
