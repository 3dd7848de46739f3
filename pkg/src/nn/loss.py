"""Regression loss."""

import numpy as np

from src.errors import ShapeMismatchError
from src.nn.layers import Tensor


def mse_loss(pred: Tensor, target: Tensor) -> tuple[float, Tensor]:
    """Mean squared error over batch and components.

    Returns:
        Tuple of (loss, dloss/dpred) where the gradient is
        2 (pred - target) / pred.size.

    Raises:
        ShapeMismatchError: If the shapes differ.
    """
    if pred.shape != target.shape:
        raise ShapeMismatchError("mse_loss operands", target.shape, pred.shape)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size
