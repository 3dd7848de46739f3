"""Central-difference verification of analytic gradients."""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from src.errors import TrainingError
from src.nn.layers import Tensor
from src.nn.loss import mse_loss
from src.nn.network import Network

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-5
DEFAULT_TOLERANCE = 1e-4

# Denominator floor: entries where both gradients are ~0 compare absolutely
RELATIVE_ERROR_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    """Outcome of a gradient check.

    Attributes:
        max_relative_error: Largest relative error over all checked entries.
        tolerance: Pass threshold.
        checked: Number of parameter entries checked.
        per_param: Largest relative error per qualified parameter name.
    """

    max_relative_error: float
    tolerance: float
    checked: int
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def relative_error(analytic: float, numeric: float) -> float:
    scale = max(abs(analytic) + abs(numeric), RELATIVE_ERROR_FLOOR)
    return abs(analytic - numeric) / scale


def _loss(network: Network, x: Tensor, target: Tensor) -> float:
    loss, _ = mse_loss(network.forward(x), target)
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss during gradient check: {loss}")
    return loss


def grad_check(
    network: Network,
    x: Tensor,
    target: Tensor,
    epsilon: float = DEFAULT_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
    max_entries_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backprop gradients of the MSE loss with central differences.

    Args:
        network: Network under test. Parameters are restored afterwards.
        x: Input batch.
        target: Regression target batch.
        epsilon: Finite-difference step.
        tolerance: Largest accepted relative error.
        max_entries_per_param: Check at most this many randomly chosen entries
            of each parameter tensor (all entries when None).
        rng: Generator for entry sampling.

    Returns:
        The report; ``report.passed`` tells whether the check succeeded.

    Raises:
        TrainingError: If the loss is not finite.
    """
    rng = rng or np.random.default_rng(0)

    network.zero_grad()
    pred = network.forward(x)
    loss, grad = mse_loss(pred, target)
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite loss during gradient check: {loss}")
    network.backward(grad)
    analytic = {
        name: layer.grads[key].copy() for name, layer, key in network.parameters()
    }

    per_param: dict[str, float] = {}
    checked = 0
    for name, layer, key in network.parameters():
        param = layer.params[key]
        flat = param.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries_per_param is not None and flat.size > max_entries_per_param:
            picked = rng.choice(flat.size, max_entries_per_param, replace=False)
            indices = np.sort(picked)

        worst = 0.0
        for index in indices:
            original = flat[index]
            flat[index] = original + epsilon
            loss_plus = _loss(network, x, target)
            flat[index] = original - epsilon
            loss_minus = _loss(network, x, target)
            flat[index] = original

            numeric = (loss_plus - loss_minus) / (2 * epsilon)
            error = relative_error(float(analytic[name].reshape(-1)[index]), numeric)
            worst = max(worst, error)
            checked += 1
        per_param[name] = worst
        logger.debug(f"grad check {name}: max relative error {worst:.3e}")

    report = GradCheckReport(
        max_relative_error=max(per_param.values(), default=0.0),
        tolerance=tolerance,
        checked=checked,
        per_param=per_param,
    )
    logger.info(
        f"Gradient check over {checked} entries: max relative error "
        f"{report.max_relative_error:.3e} ({'pass' if report.passed else 'FAIL'})"
    )
    return report
