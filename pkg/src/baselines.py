"""Statistics-based illuminant estimators used as comparison points.

Each estimator returns CorrectionParams with gamma fixed at 1.
"""

import logging
from collections.abc import Callable
from enum import Enum

import numpy as np

from src.colorcast.cast import IDENTITY, CorrectionParams
from src.errors import DegenerateImageError, ParameterError
from src.imaging.image import LinearImage

logger = logging.getLogger(__name__)


class BaselineMethod(str, Enum):
    """Available baseline correctors."""

    NO_OP = "no_op"
    GREY_WORLD = "grey_world"
    WHITE_PATCH = "white_patch"


def grey_world(image: LinearImage) -> CorrectionParams:
    """Grey-world estimate: channel means, normalized to unit geometric mean.

    Dividing each channel by its gain makes all channel means equal.

    Raises:
        DegenerateImageError: If a channel mean is zero.
    """
    means = image.data.reshape(-1, 3).mean(axis=0)
    if np.any(means <= 0):
        raise DegenerateImageError(f"degenerate channel: channel means {means}")
    gains = means / np.exp(np.log(means).mean())
    logger.debug(f"Grey-world gains {gains} from channel means {means}")
    return CorrectionParams(float(gains[0]), float(gains[1]), float(gains[2]), 1.0)


def white_patch(image: LinearImage) -> CorrectionParams:
    """White-patch (max-RGB) estimate: channel maxima, largest gain is 1.

    Raises:
        DegenerateImageError: If a channel maximum is zero.
    """
    maxima = image.data.reshape(-1, 3).max(axis=0)
    if np.any(maxima <= 0):
        raise DegenerateImageError(f"degenerate channel: channel maxima {maxima}")
    gains = maxima / maxima.max()
    logger.debug(f"White-patch gains {gains} from channel maxima {maxima}")
    return CorrectionParams(float(gains[0]), float(gains[1]), float(gains[2]), 1.0)


def no_op(image: LinearImage) -> CorrectionParams:
    """Leave the image unchanged."""
    return IDENTITY


BASELINES: dict[BaselineMethod, Callable[[LinearImage], CorrectionParams]] = {
    BaselineMethod.NO_OP: no_op,
    BaselineMethod.GREY_WORLD: grey_world,
    BaselineMethod.WHITE_PATCH: white_patch,
}


def get_baseline(
    method: BaselineMethod | str,
) -> Callable[[LinearImage], CorrectionParams]:
    """Look up a baseline estimator by name.

    Raises:
        ParameterError: If the method is unknown.
    """
    try:
        return BASELINES[BaselineMethod(method)]
    except ValueError as e:
        raise ParameterError(
            f"Unknown baseline: {method}. "
            f"Must be one of: {[m.value for m in BaselineMethod]}"
        ) from e
