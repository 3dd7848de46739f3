"""Image error metrics."""

import math
from enum import Enum

import numpy as np

from src.errors import ShapeMismatchError
from src.imaging.image import LinearImage

# RMSE is reported on the 8-bit scale
RMSE_SCALE = 255.0


class RmseNormalization(str, Enum):
    """What N counts in the RMSE denominator."""

    VALUE = "value"  # N x 3 channel values
    PIXEL = "pixel"  # N pixels; equals VALUE * sqrt(3)


def rmse(
    a: LinearImage,
    b: LinearImage,
    per: RmseNormalization | str = RmseNormalization.VALUE,
) -> float:
    """Root mean square error between two images on the 0-255 scale.

    Both images are clamped to [0, 1] and scaled by 255, the same convention
    used when saving. Squared differences are summed with ``math.fsum`` so the
    result does not depend on summation order.

    Args:
        a: First image.
        b: Second image, same size.
        per: Divide by all channel values (default) or by pixel count.

    Raises:
        ShapeMismatchError: If the images differ in size.
    """
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError("rmse operands", a.data.shape, b.data.shape)
    per = RmseNormalization(per)

    diff = (np.clip(a.data, 0.0, 1.0) - np.clip(b.data, 0.0, 1.0)) * RMSE_SCALE
    total = math.fsum((diff * diff).ravel().tolist())
    count = diff.size if per is RmseNormalization.VALUE else diff.size // 3
    return math.sqrt(total / count)
