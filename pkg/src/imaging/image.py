"""Image and mask containers.

Images are ``(H, W, 3)`` float64 arrays in sRGB numeric space (no
linearization). Masks are ``(H, W)`` integer arrays of class indices.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.errors import LabelRangeError, ParameterError, ShapeMismatchError

# Largest class count representable in an 8-bit mask file
MAX_CLASS_COUNT = 256


@dataclass(frozen=True, eq=False)
class LinearImage:
    """An RGB image with non-negative floating channel values.

    Values are nominally in [0, 1] but may exceed 1 after distortion; they are
    only clamped when written to disk.

    Attributes:
        data: Array of shape (height, width, 3), dtype float64.
    """

    data: NDArray[np.float64]

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ShapeMismatchError("LinearImage data", (-1, -1, 3), data.shape)
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeMismatchError("LinearImage data", (1, 1, 3), data.shape)
        if not np.all(np.isfinite(data)):
            raise ParameterError("LinearImage values must be finite")
        if np.any(data < 0):
            raise ParameterError("LinearImage values must be non-negative")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        return self.width, self.height


@dataclass(frozen=True, eq=False)
class SemanticMask:
    """A per-pixel class label map.

    Attributes:
        labels: Array of shape (height, width), integer class indices.
        class_count: Declared number of classes K; every label is < K.
    """

    labels: NDArray[np.int64]
    class_count: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise ShapeMismatchError("SemanticMask labels", (-1, -1), labels.shape)
        if not np.issubdtype(labels.dtype, np.integer):
            raise LabelRangeError(
                f"SemanticMask labels must be integers, got {labels.dtype}"
            )
        if not 1 <= self.class_count <= MAX_CLASS_COUNT:
            raise LabelRangeError(
                f"class_count must be in [1, {MAX_CLASS_COUNT}], got {self.class_count}"
            )
        labels = labels.astype(np.int64, copy=True)
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise LabelRangeError(
                f"label out of range: labels span [{labels.min()}, {labels.max()}]"
                f" with class_count {self.class_count}"
            )
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        return self.width, self.height

    def label_set(self) -> set[int]:
        return {int(v) for v in np.unique(self.labels)}


def check_pair(image: LinearImage, mask: SemanticMask) -> None:
    """Raise if an image and its mask are not the same size.

    Raises:
        ShapeMismatchError: If the dimensions differ.
    """
    if image.size != mask.size:
        raise ShapeMismatchError(
            "mask vs. image", (image.height, image.width), (mask.height, mask.width)
        )
