"""Assembly of the 4-plane network input (normalized RGB + encoded mask)."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from src.errors import LabelRangeError, ParameterError, ShapeMismatchError
from src.imaging.image import LinearImage, SemanticMask, check_pair
from src.imaging.transforms import resize

logger = logging.getLogger(__name__)

INPUT_CHANNELS = 4
MASK_PLANE = 3

# Floor for per-channel std so that flat training sets do not divide by zero
MIN_STD = 1e-8


class NormalizationMode(str, Enum):
    """How RGB normalization statistics are pooled."""

    CHANNEL = "channel"  # one mean/std per channel over all training pixels
    PIXEL = "pixel"  # mean image at network input size, per-channel std


@dataclass(frozen=True, eq=False)
class NormalizationStats:
    """RGB normalization statistics computed on the training split.

    Attributes:
        mode: Pooling mode.
        mean: Shape (3,) for CHANNEL mode, (size, size, 3) for PIXEL mode.
        std: Shape (3,).
    """

    mode: NormalizationMode
    mean: NDArray[np.float64]
    std: NDArray[np.float64]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "mean": np.asarray(self.mean).tolist(),
            "std": np.asarray(self.std).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        return cls(
            mode=NormalizationMode(data["mode"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            std=np.asarray(data["std"], dtype=np.float64),
        )

    @classmethod
    def identity(cls) -> "NormalizationStats":
        """Zero mean, unit std: leaves RGB planes untouched."""
        return cls(NormalizationMode.CHANNEL, np.zeros(3), np.ones(3))


@dataclass(frozen=True, eq=False)
class InputVolume:
    """Network input of shape (height, width, 4).

    Planes 0-2 are normalized R, G, B; plane 3 is the encoded mask in [0, 1].
    """

    data: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != INPUT_CHANNELS:
            raise ShapeMismatchError(
                "InputVolume data", (-1, -1, INPUT_CHANNELS), self.data.shape
            )
        mask_plane = self.data[:, :, MASK_PLANE]
        if mask_plane.min() < 0.0 or mask_plane.max() > 1.0:
            raise LabelRangeError("mask plane values must lie in [0, 1]")

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def to_chw(self, channels: int = INPUT_CHANNELS) -> NDArray[np.float64]:
        """Planes-first layout, keeping the first ``channels`` planes.

        ``channels=3`` drops the mask plane for the RGB-only network.
        """
        return np.ascontiguousarray(self.data[:, :, :channels].transpose(2, 0, 1))


def encode_mask_channel(mask: SemanticMask, class_count: int) -> NDArray[np.float64]:
    """Encode labels as label / max(K - 1, 1), a plane in [0, 1]."""
    if class_count < 1:
        raise LabelRangeError(f"class_count must be >= 1, got {class_count}")
    return mask.labels.astype(np.float64) / max(class_count - 1, 1)


def compute_normalization(
    images: Sequence[LinearImage],
    mode: NormalizationMode | str = NormalizationMode.CHANNEL,
    size: int | None = None,
) -> NormalizationStats:
    """Compute RGB normalization statistics over a set of training images.

    Args:
        images: Training images.
        mode: CHANNEL or PIXEL pooling.
        size: Network input side; required for PIXEL mode (images are resized
            to size x size before averaging).

    Returns:
        The statistics.

    Raises:
        ParameterError: If no images are given or PIXEL mode lacks a size.
    """
    mode = NormalizationMode(mode)
    if not images:
        raise ParameterError("cannot compute normalization from an empty image set")

    if mode is NormalizationMode.PIXEL:
        if size is None:
            raise ParameterError("PIXEL normalization requires the network input size")
        stack = np.stack([resize(img, size, size).data for img in images])
        mean = stack.mean(axis=0)
        std = np.maximum((stack - mean).reshape(-1, 3).std(axis=0), MIN_STD)
        return NormalizationStats(mode, mean, std)

    pixels = np.concatenate([img.data.reshape(-1, 3) for img in images])
    mean = pixels.mean(axis=0)
    std = np.maximum(np.sqrt(np.var(pixels, axis=0)), MIN_STD)
    logger.debug(f"Channel normalization: mean={mean}, std={std}")
    return NormalizationStats(mode, mean, std)


def assemble_input(
    image: LinearImage,
    mask: SemanticMask,
    norm: NormalizationStats,
    class_count: int,
) -> InputVolume:
    """Stack normalized RGB planes with the encoded mask plane.

    Only the RGB planes are normalized; the mask plane is passed through
    ``encode_mask_channel`` unchanged.

    Raises:
        ShapeMismatchError: If image and mask sizes differ, or a PIXEL-mode mean
            image does not match the image size.
    """
    check_pair(image, mask)
    mean = np.asarray(norm.mean)
    if norm.mode is NormalizationMode.PIXEL and mean.shape != image.data.shape:
        raise ShapeMismatchError(
            "normalization mean image", mean.shape, image.data.shape
        )
    rgb = (image.data - mean) / norm.std
    plane = encode_mask_channel(mask, class_count)
    return InputVolume(np.concatenate([rgb, plane[:, :, None]], axis=2))


def invert_normalization(
    volume: InputVolume, norm: NormalizationStats
) -> NDArray[np.float64]:
    """Recover the (height, width, 3) RGB values from a volume."""
    return volume.data[:, :, :MASK_PLANE] * norm.std + np.asarray(norm.mean)
