"""Parameter prediction and full-resolution correction."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from src.colorcast.cast import CorrectionParams, apply_correction
from src.errors import ShapeMismatchError
from src.imaging.image import LinearImage, SemanticMask, check_pair
from src.imaging.transforms import resize
from src.imaging.volume import InputVolume, NormalizationStats, assemble_input
from src.models import NetworkSpec
from src.nn.layers import Tensor
from src.nn.network import Network

logger = logging.getLogger(__name__)

DEFAULT_PREDICT_BATCH = 64


@dataclass
class TrainedModel:
    """A network plus what is needed to feed it new images.

    Attributes:
        network: Trained network.
        spec: Its architecture.
        normalization: Training RGB statistics.
        class_count: Mask class count K of the training data.
        history: Per-epoch training loss.
    """

    network: Network
    spec: NetworkSpec
    normalization: NormalizationStats
    class_count: int
    history: list[float] = field(default_factory=list)

    @property
    def has_mask_channel(self) -> bool:
        return self.network.input_shape[0] == 4


def network_input(
    network: Network,
    image: LinearImage,
    mask: SemanticMask,
    norm: NormalizationStats,
    class_count: int,
) -> InputVolume:
    """Resize an image/mask pair to the network input size and assemble it."""
    check_pair(image, mask)
    _, height, width = network.input_shape
    return assemble_input(
        resize(image, width, height), resize(mask, width, height), norm, class_count
    )


def stack_volumes(network: Network, volumes: Sequence[InputVolume]) -> Tensor:
    """(batch, channels, h, w) batch for the network's channel count."""
    channels = network.input_shape[0]
    return np.stack([v.to_chw(channels) for v in volumes])


def predict_batch(
    network: Network, volumes: Sequence[InputVolume]
) -> list[CorrectionParams]:
    if not volumes:
        return []
    outputs = network.forward(stack_volumes(network, volumes))
    return [CorrectionParams.from_array(row) for row in outputs]


def predict(network: Network, volume: InputVolume) -> CorrectionParams:
    """Predict (r, g, b, gamma) for one input volume.

    The network's last layer is the softplus positivity guard, so every output
    is a valid correction.

    Raises:
        ShapeMismatchError: If the volume does not match the network input size.
    """
    expected = network.input_shape[1:]
    if (volume.height, volume.width) != expected:
        raise ShapeMismatchError(
            "input volume", expected, (volume.height, volume.width)
        )
    return predict_batch(network, [volume])[0]


def predict_image(
    network: Network,
    image: LinearImage,
    mask: SemanticMask,
    norm: NormalizationStats,
    class_count: int,
    use_gamma: bool = True,
) -> CorrectionParams:
    params = predict(network, network_input(network, image, mask, norm, class_count))
    return params if use_gamma else params.without_gamma()


def correct_image(
    network: Network,
    image: LinearImage,
    mask: SemanticMask,
    norm: NormalizationStats,
    class_count: int,
    use_gamma: bool = True,
) -> LinearImage:
    """Predict on a downscaled copy and correct the full-resolution image.

    Args:
        network: Trained network.
        image: Image to correct.
        mask: Its semantic mask (same size).
        norm: Training normalization statistics.
        class_count: Declared class count K of the mask.
        use_gamma: Apply the predicted gamma; when False gamma is forced to 1.

    Returns:
        The corrected image, unclamped.
    """
    params = predict_image(network, image, mask, norm, class_count, use_gamma)
    logger.debug(f"Predicted correction {params.to_dict()}")
    return apply_correction(image, params)


def predict_samples(
    model: TrainedModel,
    images: Sequence[LinearImage],
    masks: Sequence[SemanticMask],
    use_gamma: bool = True,
    batch_size: int = DEFAULT_PREDICT_BATCH,
) -> list[CorrectionParams]:
    """Predict corrections for image/mask pairs in batches.

    Layers cache activations, so prediction runs on the calling thread.
    """
    params: list[CorrectionParams] = []
    for start in range(0, len(images), batch_size):
        volumes = [
            network_input(
                model.network, image, mask, model.normalization, model.class_count
            )
            for image, mask in zip(
                images[start : start + batch_size],
                masks[start : start + batch_size],
                strict=True,
            )
        ]
        params.extend(predict_batch(model.network, volumes))
    if not use_gamma:
        params = [p.without_gamma() for p in params]
    return params
