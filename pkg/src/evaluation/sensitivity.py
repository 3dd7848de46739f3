"""How much a trained semantic network depends on its mask input."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from src.augment.synthesis import Sample
from src.colorcast.cast import CorrectionParams, apply_correction
from src.colorcast.metrics import RmseNormalization, rmse
from src.errors import ShapeMismatchError
from src.evaluation.report import mean_of
from src.imaging.image import LinearImage, SemanticMask, check_pair
from src.imaging.volume import INPUT_CHANNELS
from src.training.predictor import TrainedModel, predict_samples

logger = logging.getLogger(__name__)


@dataclass
class MaskSensitivityResult:
    """Predictions for one image under two masks.

    Attributes:
        params_a: Prediction with the first mask.
        params_b: Prediction with the second mask.
        corrected_a: Image corrected with params_a.
        corrected_b: Image corrected with params_b.
        parameter_delta: L2 distance between the two parameter vectors.
        correction_rmse: RMSE between the two corrected images.
    """

    params_a: CorrectionParams
    params_b: CorrectionParams
    corrected_a: LinearImage
    corrected_b: LinearImage
    parameter_delta: float
    correction_rmse: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "params_a": self.params_a.to_dict(),
            "params_b": self.params_b.to_dict(),
            "parameter_delta": self.parameter_delta,
            "correction_rmse": self.correction_rmse,
        }


@dataclass
class MaskSwapResult:
    """Scores over a sample set with correct and label-shuffled masks.

    Attributes:
        rmse_correct: Per-sample RMSE with the correct masks.
        rmse_shuffled: Per-sample RMSE with shuffled masks.
        parameter_delta: Per-sample L2 distance between the two predictions.
        sample_ids: Sample ids in the same order.
    """

    rmse_correct: list[float] = field(default_factory=list)
    rmse_shuffled: list[float] = field(default_factory=list)
    parameter_delta: list[float] = field(default_factory=list)
    sample_ids: list[str] = field(default_factory=list)

    @property
    def mean_rmse_correct(self) -> float:
        return mean_of(self.rmse_correct)

    @property
    def mean_rmse_shuffled(self) -> float:
        return mean_of(self.rmse_shuffled)

    @property
    def mean_parameter_delta(self) -> float:
        return mean_of(self.parameter_delta)

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_rmse_correct": self.mean_rmse_correct,
            "mean_rmse_shuffled": self.mean_rmse_shuffled,
            "mean_parameter_delta": self.mean_parameter_delta,
            "count": len(self.sample_ids),
        }


def _require_mask_channel(model: TrainedModel) -> None:
    if not model.has_mask_channel:
        raise ShapeMismatchError(
            "model has no mask channel; input planes",
            (INPUT_CHANNELS,),
            (model.spec.input_channels,),
        )


def parameter_delta(a: CorrectionParams, b: CorrectionParams) -> float:
    return float(np.linalg.norm(a.as_array() - b.as_array()))


def run_mask_sensitivity(
    model: TrainedModel,
    image: LinearImage,
    mask_a: SemanticMask,
    mask_b: SemanticMask,
    use_gamma: bool = True,
) -> MaskSensitivityResult:
    """Correct one image under two masks and compare the outcomes.

    Raises:
        ShapeMismatchError: If the model has no mask channel or a mask does
            not match the image.
    """
    _require_mask_channel(model)
    check_pair(image, mask_a)
    check_pair(image, mask_b)
    params_a, params_b = predict_samples(
        model, [image, image], [mask_a, mask_b], use_gamma=use_gamma
    )
    corrected_a = apply_correction(image, params_a)
    corrected_b = apply_correction(image, params_b)
    result = MaskSensitivityResult(
        params_a=params_a,
        params_b=params_b,
        corrected_a=corrected_a,
        corrected_b=corrected_b,
        parameter_delta=parameter_delta(params_a, params_b),
        correction_rmse=rmse(corrected_a, corrected_b),
    )
    logger.info(
        f"Mask sensitivity: parameter delta {result.parameter_delta:.6f}, "
        f"correction RMSE {result.correction_rmse:.4f}"
    )
    return result


def label_derangement(class_count: int, rng: np.random.Generator) -> np.ndarray:
    """A permutation of 0..K-1 with no fixed point (identity when K = 1)."""
    if class_count < 2:
        return np.arange(class_count)
    while True:
        permutation = rng.permutation(class_count)
        if not np.any(permutation == np.arange(class_count)):
            return permutation


def shuffle_labels(mask: SemanticMask, rng: np.random.Generator) -> SemanticMask:
    """Relabel every class through a derangement; region shapes stay put."""
    permutation = label_derangement(mask.class_count, rng)
    return SemanticMask(permutation[mask.labels], mask.class_count)


def evaluate_mask_swap(
    model: TrainedModel,
    samples: Sequence[Sample],
    seed: int = 0,
    per: RmseNormalization | str = RmseNormalization.VALUE,
) -> MaskSwapResult:
    """Score a semantic network with correct vs. label-shuffled masks.

    Sample i uses a derangement drawn from a generator seeded with (seed, i).

    Raises:
        ShapeMismatchError: If the model has no mask channel.
    """
    _require_mask_channel(model)
    per = RmseNormalization(per)
    images = [s.image for s in samples]
    shuffled = [
        shuffle_labels(s.mask, np.random.default_rng([seed, i]))
        for i, s in enumerate(samples)
    ]
    correct_params = predict_samples(model, images, [s.mask for s in samples])
    shuffled_params = predict_samples(model, images, shuffled)

    result = MaskSwapResult()
    for sample, good, bad in zip(samples, correct_params, shuffled_params, strict=True):
        result.sample_ids.append(sample.record.sample_id)
        result.rmse_correct.append(
            rmse(apply_correction(sample.image, good), sample.truth_image, per)
        )
        result.rmse_shuffled.append(
            rmse(apply_correction(sample.image, bad), sample.truth_image, per)
        )
        result.parameter_delta.append(parameter_delta(good, bad))
    logger.info(
        f"Mask swap over {len(samples)} samples: RMSE {result.mean_rmse_correct:.4f} "
        f"-> {result.mean_rmse_shuffled:.4f}"
    )
    return result
