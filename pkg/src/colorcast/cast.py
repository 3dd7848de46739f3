"""Illuminant cast and gamma: distortion, correction and their exact inverse.

Distortion:  I' = (I * diag(r, g, b)) ** gamma
Correction:  I^ = (I * diag(1/r^, 1/g^, 1/b^)) ** (1 / gamma^)

Neither transform clamps; values above 1 are kept until an image is saved.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.errors import ParameterError
from src.imaging.image import LinearImage

# Sampling ranges for synthetic distortions
GAIN_RANGE = (0.7, 1.3)
GAMMA_RANGE = (0.85, 1.15)


def _check_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be finite and > 0, got {value}")


@dataclass(frozen=True)
class CorrectionParams:
    """Estimated illuminant gains and gamma used to correct an image.

    Attributes:
        r: Red illuminant gain (the corrected red is divided by it).
        g: Green illuminant gain.
        b: Blue illuminant gain.
        gamma: Gamma; corrected values are raised to 1/gamma.
    """

    r: float
    g: float
    b: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("r", "g", "b", "gamma"):
            _check_positive(name, getattr(self, name))

    @property
    def gains(self) -> NDArray[np.float64]:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.r, self.g, self.b, self.gamma], dtype=np.float64)

    @classmethod
    def from_array(
        cls, values: NDArray[np.float64] | list[float]
    ) -> "CorrectionParams":
        r, g, b, gamma = (float(v) for v in values)
        return cls(r, g, b, gamma)

    def without_gamma(self) -> "CorrectionParams":
        """Same gains with gamma fixed to 1 (white balance only)."""
        return CorrectionParams(self.r, self.g, self.b, 1.0)

    def to_dict(self) -> dict[str, float]:
        return {"r": self.r, "g": self.g, "b": self.b, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, data: dict) -> "CorrectionParams":
        return cls(data["r"], data["g"], data["b"], data["gamma"])


IDENTITY = CorrectionParams(1.0, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class DistortionParams:
    """A synthetic illuminant cast plus wrong gamma.

    The sampler keeps fields inside GAIN_RANGE / GAMMA_RANGE; direct
    construction accepts any positive values.
    """

    r: float
    g: float
    b: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("r", "g", "b", "gamma"):
            _check_positive(name, getattr(self, name))

    @property
    def gains(self) -> NDArray[np.float64]:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.r, self.g, self.b, self.gamma], dtype=np.float64)

    def to_dict(self) -> dict[str, float]:
        return {"r": self.r, "g": self.g, "b": self.b, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, data: dict) -> "DistortionParams":
        return cls(data["r"], data["g"], data["b"], data["gamma"])


def apply_correction(image: LinearImage, params: CorrectionParams) -> LinearImage:
    """Correct an image: out_c = (in_c / gain_c) ** (1 / gamma).

    Returns:
        The corrected, unclamped image.
    """
    return LinearImage(np.power(image.data / params.gains, 1.0 / params.gamma))


def apply_distortion(image: LinearImage, params: DistortionParams) -> LinearImage:
    """Distort an image: out_c = (in_c * gain_c) ** gamma, unclamped."""
    return LinearImage(np.power(image.data * params.gains, params.gamma))


def inverse_params(distortion: DistortionParams) -> CorrectionParams:
    """Correction parameters that exactly undo a distortion.

    The gains become r**gamma (not r), since scaling and the power do not
    commute: ((v * r) ** gamma / r ** gamma) ** (1 / gamma) == v.
    """
    gamma = distortion.gamma
    return CorrectionParams(
        distortion.r**gamma,
        distortion.g**gamma,
        distortion.b**gamma,
        gamma,
    )
