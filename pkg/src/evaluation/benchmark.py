"""Synthetic benchmark in which the semantic mask predicts the illuminant.

Every source image is a background region of one class covering most of the
frame plus a few rectangles of other classes. Region colors are drawn
independently of the class, while the illuminant applied during synthesis is a
fixed function of the dominant class (plus a little jitter). The mask is
therefore informative about the cast and the image content alone is not.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from src.augment.synthesis import AugmentSpec, Source, Split
from src.errors import ConfigError
from src.imaging.image import LinearImage, SemanticMask
from src.imaging.image_io import quantize

logger = logging.getLogger(__name__)

DEFAULT_CLASS_COUNT = 4
DEFAULT_IMAGE_SIZE = 32
DEFAULT_ILLUMINANT_JITTER = 0.03

# Region colors and per-pixel texture, in linear [0, 1] units
COLOR_RANGE = (0.15, 0.85)
TEXTURE_AMPLITUDE = 0.03

# Illuminant extremes for the first and last class (r, g, b)
WARM_ILLUMINANT = (1.25, 1.0, 0.75)
COOL_ILLUMINANT = (0.75, 1.0, 1.25)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Size and layout of the generated corpus.

    Attributes:
        train_images: Sources in the training split.
        test_images: Sources in the test split.
        size: Square image side in pixels.
        class_count: Number of classes K.
        min_regions: Fewest regions per image (background included).
        max_regions: Most regions per image (background included).
        dominant_fraction: Smallest area share of the background class.
        illuminant_jitter: Relative jitter added to each class illuminant.
        seed: Generator seed.
    """

    train_images: int = 200
    test_images: int = 50
    size: int = DEFAULT_IMAGE_SIZE
    class_count: int = DEFAULT_CLASS_COUNT
    min_regions: int = 2
    max_regions: int = 4
    dominant_fraction: float = 0.6
    illuminant_jitter: float = DEFAULT_ILLUMINANT_JITTER
    seed: int = 0

    def __post_init__(self) -> None:
        if self.train_images < 1 or self.test_images < 1:
            raise ConfigError("benchmark needs at least one train and one test image")
        if self.size < 4:
            raise ConfigError(f"benchmark size must be >= 4, got {self.size}")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if not 1 <= self.min_regions <= self.max_regions:
            raise ConfigError(
                f"need 1 <= min_regions <= max_regions, got "
                f"{self.min_regions}, {self.max_regions}"
            )
        if not 0.5 <= self.dominant_fraction < 1:
            raise ConfigError(
                f"dominant_fraction must be in [0.5, 1), got {self.dominant_fraction}"
            )

    def to_dict(self) -> dict:
        return {
            "train_images": self.train_images,
            "test_images": self.test_images,
            "size": self.size,
            "class_count": self.class_count,
            "min_regions": self.min_regions,
            "max_regions": self.max_regions,
            "dominant_fraction": self.dominant_fraction,
            "illuminant_jitter": self.illuminant_jitter,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkSpec":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid benchmark block: {e}") from e


@dataclass
class Benchmark:
    sources: list[Source]
    split: dict[str, Split]


def class_illuminants(class_count: int) -> dict[int, tuple[float, float, float]]:
    """Illuminant per class, moving from warm to cool as the label grows."""
    warm = np.asarray(WARM_ILLUMINANT)
    cool = np.asarray(COOL_ILLUMINANT)
    table: dict[int, tuple[float, float, float]] = {}
    for label in range(class_count):
        t = label / max(class_count - 1, 1)
        gains = (1 - t) * warm + t * cool
        table[label] = (float(gains[0]), float(gains[1]), float(gains[2]))
    return table


def benchmark_augment_spec(spec: BenchmarkSpec, augment: AugmentSpec) -> AugmentSpec:
    """The augmentation spec with class-driven illuminants switched on."""
    return replace(
        augment,
        class_illuminants=class_illuminants(spec.class_count),
        illuminant_jitter=spec.illuminant_jitter,
    )


def _draw_labels(rng: np.random.Generator, spec: BenchmarkSpec) -> np.ndarray:
    size = spec.size
    dominant = int(rng.integers(spec.class_count))
    labels = np.full((size, size), dominant, dtype=np.int64)

    extra = int(rng.integers(spec.min_regions, spec.max_regions + 1)) - 1
    if extra == 0:
        return labels
    others = [c for c in range(spec.class_count) if c != dominant]
    # Each rectangle stays under its share of the non-dominant area
    max_side = max(1, int(size * np.sqrt((1 - spec.dominant_fraction) / extra)))
    for _ in range(extra):
        label = others[int(rng.integers(len(others)))]
        w = int(rng.integers(1, max_side + 1))
        h = int(rng.integers(1, max_side + 1))
        x = int(rng.integers(0, size - w + 1))
        y = int(rng.integers(0, size - h + 1))
        labels[y : y + h, x : x + w] = label
    return labels


def _paint(
    rng: np.random.Generator, labels: np.ndarray, class_count: int
) -> np.ndarray:
    colors = rng.uniform(*COLOR_RANGE, size=(class_count, 3))
    texture = rng.uniform(
        -TEXTURE_AMPLITUDE, TEXTURE_AMPLITUDE, size=(*labels.shape, 3)
    )
    # Snap to the 8-bit grid so written sources reload exactly
    return quantize(colors[labels] + texture).astype(np.float64) / 255.0


def generate_source(spec: BenchmarkSpec, source_id: str, index: int) -> Source:
    rng = np.random.default_rng([spec.seed, index])
    labels = _draw_labels(rng, spec)
    return Source(
        source_id=source_id,
        image=LinearImage(_paint(rng, labels, spec.class_count)),
        mask=SemanticMask(labels, spec.class_count),
    )


def generate_benchmark(spec: BenchmarkSpec) -> Benchmark:
    """Generate sources and their (explicit) train/test split.

    The same spec always yields the same corpus.
    """
    sources: list[Source] = []
    split: dict[str, Split] = {}
    counts = ((Split.TRAIN, spec.train_images), (Split.TEST, spec.test_images))
    index = 0
    for part, count in counts:
        for i in range(count):
            source_id = f"{part.value}_{i:04d}"
            sources.append(generate_source(spec, source_id, index))
            split[source_id] = part
            index += 1
    logger.info(
        f"Generated benchmark with {spec.train_images} train and "
        f"{spec.test_images} test sources ({spec.size}x{spec.size}, "
        f"K={spec.class_count})"
    )
    return Benchmark(sources=sources, split=split)
