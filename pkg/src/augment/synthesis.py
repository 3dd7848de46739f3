"""Deterministic synthesis of distorted training and testing samples.

Each source image gets its own random stream, seeded from (spec.seed,
source_id), and each sample k of that source draws from a child stream keyed by
k. Sample content therefore depends only on the AugmentSpec, the source and k, never
on the order in which sources are processed.
"""

import hashlib
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from tqdm import tqdm

from src.colorcast.cast import (
    GAIN_RANGE,
    GAMMA_RANGE,
    CorrectionParams,
    DistortionParams,
    apply_distortion,
    inverse_params,
)
from src.errors import ParameterError
from src.imaging.image import LinearImage, SemanticMask, check_pair
from src.imaging.image_io import as_stored
from src.imaging.transforms import crop, flip_horizontal
from src.imaging.volume import (
    NormalizationMode,
    NormalizationStats,
    compute_normalization,
)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_IMAGE = 16
FULL_SCALE_SAMPLES_PER_IMAGE = 769
FLIP_PROBABILITY = 0.5


class SpatialOpKind(str, Enum):
    """Spatial augmentations applied identically to image and mask."""

    FLIP_H = "flip_h"
    RANDOM_CROP = "random_crop"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(frozen=True)
class SpatialOp:
    """One applied spatial operation with its drawn parameters.

    Attributes:
        kind: Operation kind.
        x, y, w, h: Crop rectangle (unused for flips).
    """

    kind: SpatialOpKind
    x: int = 0
    y: int = 0
    w: int = 0
    h: int = 0

    def to_dict(self) -> dict:
        if self.kind is SpatialOpKind.FLIP_H:
            return {"kind": self.kind.value}
        return {
            "kind": self.kind.value,
            "x": self.x,
            "y": self.y,
            "w": self.w,
            "h": self.h,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpatialOp":
        kind = SpatialOpKind(data["kind"])
        if kind is SpatialOpKind.FLIP_H:
            return cls(kind)
        return cls(kind, int(data["x"]), int(data["y"]), int(data["w"]), int(data["h"]))


@dataclass(frozen=True)
class AugmentSpec:
    """Everything that determines a synthesized dataset (besides the sources).

    Attributes:
        samples_per_image: Distorted samples per source image.
        gain_range: Inclusive [low, high] for r, g, b.
        gamma_range: Inclusive [low, high] for gamma.
        spatial_ops: Which spatial augmentations may be drawn.
        crop_fraction: Area fraction kept by a random crop, in (0, 1].
        seed: Master seed.
        test_fraction: Fraction of sources assigned to the test split when no
            explicit split is given.
        gamma_one_fraction: Fraction of each test source's samples whose gamma
            is pinned to 1 (the gamma=1 evaluation subset).
        class_illuminants: Optional map from dominant class label to (r, g, b)
            gains. When set, the drawn gains are replaced by the dominant
            class's gains with multiplicative jitter.
        illuminant_jitter: Relative jitter for class illuminants.
        normalization_mode: RGB normalization pooling.
        normalization_size: Network input side used by PIXEL normalization.
    """

    samples_per_image: int = DEFAULT_SAMPLES_PER_IMAGE
    gain_range: tuple[float, float] = GAIN_RANGE
    gamma_range: tuple[float, float] = GAMMA_RANGE
    spatial_ops: tuple[SpatialOpKind, ...] = (
        SpatialOpKind.FLIP_H,
        SpatialOpKind.RANDOM_CROP,
    )
    crop_fraction: float = 0.8
    seed: int = 0
    test_fraction: float = 0.2
    gamma_one_fraction: float = 0.0
    class_illuminants: dict[int, tuple[float, float, float]] | None = None
    illuminant_jitter: float = 0.0
    normalization_mode: NormalizationMode = NormalizationMode.CHANNEL
    normalization_size: int | None = None

    def __post_init__(self) -> None:
        if self.samples_per_image < 1:
            raise ParameterError(
                f"samples_per_image must be >= 1, got {self.samples_per_image}"
            )
        for name in ("gain_range", "gamma_range"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ParameterError(
                    f"{name} must satisfy 0 < low <= high, got {(low, high)}"
                )
        if not 0 < self.crop_fraction <= 1:
            raise ParameterError(
                f"crop_fraction must be in (0, 1], got {self.crop_fraction}"
            )
        if not 0 <= self.test_fraction <= 1:
            raise ParameterError(
                f"test_fraction must be in [0, 1], got {self.test_fraction}"
            )
        if not 0 <= self.gamma_one_fraction <= 1:
            raise ParameterError(
                f"gamma_one_fraction must be in [0, 1], got {self.gamma_one_fraction}"
            )
        if self.illuminant_jitter < 0:
            raise ParameterError(
                f"illuminant_jitter must be >= 0, got {self.illuminant_jitter}"
            )
        object.__setattr__(
            self, "spatial_ops", tuple(SpatialOpKind(op) for op in self.spatial_ops)
        )
        object.__setattr__(
            self, "normalization_mode", NormalizationMode(self.normalization_mode)
        )

    def to_dict(self) -> dict:
        return {
            "samples_per_image": self.samples_per_image,
            "gain_range": list(self.gain_range),
            "gamma_range": list(self.gamma_range),
            "spatial_ops": [op.value for op in self.spatial_ops],
            "crop_fraction": self.crop_fraction,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "gamma_one_fraction": self.gamma_one_fraction,
            "class_illuminants": (
                {str(k): list(v) for k, v in sorted(self.class_illuminants.items())}
                if self.class_illuminants is not None
                else None
            ),
            "illuminant_jitter": self.illuminant_jitter,
            "normalization_mode": self.normalization_mode.value,
            "normalization_size": self.normalization_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentSpec":
        illuminants = data.get("class_illuminants")
        gain_range = tuple(data.get("gain_range", GAIN_RANGE))
        gamma_range = tuple(data.get("gamma_range", GAMMA_RANGE))
        mode = data.get("normalization_mode", NormalizationMode.CHANNEL.value)
        return cls(
            samples_per_image=int(
                data.get("samples_per_image", DEFAULT_SAMPLES_PER_IMAGE)
            ),
            gain_range=gain_range,  # type: ignore[arg-type]
            gamma_range=gamma_range,  # type: ignore[arg-type]
            spatial_ops=tuple(
                SpatialOpKind(op)
                for op in data.get("spatial_ops", ["flip_h", "random_crop"])
            ),
            crop_fraction=float(data.get("crop_fraction", 0.8)),
            seed=int(data.get("seed", 0)),
            test_fraction=float(data.get("test_fraction", 0.2)),
            gamma_one_fraction=float(data.get("gamma_one_fraction", 0.0)),
            class_illuminants=(
                {int(k): tuple(v) for k, v in illuminants.items()}  # type: ignore[misc]
                if illuminants is not None
                else None
            ),
            illuminant_jitter=float(data.get("illuminant_jitter", 0.0)),
            normalization_mode=NormalizationMode(mode),
            normalization_size=data.get("normalization_size"),
        )


@dataclass(frozen=True)
class Source:
    """A correctly white-balanced source image with its mask."""

    source_id: str
    image: LinearImage
    mask: SemanticMask


@dataclass(frozen=True)
class SampleRecord:
    """Manifest entry for one synthesized sample.

    Attributes:
        source_id: Id of the source image.
        rng_cursor: Index k of the sample within its source's stream.
        split: Split of the source.
        distortion: Applied distortion.
        truth: Correction that exactly undoes the distortion.
        spatial: Applied spatial ops, in order.
    """

    source_id: str
    rng_cursor: int
    split: Split
    distortion: DistortionParams
    truth: CorrectionParams
    spatial: tuple[SpatialOp, ...] = ()

    @property
    def sample_id(self) -> str:
        return f"{self.source_id}_{self.rng_cursor}"

    @property
    def gamma_one(self) -> bool:
        return self.distortion.gamma == 1.0


@dataclass(frozen=True)
class Sample:
    """A materialized sample.

    Attributes:
        record: Its manifest record.
        image: The distorted image.
        mask: The spatially transformed mask (no color distortion).
        truth_image: The spatially transformed source (correction target).
    """

    record: SampleRecord
    image: LinearImage
    mask: SemanticMask
    truth_image: LinearImage


@dataclass
class DatasetManifest:
    """Record of every synthesized sample.

    Attributes:
        spec: The augmentation spec.
        class_count: Declared class count K of all masks.
        records: One record per sample.
        split: Split assignment per source id.
        normalization: RGB statistics over the training samples.
        sources: Optional source file locations (relative to the manifest).
    """

    spec: AugmentSpec
    class_count: int
    records: list[SampleRecord] = field(default_factory=list)
    split: dict[str, Split] = field(default_factory=dict)
    normalization: NormalizationStats = field(
        default_factory=NormalizationStats.identity
    )
    sources: dict[str, dict[str, str]] = field(default_factory=dict)

    def records_for(self, split: Split | str) -> list[SampleRecord]:
        split = Split(split)
        return [r for r in self.records if r.split is split]


@dataclass
class SynthesisResult:
    manifest: DatasetManifest
    samples: list[Sample]


def _stable_seed(*parts: object) -> int:
    """64-bit seed derived from a SHA-256 of the parts (platform independent)."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def sample_rng(seed: int, source_id: str, cursor: int) -> np.random.Generator:
    """The generator for sample ``cursor`` of ``source_id``."""
    return np.random.default_rng([_stable_seed(seed, source_id), cursor])


def sample_distortion(
    rng: np.random.Generator,
    gain_range: tuple[float, float] = GAIN_RANGE,
    gamma_range: tuple[float, float] = GAMMA_RANGE,
) -> DistortionParams:
    """Draw r, g, b, gamma uniformly, in that order."""
    r = float(rng.uniform(*gain_range))
    g = float(rng.uniform(*gain_range))
    b = float(rng.uniform(*gain_range))
    gamma = float(rng.uniform(*gamma_range))
    return DistortionParams(r, g, b, gamma)


def dominant_class(mask: SemanticMask) -> int:
    """Most frequent label (lowest label wins ties)."""
    counts = np.bincount(mask.labels.ravel(), minlength=mask.class_count)
    return int(np.argmax(counts))


def _draw_spatial(
    rng: np.random.Generator, spec: AugmentSpec, width: int, height: int
) -> tuple[SpatialOp, ...]:
    ops: list[SpatialOp] = []
    if SpatialOpKind.FLIP_H in spec.spatial_ops and rng.random() < FLIP_PROBABILITY:
        ops.append(SpatialOp(SpatialOpKind.FLIP_H))
    if SpatialOpKind.RANDOM_CROP in spec.spatial_ops:
        side = float(np.sqrt(spec.crop_fraction))
        w = max(1, min(width, int(round(width * side))))
        h = max(1, min(height, int(round(height * side))))
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        ops.append(SpatialOp(SpatialOpKind.RANDOM_CROP, x, y, w, h))
    return tuple(ops)


def apply_spatial(
    image: LinearImage, mask: SemanticMask, ops: Sequence[SpatialOp]
) -> tuple[LinearImage, SemanticMask]:
    """Apply recorded spatial ops identically to an image and its mask."""
    for op in ops:
        if op.kind is SpatialOpKind.FLIP_H:
            image, mask = flip_horizontal(image), flip_horizontal(mask)
        else:
            image = crop(image, op.x, op.y, op.w, op.h)
            mask = crop(mask, op.x, op.y, op.w, op.h)
    return image, mask


def _class_distortion(
    rng: np.random.Generator,
    spec: AugmentSpec,
    drawn: DistortionParams,
    mask: SemanticMask,
) -> DistortionParams:
    """Replace drawn gains by the dominant class's illuminant plus jitter."""
    assert spec.class_illuminants is not None
    label = dominant_class(mask)
    if label not in spec.class_illuminants:
        return drawn
    base = np.asarray(spec.class_illuminants[label], dtype=np.float64)
    jitter = 1.0 + spec.illuminant_jitter * rng.uniform(-1.0, 1.0, size=3)
    gains = np.clip(base * jitter, *spec.gain_range)
    return DistortionParams(
        float(gains[0]), float(gains[1]), float(gains[2]), drawn.gamma
    )


def _make_record(
    source: Source, spec: AugmentSpec, split: Split, cursor: int
) -> SampleRecord:
    rng = sample_rng(spec.seed, source.source_id, cursor)
    spatial = _draw_spatial(rng, spec, source.image.width, source.image.height)
    distortion = sample_distortion(rng, spec.gain_range, spec.gamma_range)

    if spec.class_illuminants is not None:
        _, mask = apply_spatial(source.image, source.mask, spatial)
        distortion = _class_distortion(rng, spec, distortion, mask)

    n_gamma_one = int(np.ceil(spec.samples_per_image * spec.gamma_one_fraction))
    if split is Split.TEST and cursor < n_gamma_one:
        distortion = DistortionParams(distortion.r, distortion.g, distortion.b, 1.0)

    return SampleRecord(
        source_id=source.source_id,
        rng_cursor=cursor,
        split=split,
        distortion=distortion,
        truth=inverse_params(distortion),
        spatial=spatial,
    )


def materialize(source: Source, record: SampleRecord) -> Sample:
    """Rebuild a sample from its source and record.

    Spatial ops come first, then the color distortion; the mask receives the
    spatial ops only.
    """
    image, mask = apply_spatial(source.image, source.mask, record.spatial)
    return Sample(
        record=record,
        image=apply_distortion(image, record.distortion),
        mask=mask,
        truth_image=image,
    )


def assign_split(
    source_ids: Sequence[str], test_fraction: float, seed: int
) -> dict[str, Split]:
    """Seeded split of source ids into train and test."""
    ordered = sorted(source_ids)
    rng = np.random.default_rng(_stable_seed(seed, "split"))
    order = rng.permutation(len(ordered))
    n_test = min(len(ordered), int(round(len(ordered) * test_fraction)))
    test_ids = {ordered[i] for i in order[:n_test]}
    return {sid: Split.TEST if sid in test_ids else Split.TRAIN for sid in ordered}


def _synthesize_source(
    source: Source, spec: AugmentSpec, split: Split
) -> list[Sample]:
    check_pair(source.image, source.mask)
    return [
        materialize(source, _make_record(source, spec, split, k))
        for k in range(spec.samples_per_image)
    ]


def synthesize(
    sources: Sequence[Source],
    spec: AugmentSpec,
    split: dict[str, Split] | None = None,
    max_workers: int = 1,
    show_progress: bool = False,
    stored: bool = False,
) -> SynthesisResult:
    """Synthesize spec.samples_per_image distorted samples per source.

    Args:
        sources: Source images with masks; ids must be unique.
        spec: Augmentation spec.
        split: Explicit split per source id; drawn from spec.test_fraction when
            omitted.
        max_workers: Sources synthesized in parallel; output is identical to
            sequential execution.
        show_progress: Show a progress bar.
        stored: Clamp and quantize each sample image to 8 bits, as it reads
            back from its written file. Normalization is computed afterwards.

    Returns:
        The manifest and the materialized samples, in source order.

    Raises:
        ParameterError: If sources is empty or ids repeat.
        ShapeMismatchError: If an image and its mask differ in size.
    """
    if not sources:
        raise ParameterError("cannot synthesize from an empty source list")
    ids = [s.source_id for s in sources]
    if len(set(ids)) != len(ids):
        raise ParameterError("source ids must be unique")
    class_counts = {s.mask.class_count for s in sources}
    if len(class_counts) != 1:
        raise ParameterError(f"sources declare different class counts: {class_counts}")
    class_count = class_counts.pop()

    if split is None:
        split = assign_split(ids, spec.test_fraction, spec.seed)
    else:
        split = {sid: Split(s) for sid, s in split.items()}
        missing = set(ids) - set(split)
        if missing:
            raise ParameterError(f"split is missing source ids: {sorted(missing)}")

    logger.info(
        f"Synthesizing {spec.samples_per_image} samples for each of "
        f"{len(sources)} sources"
    )

    per_source: list[list[Sample] | None] = [None] * len(sources)
    progress = tqdm(total=len(sources), desc="synthesize", disable=not show_progress)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = {
            executor.submit(
                _synthesize_source, source, spec, split[source.source_id]
            ): i
            for i, source in enumerate(sources)
        }
        for future, index in futures.items():
            per_source[index] = future.result()
            progress.update(1)
    progress.close()

    samples = [sample for group in per_source if group for sample in group]
    if stored:
        samples = [replace(s, image=as_stored(s.image)) for s in samples]
    train_images = [s.image for s in samples if s.record.split is Split.TRAIN]
    if not train_images:
        logger.warning("No training samples; normalization uses all samples")
        train_images = [s.image for s in samples]
    normalization = compute_normalization(
        train_images, spec.normalization_mode, spec.normalization_size
    )

    manifest = DatasetManifest(
        spec=spec,
        class_count=class_count,
        records=[s.record for s in samples],
        split={sid: split[sid] for sid in ids},
        normalization=normalization,
    )
    logger.info(f"Synthesized {len(samples)} samples")
    return SynthesisResult(manifest=manifest, samples=samples)
