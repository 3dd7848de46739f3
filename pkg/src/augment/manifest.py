"""Manifest serialization and on-disk dataset layout.

A dataset directory looks like::

    manifest.json
    sources/<source_id>.png, sources/<source_id>_mask.png
    samples/<source_id>_<k>.png, samples/<source_id>_<k>_mask.png
"""

import json
import logging
from pathlib import Path

import numpy as np

from src.augment.synthesis import (
    AugmentSpec,
    DatasetManifest,
    Sample,
    SampleRecord,
    Source,
    SpatialOp,
    Split,
    SynthesisResult,
    materialize,
)
from src.colorcast.cast import CorrectionParams, DistortionParams, inverse_params
from src.errors import ManifestError
from src.imaging.image_io import load_image, load_mask, save_image, save_mask
from src.imaging.volume import NormalizationStats

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "1.0"
MANIFEST_FILENAME = "manifest.json"
SOURCES_DIRNAME = "sources"
SAMPLES_DIRNAME = "samples"


def _record_to_dict(record: SampleRecord) -> dict:
    return {
        "source_id": record.source_id,
        "rng_cursor": record.rng_cursor,
        "split": record.split.value,
        "distortion": record.distortion.to_dict(),
        "truth": record.truth.to_dict(),
        "spatial": [op.to_dict() for op in record.spatial],
    }


def _record_from_dict(data: dict) -> SampleRecord:
    distortion = DistortionParams.from_dict(data["distortion"])
    truth = CorrectionParams.from_dict(data["truth"])
    expected = inverse_params(distortion).as_array()
    if not np.allclose(truth.as_array(), expected, rtol=1e-12, atol=0.0):
        raise ManifestError(
            f"record {data['source_id']}_{data['rng_cursor']}: truth does not "
            "invert its distortion"
        )
    return SampleRecord(
        source_id=data["source_id"],
        rng_cursor=int(data["rng_cursor"]),
        split=Split(data["split"]),
        distortion=distortion,
        truth=truth,
        spatial=tuple(SpatialOp.from_dict(op) for op in data["spatial"]),
    )


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "class_count": manifest.class_count,
        "spec": manifest.spec.to_dict(),
        "split": {sid: s.value for sid, s in manifest.split.items()},
        "normalization": manifest.normalization.to_dict(),
        "sources": manifest.sources,
        "records": [_record_to_dict(r) for r in manifest.records],
    }


def manifest_from_dict(data: dict) -> DatasetManifest:
    """Build a manifest from its JSON structure.

    Raises:
        ManifestError: On a version mismatch or missing/invalid fields.
    """
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    version = data.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestError(
            f"unsupported manifest version {version!r} (expected {MANIFEST_VERSION})"
        )
    try:
        return DatasetManifest(
            spec=AugmentSpec.from_dict(data["spec"]),
            class_count=int(data["class_count"]),
            records=[_record_from_dict(r) for r in data["records"]],
            split={sid: Split(s) for sid, s in data["split"].items()},
            normalization=NormalizationStats.from_dict(data["normalization"]),
            sources=dict(data.get("sources") or {}),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ManifestError(f"malformed manifest: {e}") from e


def write_manifest(manifest: DatasetManifest, path: Path | str) -> Path:
    """Write a manifest as JSON.

    Floats are written with Python's shortest round-trip repr, so reading the
    file back reproduces every value exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest_to_dict(manifest), f, indent=2)
        f.write("\n")
    logger.info(f"Wrote manifest with {len(manifest.records)} records to {path}")
    return path


def load_manifest(path: Path | str) -> DatasetManifest:
    """Read a manifest written by write_manifest.

    Raises:
        ManifestError: Unreadable, truncated or malformed file, or version
            mismatch. A partial manifest is never returned.
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from e
    return manifest_from_dict(data)


def sample_paths(dataset_dir: Path, sample_id: str) -> tuple[Path, Path]:
    """(image, mask) file paths of a sample inside a dataset directory."""
    base = dataset_dir / SAMPLES_DIRNAME
    return base / f"{sample_id}.png", base / f"{sample_id}_mask.png"


def write_dataset(
    result: SynthesisResult, sources: list[Source], out_dir: Path | str
) -> Path:
    """Write sources, samples and the manifest under out_dir.

    Returns:
        Path of the written manifest.
    """
    out_dir = Path(out_dir)
    (out_dir / SOURCES_DIRNAME).mkdir(parents=True, exist_ok=True)
    (out_dir / SAMPLES_DIRNAME).mkdir(parents=True, exist_ok=True)

    source_refs: dict[str, dict[str, str]] = {}
    for source in sources:
        image_rel = f"{SOURCES_DIRNAME}/{source.source_id}.png"
        mask_rel = f"{SOURCES_DIRNAME}/{source.source_id}_mask.png"
        save_image(source.image, out_dir / image_rel)
        save_mask(source.mask, out_dir / mask_rel)
        source_refs[source.source_id] = {"image": image_rel, "mask": mask_rel}

    for sample in result.samples:
        image_path, mask_path = sample_paths(out_dir, sample.record.sample_id)
        save_image(sample.image, image_path)
        save_mask(sample.mask, mask_path)

    result.manifest.sources = source_refs
    return write_manifest(result.manifest, out_dir / MANIFEST_FILENAME)


def load_sources(
    manifest: DatasetManifest, dataset_dir: Path | str
) -> dict[str, Source]:
    """Load the source images referenced by a manifest.

    Raises:
        ManifestError: If the manifest carries no source locations.
    """
    dataset_dir = Path(dataset_dir)
    if not manifest.sources:
        raise ManifestError("manifest does not reference its source images")
    return {
        sid: Source(
            source_id=sid,
            image=load_image(dataset_dir / ref["image"]),
            mask=load_mask(dataset_dir / ref["mask"], manifest.class_count),
        )
        for sid, ref in manifest.sources.items()
    }


def load_samples(
    manifest: DatasetManifest,
    dataset_dir: Path | str,
    split: Split | str | None = None,
) -> list[Sample]:
    """Load the written samples of a manifest, optionally one split only.

    Sample images are read from their 8-bit files; ground-truth images are
    rebuilt from the sources through the recorded spatial ops.
    """
    dataset_dir = Path(dataset_dir)
    sources = load_sources(manifest, dataset_dir)
    records = manifest.records if split is None else manifest.records_for(split)

    samples: list[Sample] = []
    for record in records:
        rebuilt = materialize(sources[record.source_id], record)
        image_path, mask_path = sample_paths(dataset_dir, record.sample_id)
        samples.append(
            Sample(
                record=record,
                image=load_image(image_path),
                mask=load_mask(mask_path, manifest.class_count),
                truth_image=rebuilt.truth_image,
            )
        )
    logger.info(f"Loaded {len(samples)} samples from {dataset_dir}")
    return samples


def load_source_dir(sources_dir: Path | str, class_count: int) -> list[Source]:
    """Load ``<id>.png`` (or ``.ppm``) images with their ``<id>_mask.png`` masks.

    Sources are returned sorted by id.

    Raises:
        ManifestError: If the directory holds no image or an image lacks a mask.
    """
    sources_dir = Path(sources_dir)
    images = sorted(
        p
        for p in sources_dir.iterdir()
        if p.suffix.lower() in (".png", ".ppm") and not p.stem.endswith("_mask")
    )
    if not images:
        raise ManifestError(f"no source images in {sources_dir}")

    sources: list[Source] = []
    for image_path in images:
        mask_path = image_path.with_name(f"{image_path.stem}_mask.png")
        if not mask_path.exists():
            raise ManifestError(
                f"source {image_path.name} has no mask {mask_path.name}"
            )
        sources.append(
            Source(
                source_id=image_path.stem,
                image=load_image(image_path),
                mask=load_mask(mask_path, class_count),
            )
        )
    logger.info(f"Loaded {len(sources)} sources from {sources_dir}")
    return sources
