"""Scoring of correctors on synthesized samples and the RGB vs. semantic ablation."""

import logging
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from src.augment.manifest import load_source_dir
from src.augment.synthesis import (
    AugmentSpec,
    Sample,
    Source,
    Split,
    SynthesisResult,
    synthesize,
)
from src.baselines import BaselineMethod, get_baseline
from src.colorcast.cast import CorrectionParams, apply_correction
from src.colorcast.metrics import RmseNormalization, rmse
from src.config import ExperimentConfig
from src.errors import DegenerateImageError, StageError
from src.evaluation.benchmark import benchmark_augment_spec, generate_benchmark
from src.evaluation.report import (
    Comparison,
    Report,
    ReportRow,
    Subset,
    mean_of,
    save_report,
)
from src.evaluation.sensitivity import evaluate_mask_swap
from src.imaging.image import LinearImage
from src.imaging.image_io import as_stored
from src.models import NetworkVariant, init_weights
from src.training.predictor import DEFAULT_PREDICT_BATCH, TrainedModel, predict_samples
from src.training.trainer import build_training_set, model_meta, train

logger = logging.getLogger(__name__)

NO_GAMMA_SUFFIX = "/no-gamma"
CHECKPOINT_DIRNAME = "checkpoints"
ABLATION_REPORT_STEM = "ablation"


@contextmanager
def _stage(name: str) -> Iterator[None]:
    """Wrap any failure inside a pipeline stage into a StageError."""
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise StageError(name, e) from e


def _estimate_single(
    estimator: Callable[[LinearImage], CorrectionParams],
    sample: Sample,
    index: int,
) -> tuple[int, CorrectionParams | None]:
    try:
        return index, estimator(sample.image)
    except DegenerateImageError as e:
        logger.warning(f"Skipping {sample.record.sample_id}: {e}")
        return index, None


def estimate_baseline(
    method: BaselineMethod | str,
    samples: Sequence[Sample],
    max_workers: int = 1,
) -> list[CorrectionParams | None]:
    """Run a baseline estimator on every sample.

    Samples with a degenerate channel get None.

    Returns:
        Estimates in sample order.
    """
    estimator = get_baseline(method)
    results: list[CorrectionParams | None] = [None] * len(samples)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = [
            executor.submit(_estimate_single, estimator, sample, i)
            for i, sample in enumerate(samples)
        ]
        for future in as_completed(futures):
            index, params = future.result()
            results[index] = params
    return results


def _score_single(
    sample: Sample, params: CorrectionParams, index: int, per: RmseNormalization
) -> tuple[int, float]:
    corrected = apply_correction(sample.image, params)
    return index, rmse(corrected, sample.truth_image, per)


def score_samples(
    samples: Sequence[Sample],
    params: Sequence[CorrectionParams | None],
    max_workers: int = 1,
    per: RmseNormalization | str = RmseNormalization.VALUE,
) -> list[float | None]:
    """RMSE between each corrected sample and its ground truth.

    Returns:
        Scores in sample order; None where params is None.
    """
    per = RmseNormalization(per)
    scores: list[float | None] = [None] * len(samples)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = [
            executor.submit(_score_single, sample, p, i, per)
            for i, (sample, p) in enumerate(zip(samples, params, strict=True))
            if p is not None
        ]
        for future in as_completed(futures):
            index, score = future.result()
            scores[index] = score
    return scores


def rows_for(
    method: str,
    samples: Sequence[Sample],
    scores: Sequence[float | None],
    seed: int | None = None,
) -> list[ReportRow]:
    """One row over all scored samples, plus a gamma=1 row when that subset exists."""
    rows: list[ReportRow] = []
    for subset in Subset:
        picked = [
            (s.record.sample_id, score)
            for s, score in zip(samples, scores, strict=True)
            if score is not None and (subset is Subset.ALL or s.record.gamma_one)
        ]
        if not picked:
            continue
        rows.append(
            ReportRow(
                method=method,
                subset=subset,
                per_sample=[score for _, score in picked],
                sample_ids=[sid for sid, _ in picked],
                seed=seed,
            )
        )
    return rows


def evaluate_baselines(
    samples: Sequence[Sample],
    methods: Sequence[BaselineMethod] = tuple(BaselineMethod),
    max_workers: int = 1,
    per: RmseNormalization | str = RmseNormalization.VALUE,
) -> list[ReportRow]:
    rows: list[ReportRow] = []
    for method in methods:
        params = estimate_baseline(method, samples, max_workers)
        scores = score_samples(samples, params, max_workers, per)
        rows.extend(rows_for(BaselineMethod(method).value, samples, scores))
        logger.info(f"Scored baseline {BaselineMethod(method).value}")
    return rows


def evaluate_model(
    model: TrainedModel,
    samples: Sequence[Sample],
    name: str,
    seed: int | None = None,
    max_workers: int = 1,
    per: RmseNormalization | str = RmseNormalization.VALUE,
    batch_size: int = DEFAULT_PREDICT_BATCH,
) -> list[ReportRow]:
    """Score a trained network with and without its predicted gamma."""
    params = predict_samples(
        model,
        [s.image for s in samples],
        [s.mask for s in samples],
        batch_size=batch_size,
    )
    scores = score_samples(samples, params, max_workers, per)
    rows = rows_for(name, samples, scores, seed)
    no_gamma = [p.without_gamma() for p in params]
    rows.extend(
        rows_for(
            name + NO_GAMMA_SUFFIX,
            samples,
            score_samples(samples, no_gamma, max_workers, per),
            seed,
        )
    )
    logger.info(f"Scored {name} on {len(samples)} samples")
    return rows


def load_experiment_sources(
    config: ExperimentConfig,
) -> tuple[list[Source], dict[str, Split] | None, AugmentSpec]:
    """Sources, explicit split (if any) and the effective augmentation spec."""
    dataset = config.dataset
    if dataset.benchmark is not None:
        benchmark = generate_benchmark(dataset.benchmark)
        augment = benchmark_augment_spec(dataset.benchmark, config.augment)
        return benchmark.sources, benchmark.split, augment
    assert dataset.sources_dir is not None and dataset.class_count is not None
    sources = load_source_dir(dataset.sources_dir, dataset.class_count)
    return sources, None, config.augment


def synthesize_experiment(
    config: ExperimentConfig, show_progress: bool = False
) -> tuple[SynthesisResult, list[Source]]:
    """Load or generate the sources and synthesize the dataset once.

    Sources and samples hold their 8-bit stored values, so a run on this
    result scores the same pixels as one on the written dataset.
    """
    with _stage("load-sources"):
        sources, split, augment = load_experiment_sources(config)
        sources = [replace(s, image=as_stored(s.image)) for s in sources]
    with _stage("synthesize"):
        result = synthesize(
            sources,
            augment,
            split=split,
            max_workers=config.evaluation.max_workers,
            show_progress=show_progress,
            stored=True,
        )
    return result, sources


def _comparisons(rows: list[ReportRow], seed: int) -> list[Comparison]:
    by_key = {(r.method, r.subset): r for r in rows if r.seed == seed}
    comparisons = []
    for subset in Subset:
        rgb = by_key.get((NetworkVariant.RGB.value, subset))
        semantic = by_key.get((NetworkVariant.SEMANTIC.value, subset))
        if rgb is not None and semantic is not None:
            comparisons.append(Comparison(subset, seed, rgb.mean, semantic.mean))
    return comparisons


def _mean_comparisons(per_seed: list[Comparison]) -> list[Comparison]:
    averaged = []
    for subset in Subset:
        picked = [c for c in per_seed if c.subset is subset]
        if picked:
            averaged.append(
                Comparison(
                    subset,
                    None,
                    mean_of([c.rgb_mean for c in picked]),
                    mean_of([c.semantic_mean for c in picked]),
                )
            )
    return averaged


def train_variant(
    config: ExperimentConfig,
    result: SynthesisResult,
    variant: NetworkVariant,
    seed: int,
    checkpoint_path: Path | None = None,
    show_progress: bool = False,
) -> TrainedModel:
    """Initialize and train one ablation arm."""
    spec = config.specs.for_variant(variant)
    manifest = result.manifest
    network = init_weights(spec, np.random.default_rng(seed))
    data = build_training_set(network, manifest, result.samples)
    outcome = train(
        network,
        data,
        config.train_config(seed),
        checkpoint_path=checkpoint_path,
        checkpoint_meta=model_meta(spec, manifest),
        show_progress=show_progress,
    )
    return TrainedModel(
        network=outcome.network,
        spec=spec,
        normalization=manifest.normalization,
        class_count=manifest.class_count,
        history=outcome.history,
    )


def run_ablation(
    config: ExperimentConfig, show_progress: bool = False, save: bool = True
) -> Report:
    """Train the RGB and semantic networks on one dataset and compare them.

    The dataset is synthesized once. For every seed in config.seeds both arms
    are initialized and shuffled with that seed, trained, and scored on the
    evaluation split (all samples and the gamma=1 subset), with and without
    the predicted gamma. The baselines are scored on the same samples.

    Args:
        config: Experiment configuration.
        show_progress: Show progress bars.
        save: Write checkpoints and ``ablation.json`` / ``ablation.txt`` to
            config.output_dir.

    Returns:
        The report.

    Raises:
        StageError: Naming the stage that failed and its cause.
    """
    result, _ = synthesize_experiment(config, show_progress)
    split = config.evaluation.split
    samples = [s for s in result.samples if s.record.split is split]
    if not samples:
        raise StageError(
            "synthesize", ValueError(f"no samples in split '{split.value}'")
        )
    per = config.evaluation.rmse_per
    workers = config.evaluation.max_workers

    with _stage("baselines"):
        rows = evaluate_baselines(samples, max_workers=workers, per=per)

    checkpoint_dir = config.output_dir / CHECKPOINT_DIRNAME
    comparisons: list[Comparison] = []
    histories: dict[str, list[float]] = {}
    mask_swap: dict[str, dict] = {}
    for seed in config.seeds:
        for variant in NetworkVariant:
            label = f"{variant.value}-seed{seed}"
            checkpoint_path = (
                checkpoint_dir / f"{variant.value}_seed{seed}.npz" if save else None
            )
            with _stage(f"train-{label}"):
                model = train_variant(
                    config, result, variant, seed, checkpoint_path, show_progress
                )
            histories[label] = model.history
            with _stage(f"evaluate-{label}"):
                rows.extend(
                    evaluate_model(
                        model,
                        samples,
                        variant.value,
                        seed=seed,
                        max_workers=workers,
                        per=per,
                        batch_size=config.evaluation.batch_size,
                    )
                )
            if variant is NetworkVariant.SEMANTIC:
                with _stage(f"mask-swap-{label}"):
                    swap = evaluate_mask_swap(
                        model, samples, seed=seed, per=per
                    )
                mask_swap[str(seed)] = swap.to_dict()
        comparisons.extend(_comparisons(rows, seed))
        logger.info(f"Finished paired run for seed {seed}")

    comparisons.extend(_mean_comparisons(comparisons))
    report = Report(
        title="Ablation: RGB vs. RGB + semantic mask",
        rows=rows,
        rmse_per=per,
        comparisons=comparisons,
        details={
            "experiment": {
                "seed": config.seed,
                "seeds": config.seeds,
                "split": split.value,
                "augment": result.manifest.spec.to_dict(),
                "network": config.network.to_dict(),
                "train": config.train.to_dict(),
                "samples": len(result.samples),
                "scored_samples": len(samples),
            },
            "training_loss": histories,
            "mask_swap": mask_swap,
        },
        show_reference=True,
    )
    if save:
        with _stage("report"):
            save_report(report, config.output_dir, ABLATION_REPORT_STEM)
    return report
