"""Tests for scoring, mask sensitivity and the paired ablation."""

import json
from dataclasses import replace

import numpy as np
import pytest

from src.augment.manifest import load_manifest, load_samples, write_dataset
from src.augment.synthesis import Split
from src.baselines import BaselineMethod
from src.colorcast.cast import IDENTITY
from src.colorcast.metrics import rmse
from src.config import get_default_config_path, load_experiment_config
from src.errors import ShapeMismatchError, StageError
from src.evaluation.evaluator import (
    NO_GAMMA_SUFFIX,
    estimate_baseline,
    evaluate_baselines,
    evaluate_model,
    rows_for,
    run_ablation,
    score_samples,
    synthesize_experiment,
)
from src.evaluation.report import Subset
from src.evaluation.sensitivity import (
    evaluate_mask_swap,
    label_derangement,
    run_mask_sensitivity,
    shuffle_labels,
)
from src.imaging.image import LinearImage, SemanticMask
from src.imaging.volume import NormalizationStats
from src.models import NetworkVariant, init_weights
from src.training.predictor import TrainedModel
from tests.conftest import SMOKE_CONFIG


@pytest.fixture
def test_samples(tiny_result):
    return [s for s in tiny_result.samples if s.record.split is Split.TEST]


@pytest.fixture
def model(tiny_network, tiny_spec, tiny_result) -> TrainedModel:
    return TrainedModel(tiny_network, tiny_spec, tiny_result.manifest.normalization, 3)


def test_estimate_baseline_degenerate_sample_returns_none(test_samples):
    data = test_samples[0].image.data.copy()
    data[:, :, 1] = 0.0
    samples = [replace(test_samples[0], image=LinearImage(data)), *test_samples[1:]]

    params = estimate_baseline(BaselineMethod.GREY_WORLD, samples, max_workers=2)

    assert params[0] is None
    assert all(p is not None for p in params[1:])


def test_score_samples_results_in_sample_order(test_samples):
    params = [IDENTITY] * len(test_samples)

    scores = score_samples(test_samples, params, max_workers=3)

    for sample, score in zip(test_samples, scores, strict=True):
        assert score == rmse(sample.image, sample.truth_image)


def test_score_samples_truth_params_score_near_zero(test_samples):
    scores = score_samples(test_samples, [s.record.truth for s in test_samples])

    assert max(scores) < 1e-6


def test_rows_for_gamma_one_subset_only_gamma_one_samples(test_samples):
    scores = [1.0] * len(test_samples)

    rows = rows_for("x", test_samples, scores)

    gamma_one = [s.record.sample_id for s in test_samples if s.record.gamma_one]
    assert [r.subset for r in rows] == [Subset.ALL, Subset.GAMMA_ONE]
    assert rows[1].sample_ids == gamma_one


def test_rows_for_no_gamma_one_samples_single_row(tiny_result):
    train = [s for s in tiny_result.samples if s.record.split is Split.TRAIN]

    rows = rows_for("x", train, [1.0] * len(train))

    assert [r.subset for r in rows] == [Subset.ALL]


def test_evaluate_baselines_no_op_mean_is_uncorrected_error(test_samples):
    rows = evaluate_baselines(test_samples, max_workers=2)

    methods = {r.method for r in rows}
    assert methods == {m.value for m in BaselineMethod}
    no_op = next(r for r in rows if r.method == "no_op" and r.subset is Subset.ALL)
    expected = [rmse(s.image, s.truth_image) for s in test_samples]
    assert no_op.per_sample == expected


def test_evaluate_model_rows_with_and_without_gamma(model, test_samples):
    rows = evaluate_model(model, test_samples, "semantic", seed=3)

    methods = [r.method for r in rows]
    assert methods.count("semantic") == 2
    assert methods.count("semantic" + NO_GAMMA_SUFFIX) == 2
    assert all(r.seed == 3 for r in rows)


def test_run_mask_sensitivity_same_mask_zero_delta(model, tiny_image, tiny_mask):
    result = run_mask_sensitivity(model, tiny_image, tiny_mask, tiny_mask)

    assert result.parameter_delta < 1e-12
    assert result.correction_rmse < 1e-9


def test_run_mask_sensitivity_zero_mask_weights_ignores_mask(
    model, tiny_image, tiny_mask
):
    model.network.layer("conv1").params["weight"][:, 3] = 0.0
    other = SemanticMask(np.full((6, 5), 2), 3)

    result = run_mask_sensitivity(model, tiny_image, tiny_mask, other)

    assert result.parameter_delta < 1e-12


def test_run_mask_sensitivity_different_masks_change_prediction(
    model, tiny_image, tiny_mask
):
    other = SemanticMask(np.zeros((6, 5), dtype=int), 3)

    result = run_mask_sensitivity(model, tiny_image, tiny_mask, other)

    assert result.parameter_delta > 0.0
    assert result.corrected_a.size == tiny_image.size


def test_run_mask_sensitivity_rgb_model_raises_shape_mismatch_error(
    tiny_spec, tiny_image, tiny_mask
):
    spec = tiny_spec.with_variant(NetworkVariant.RGB)
    rgb = TrainedModel(
        init_weights(spec, np.random.default_rng(0)),
        spec,
        NormalizationStats.identity(),
        3,
    )

    with pytest.raises(ShapeMismatchError, match="no mask channel"):
        run_mask_sensitivity(rgb, tiny_image, tiny_mask, tiny_mask)


@pytest.mark.parametrize("class_count", [2, 3, 5, 8])
def test_label_derangement_no_fixed_points(class_count, rng):
    for _ in range(20):
        permutation = label_derangement(class_count, rng)

        assert sorted(permutation) == list(range(class_count))
        assert not np.any(permutation == np.arange(class_count))


def test_label_derangement_single_class_identity(rng):
    np.testing.assert_array_equal(label_derangement(1, rng), [0])


def test_shuffle_labels_keeps_region_shapes(tiny_mask, rng):
    shuffled = shuffle_labels(tiny_mask, rng)

    for label in range(3):
        region = tiny_mask.labels == label
        assert len(np.unique(shuffled.labels[region])) == 1
        assert not np.any(shuffled.labels[region] == label)


def test_evaluate_mask_swap_same_seed_same_result(model, test_samples):
    a = evaluate_mask_swap(model, test_samples, seed=1)
    b = evaluate_mask_swap(model, test_samples, seed=1)

    assert a.rmse_shuffled == b.rmse_shuffled
    assert len(a.sample_ids) == len(a.parameter_delta) == len(test_samples)
    assert all(d >= 0.0 for d in a.parameter_delta)


def test_evaluate_mask_swap_correct_masks_match_model_scores(model, test_samples):
    swap = evaluate_mask_swap(model, test_samples, seed=1)

    rows = evaluate_model(model, test_samples, "semantic")

    semantic = next(
        r for r in rows if r.method == "semantic" and r.subset is Subset.ALL
    )
    np.testing.assert_allclose(swap.rmse_correct, semantic.per_sample, rtol=1e-12)


@pytest.fixture
def smoke_config(tmp_path):
    return load_experiment_config(SMOKE_CONFIG).with_overrides(
        output_dir=tmp_path / "ablation"
    )


def test_synthesize_experiment_samples_match_written_dataset(
    smoke_config, tmp_path
):
    result, sources = synthesize_experiment(smoke_config)
    manifest_path = write_dataset(result, sources, tmp_path / "dataset")

    loaded = load_samples(load_manifest(manifest_path), manifest_path.parent)

    assert len(loaded) == len(result.samples)
    for memory, disk in zip(result.samples, loaded, strict=True):
        assert memory.record == disk.record
        np.testing.assert_array_equal(memory.image.data, disk.image.data)
        np.testing.assert_array_equal(memory.truth_image.data, disk.truth_image.data)
        np.testing.assert_array_equal(memory.mask.labels, disk.mask.labels)
    assert max(float(s.image.data.max()) for s in result.samples) <= 1.0


def test_run_ablation_smoke_config_writes_paired_report(smoke_config):
    report = run_ablation(smoke_config)

    out = smoke_config.output_dir
    assert (out / "ablation.json").exists()
    assert (out / "ablation.txt").exists()
    assert (out / "checkpoints" / "rgb_seed7.npz").exists()
    assert (out / "checkpoints" / "semantic_seed7.npz").exists()

    methods = {r.method for r in report.rows}
    assert {"rgb", "semantic", "rgb/no-gamma", "semantic/no-gamma"} <= methods
    assert {m.value for m in BaselineMethod} <= methods
    seeds = {c.seed for c in report.comparisons}
    assert seeds == {7, None}
    assert set(report.details["mask_swap"]) == {"7"}

    data = json.loads((out / "ablation.json").read_text(encoding="utf-8"))
    for row in data["rows"]:
        assert row["count"] == len(row["per_sample"])


def test_run_ablation_same_config_identical_report_bytes(smoke_config, tmp_path):
    again = smoke_config.with_overrides(output_dir=tmp_path / "again")

    run_ablation(smoke_config)
    run_ablation(again)

    for name in ("ablation.json", "ablation.txt"):
        first = (smoke_config.output_dir / name).read_bytes()
        assert first == (again.output_dir / name).read_bytes()


def test_run_ablation_missing_sources_raises_stage_error(smoke_config, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    config = replace(
        smoke_config,
        dataset=replace(
            smoke_config.dataset, benchmark=None, sources_dir=empty, class_count=3
        ),
    )

    with pytest.raises(StageError) as excinfo:
        run_ablation(config, save=False)

    assert excinfo.value.stage == "load-sources"


@pytest.fixture(scope="module")
def default_report(tmp_path_factory):
    config = load_experiment_config(get_default_config_path()).with_overrides(
        output_dir=tmp_path_factory.mktemp("default")
    )
    return run_ablation(config, save=False)


@pytest.mark.slow
def test_run_ablation_default_config_semantic_beats_rgb_on_average(default_report):
    report = default_report

    averaged = {c.subset: c for c in report.comparisons if c.seed is None}
    assert averaged[Subset.ALL].semantic_wins
    wins = report.win_counts()["all"]
    assert wins["wins"] * 2 > wins["pairs"]


@pytest.mark.slow
def test_run_ablation_default_config_shuffled_masks_raise_rmse(default_report):
    mask_swap = default_report.details["mask_swap"]

    assert mask_swap
    for swap in mask_swap.values():
        assert swap["mean_rmse_shuffled"] > swap["mean_rmse_correct"]
