"""Tests for deterministic sample synthesis."""

from dataclasses import replace

import numpy as np
import pytest

from src.augment.synthesis import (
    AugmentSpec,
    Source,
    Split,
    assign_split,
    dominant_class,
    sample_distortion,
    sample_rng,
    synthesize,
)
from src.colorcast.cast import apply_correction
from src.errors import ParameterError
from src.evaluation.benchmark import class_illuminants
from src.imaging.image import SemanticMask


def _record_values(result) -> list[tuple]:
    return [
        (r.sample_id, tuple(r.distortion.as_array()), r.spatial)
        for r in result.manifest.records
    ]


def test_synthesize_same_spec_twice_identical_records(tiny_benchmark, tiny_augment):
    a = synthesize(tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split)
    b = synthesize(tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split)

    assert _record_values(a) == _record_values(b)
    for x, y in zip(a.samples, b.samples, strict=True):
        np.testing.assert_array_equal(x.image.data, y.image.data)


def test_synthesize_parallel_workers_match_sequential(tiny_benchmark, tiny_augment):
    sequential = synthesize(
        tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split
    )
    parallel = synthesize(
        tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split, max_workers=3
    )

    assert _record_values(parallel) == _record_values(sequential)


def test_synthesize_reversed_source_order_same_samples(tiny_benchmark, tiny_augment):
    forward = synthesize(
        tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split
    )
    backward = synthesize(
        tiny_benchmark.sources[::-1], tiny_augment, split=tiny_benchmark.split
    )

    assert sorted(_record_values(forward)) == sorted(_record_values(backward))


def test_synthesize_different_seed_different_distortions(tiny_benchmark, tiny_augment):
    a = synthesize(tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split)
    b = synthesize(
        tiny_benchmark.sources,
        replace(tiny_augment, seed=tiny_augment.seed + 1),
        split=tiny_benchmark.split,
    )

    assert _record_values(a) != _record_values(b)


def test_synthesize_truth_corrects_sample_to_truth_image(tiny_result):
    for sample in tiny_result.samples:
        restored = apply_correction(sample.image, sample.record.truth)

        np.testing.assert_allclose(restored.data, sample.truth_image.data, atol=1e-9)


def test_synthesize_mask_follows_spatial_ops(tiny_result):
    for sample in tiny_result.samples:
        assert sample.mask.size == sample.image.size == sample.truth_image.size


def test_synthesize_gamma_one_fraction_pins_first_test_samples(tiny_result):
    for record in tiny_result.manifest.records:
        if record.split is Split.TEST and record.rng_cursor == 0:
            assert record.gamma_one
            assert record.truth.gamma == 1.0
        if record.split is Split.TRAIN:
            assert not record.gamma_one


def test_synthesize_class_illuminants_zero_jitter_uses_table(tiny_benchmark):
    table = class_illuminants(3)
    spec = AugmentSpec(samples_per_image=3, seed=1, class_illuminants=table)

    result = synthesize(tiny_benchmark.sources, spec, split=tiny_benchmark.split)

    for sample in result.samples:
        expected = np.clip(table[dominant_class(sample.mask)], *spec.gain_range)
        np.testing.assert_allclose(sample.record.distortion.gains, expected)


def test_synthesize_normalization_from_train_split_only(tiny_result):
    train = [s.image for s in tiny_result.samples if s.record.split is Split.TRAIN]
    pixels = np.concatenate([img.data.reshape(-1, 3) for img in train])

    np.testing.assert_allclose(
        tiny_result.manifest.normalization.mean, pixels.mean(axis=0), rtol=1e-9
    )


def test_synthesize_duplicate_source_ids_raises_value_error(
    tiny_benchmark, tiny_augment
):
    source = tiny_benchmark.sources[0]

    with pytest.raises(ValueError, match="unique"):
        synthesize([source, source], tiny_augment)


def test_synthesize_empty_sources_raises_value_error(tiny_augment):
    with pytest.raises(ValueError):
        synthesize([], tiny_augment)


def test_synthesize_split_missing_source_raises_value_error(
    tiny_benchmark, tiny_augment
):
    split = dict(tiny_benchmark.split)
    split.pop(tiny_benchmark.sources[0].source_id)

    with pytest.raises(ValueError, match="missing"):
        synthesize(tiny_benchmark.sources, tiny_augment, split=split)


def test_synthesize_sample_count_is_sources_times_samples_per_image(
    tiny_benchmark, tiny_result
):
    assert len(tiny_result.samples) == len(tiny_benchmark.sources) * 2


def test_assign_split_same_seed_same_assignment():
    ids = [f"img{i}" for i in range(20)]

    a = assign_split(ids, 0.25, seed=4)
    b = assign_split(list(reversed(ids)), 0.25, seed=4)

    assert a == b
    assert sum(s is Split.TEST for s in a.values()) == 5


def test_dominant_class_tie_lowest_label_wins():
    mask = SemanticMask(np.array([[2, 2, 1, 1]]), 3)

    assert dominant_class(mask) == 1


def test_augment_spec_invalid_range_raises_parameter_error():
    with pytest.raises(ParameterError):
        AugmentSpec(gain_range=(1.2, 0.8))


def test_augment_spec_to_dict_from_dict_same_spec(tiny_augment):
    assert AugmentSpec.from_dict(tiny_augment.to_dict()) == tiny_augment


def test_source_with_mismatched_mask_raises_on_synthesize(tiny_image, tiny_augment):
    source = Source("bad", tiny_image, SemanticMask(np.zeros((2, 2), dtype=int), 3))

    with pytest.raises(ValueError):
        synthesize([source], tiny_augment)


def test_sample_distortion_draws_r_g_b_gamma_in_order():
    expected = np.random.default_rng(9).uniform(size=4)

    params = sample_distortion(np.random.default_rng(9), (0.0, 1.0), (1.0, 2.0))

    np.testing.assert_allclose(
        params.as_array(), [*expected[:3], 1.0 + expected[3]], rtol=1e-15
    )


def test_sample_distortion_values_inside_ranges(rng):
    for _ in range(200):
        params = sample_distortion(rng)

        assert all(0.7 <= gain <= 1.3 for gain in params.gains)
        assert 0.85 <= params.gamma <= 1.15


def test_sample_distortion_many_draws_centred_on_one():
    rng = np.random.default_rng(0)

    draws = np.array([sample_distortion(rng).as_array() for _ in range(100_000)])

    np.testing.assert_allclose(draws.mean(axis=0), 1.0, atol=0.01)


def test_sample_rng_same_key_same_stream():
    a = sample_rng(4, "img_a", 2).random(3)

    np.testing.assert_array_equal(a, sample_rng(4, "img_a", 2).random(3))
    assert not np.array_equal(a, sample_rng(4, "img_a", 3).random(3))
    assert not np.array_equal(a, sample_rng(4, "img_b", 2).random(3))


def test_synthesize_stored_samples_hold_8bit_values(tiny_benchmark, tiny_augment):
    result = synthesize(
        tiny_benchmark.sources, tiny_augment, split=tiny_benchmark.split, stored=True
    )

    for sample in result.samples:
        codes = sample.image.data * 255.0
        np.testing.assert_allclose(codes, np.round(codes), atol=1e-9)
        assert sample.image.data.max() <= 1.0
