"""Tests for image containers, file I/O, transforms and input assembly."""

import numpy as np
import pytest

from src.errors import (
    ImageFormatError,
    LabelRangeError,
    ParameterError,
    SemanticWBError,
    ShapeMismatchError,
)
from src.imaging.image import LinearImage, SemanticMask, check_pair
from src.imaging.image_io import load_image, load_mask, quantize, save_image, save_mask
from src.imaging.transforms import crop, flip_horizontal, resize, resize_bilinear
from src.imaging.volume import (
    NormalizationMode,
    assemble_input,
    compute_normalization,
    encode_mask_channel,
    invert_normalization,
)


def _grid_image(rng: np.random.Generator, h: int = 4, w: int = 3) -> LinearImage:
    return LinearImage(rng.integers(0, 256, size=(h, w, 3)) / 255.0)


def test_semantic_mask_label_out_of_range_raises_label_range_error():
    with pytest.raises(LabelRangeError):
        SemanticMask(np.array([[0, 3]]), 3)


def test_linear_image_negative_value_raises_parameter_error():
    with pytest.raises(ParameterError):
        LinearImage(np.full((2, 2, 3), -0.1))


@pytest.mark.parametrize("value", [np.nan, np.inf])
def test_linear_image_non_finite_value_raises_parameter_error(value):
    data = np.full((2, 2, 3), 0.5)
    data[1, 0, 2] = value

    with pytest.raises(ParameterError, match="finite"):
        LinearImage(data)


def test_semantic_mask_float_labels_raises_toolkit_error():
    with pytest.raises(SemanticWBError):
        SemanticMask(np.array([[0.0, 1.5]]), 3)


def test_check_pair_size_mismatch_raises_shape_mismatch_error(tiny_image):
    with pytest.raises(ShapeMismatchError):
        check_pair(tiny_image, SemanticMask(np.zeros((2, 2), dtype=int), 1))


@pytest.mark.parametrize("suffix", ["png", "ppm"])
def test_save_image_then_load_image_8bit_values_reproduced(tmp_path, rng, suffix):
    image = _grid_image(rng)
    path = tmp_path / f"img.{suffix}"

    save_image(image, path)
    loaded = load_image(path)

    np.testing.assert_array_equal(loaded.data, image.data)


def test_save_image_values_above_one_clamped_on_write(tmp_path):
    image = LinearImage(np.full((2, 2, 3), 1.7))
    path = tmp_path / "bright.png"

    save_image(image, path)

    np.testing.assert_array_equal(load_image(path).data, np.ones((2, 2, 3)))


def test_quantize_out_of_range_values_clamped():
    np.testing.assert_array_equal(
        quantize(np.array([-0.3, 0.0, 128 / 255.0, 1.0, 1.2])), [0, 0, 128, 255, 255]
    )


def test_save_mask_then_load_mask_labels_reproduced(tmp_path, tiny_mask):
    path = tmp_path / "mask.png"

    save_mask(tiny_mask, path)
    loaded = load_mask(path, tiny_mask.class_count)

    np.testing.assert_array_equal(loaded.labels, tiny_mask.labels)


def test_load_mask_label_beyond_class_count_raises_label_range_error(
    tmp_path, tiny_mask
):
    path = tmp_path / "mask.png"
    save_mask(tiny_mask, path)

    with pytest.raises(LabelRangeError):
        load_mask(path, 2)


def test_load_image_unknown_suffix_raises_image_format_error(tmp_path):
    path = tmp_path / "img.bmp"
    path.write_bytes(b"BM")

    with pytest.raises(ImageFormatError):
        load_image(path)


def test_load_image_grey_png_raises_image_format_error(tmp_path, tiny_mask):
    path = tmp_path / "grey.png"
    save_mask(tiny_mask, path)

    with pytest.raises(ImageFormatError):
        load_image(path)


def test_load_image_ppm_wrong_maxval_raises_image_format_error(tmp_path):
    path = tmp_path / "deep.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))

    with pytest.raises(ImageFormatError):
        load_image(path)


def test_resize_mask_nearest_no_new_labels(tiny_mask):
    resized = resize(tiny_mask, 13, 11)

    assert resized.size == (13, 11)
    assert resized.label_set() <= tiny_mask.label_set()


def test_resize_image_same_size_unchanged(tiny_image):
    resized = resize(tiny_image, tiny_image.width, tiny_image.height)

    np.testing.assert_allclose(resized.data, tiny_image.data, atol=1e-12)


def test_resize_image_corners_preserved(tiny_image):
    resized = resize(tiny_image, 9, 14)

    np.testing.assert_allclose(resized.data[0, 0], tiny_image.data[0, 0])
    np.testing.assert_allclose(resized.data[-1, -1], tiny_image.data[-1, -1])


def test_flip_horizontal_twice_returns_original(tiny_image, tiny_mask):
    np.testing.assert_array_equal(
        flip_horizontal(flip_horizontal(tiny_image)).data, tiny_image.data
    )
    np.testing.assert_array_equal(
        flip_horizontal(tiny_mask).labels[:, 0], [1, 1, 0, 0, 2, 2]
    )


def test_crop_outside_bounds_raises_shape_mismatch_error(tiny_image):
    with pytest.raises(ShapeMismatchError):
        crop(tiny_image, 3, 0, 4, 2)


def test_crop_image_and_mask_same_rectangle_stay_aligned(tiny_image, tiny_mask):
    image = crop(tiny_image, 1, 2, 3, 4)
    mask = crop(tiny_mask, 1, 2, 3, 4)

    check_pair(image, mask)
    np.testing.assert_array_equal(image.data, tiny_image.data[2:6, 1:4])


def test_encode_mask_channel_labels_scaled_by_k_minus_one(tiny_mask):
    plane = encode_mask_channel(tiny_mask, 3)

    assert plane.min() == 0.0
    assert plane.max() == 1.0
    assert set(np.unique(plane)) == {0.0, 0.5, 1.0}


def test_encode_mask_channel_single_class_all_zero():
    mask = SemanticMask(np.zeros((2, 2), dtype=int), 1)

    np.testing.assert_array_equal(encode_mask_channel(mask, 1), np.zeros((2, 2)))


def test_assemble_input_mask_plane_not_normalized(tiny_image, tiny_mask):
    norm = compute_normalization([tiny_image])

    volume = assemble_input(tiny_image, tiny_mask, norm, 3)

    np.testing.assert_array_equal(
        volume.data[:, :, 3], encode_mask_channel(tiny_mask, 3)
    )
    np.testing.assert_allclose(
        volume.data[:, :, :3].reshape(-1, 3).mean(axis=0), 0.0, atol=1e-12
    )


def test_invert_normalization_recovers_rgb(tiny_image, tiny_mask):
    norm = compute_normalization([tiny_image])
    volume = assemble_input(tiny_image, tiny_mask, norm, 3)

    np.testing.assert_allclose(
        invert_normalization(volume, norm), tiny_image.data, atol=1e-12
    )


def test_to_chw_three_channels_drops_mask_plane(tiny_image, tiny_mask):
    norm = compute_normalization([tiny_image])
    volume = assemble_input(tiny_image, tiny_mask, norm, 3)

    assert volume.to_chw(3).shape == (3, 6, 5)
    assert volume.to_chw().shape == (4, 6, 5)


def test_compute_normalization_large_offset_keeps_small_spread():
    data = np.full((4, 4, 3), 1e6)
    data[::2] += 1e-3
    data[1::2] -= 1e-3

    norm = compute_normalization([LinearImage(data)])

    np.testing.assert_allclose(norm.mean, 1e6)
    np.testing.assert_allclose(norm.std, 1e-3, rtol=1e-5)


def test_compute_normalization_pixel_mode_mean_image_has_network_size(rng):
    images = [_grid_image(rng, 5, 7), _grid_image(rng, 6, 6)]

    norm = compute_normalization(images, NormalizationMode.PIXEL, size=4)

    assert norm.mean.shape == (4, 4, 3)
    assert norm.std.shape == (3,)


def test_assemble_input_pixel_mean_wrong_size_raises_shape_mismatch_error(
    tiny_image, tiny_mask, rng
):
    norm = compute_normalization([_grid_image(rng)], NormalizationMode.PIXEL, size=4)

    with pytest.raises(ShapeMismatchError):
        assemble_input(tiny_image, tiny_mask, norm, 3)


def test_compute_normalization_empty_raises_parameter_error():
    with pytest.raises(ParameterError):
        compute_normalization([])


def test_resize_bilinear_horizontal_ramp_interpolated_linearly():
    ramp = LinearImage(np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]]))

    resized = resize_bilinear(ramp, 5, 1)

    np.testing.assert_allclose(resized.data[0, :, 1], [0.0, 0.25, 0.5, 0.75, 1.0])
