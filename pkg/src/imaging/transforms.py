"""Spatial transforms shared by images and masks.

Every transform accepts either a LinearImage or a SemanticMask and returns the
same type, so an image and its mask can be moved through identical geometry.
"""

from typing import TypeVar

import numpy as np
from numpy.typing import NDArray

from src.errors import ParameterError, ShapeMismatchError
from src.imaging.image import LinearImage, SemanticMask

Raster = TypeVar("Raster", LinearImage, SemanticMask)


def _pixels(raster: LinearImage | SemanticMask) -> NDArray:
    return raster.data if isinstance(raster, LinearImage) else raster.labels


def _rewrap(raster: Raster, pixels: NDArray) -> Raster:
    if isinstance(raster, LinearImage):
        return LinearImage(pixels)
    return SemanticMask(pixels, raster.class_count)


def _align_corner_coords(in_size: int, out_size: int) -> NDArray[np.float64]:
    """Source coordinates for each output index (align-corners convention)."""
    if out_size == 1 or in_size == 1:
        return np.zeros(out_size)
    return np.arange(out_size) * ((in_size - 1) / (out_size - 1))


def _resize_bilinear_array(
    pixels: NDArray[np.float64], out_w: int, out_h: int
) -> NDArray[np.float64]:
    in_h, in_w = pixels.shape[:2]
    ys = _align_corner_coords(in_h, out_h)
    xs = _align_corner_coords(in_w, out_w)

    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = pixels[y0][:, x0] * (1 - wx) + pixels[y0][:, x1] * wx
    bottom = pixels[y1][:, x0] * (1 - wx) + pixels[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def _resize_nearest_array(pixels: NDArray, out_w: int, out_h: int) -> NDArray:
    in_h, in_w = pixels.shape[:2]
    ys = np.floor(_align_corner_coords(in_h, out_h) + 0.5).astype(int)
    xs = np.floor(_align_corner_coords(in_w, out_w) + 0.5).astype(int)
    return pixels[ys][:, xs]


def resize(raster: Raster, out_w: int, out_h: int) -> Raster:
    """Resize to (out_w, out_h).

    Images use bilinear interpolation with aligned corners; masks use nearest
    neighbour so that no new labels appear.

    Raises:
        ParameterError: If an output dimension is zero or negative.
    """
    if out_w < 1 or out_h < 1:
        raise ParameterError(f"output size must be at least 1x1, got {out_w}x{out_h}")
    if isinstance(raster, LinearImage):
        return LinearImage(_resize_bilinear_array(raster.data, out_w, out_h))
    return SemanticMask(
        _resize_nearest_array(raster.labels, out_w, out_h), raster.class_count
    )


def resize_bilinear(image: LinearImage, out_w: int, out_h: int) -> LinearImage:
    """Bilinear resize of an image (align-corners)."""
    return resize(image, out_w, out_h)


def flip_horizontal(raster: Raster) -> Raster:
    """Mirror left-right."""
    return _rewrap(raster, _pixels(raster)[:, ::-1])


def crop(raster: Raster, x: int, y: int, w: int, h: int) -> Raster:
    """Cut out the rectangle with top-left corner (x, y) and size w x h.

    Raises:
        ShapeMismatchError: If the rectangle leaves the raster bounds.
    """
    inside = x >= 0 and y >= 0 and x + w <= raster.width and y + h <= raster.height
    if w < 1 or h < 1 or not inside:
        raise ShapeMismatchError(
            f"crop rectangle (x={x}, y={y}, w={w}, h={h}) outside raster",
            (raster.height, raster.width),
            (y + h, x + w),
        )
    return _rewrap(raster, _pixels(raster)[y : y + h, x : x + w])
