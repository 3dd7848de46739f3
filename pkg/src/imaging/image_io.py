"""Reading and writing images and masks.

PNG goes through pypng so bit depth and plane count are checked explicitly.
PPM (binary P6, maxval 255) is parsed directly.
"""

import logging
from enum import Enum
from pathlib import Path

import numpy as np
import png
from numpy.typing import NDArray

from src.errors import ImageFormatError
from src.imaging.image import LinearImage, SemanticMask

logger = logging.getLogger(__name__)

SUPPORTED_BIT_DEPTH = 8
PPM_MAGIC = b"P6"
PPM_MAXVAL = 255


class ImageFormat(str, Enum):
    """On-disk image formats."""

    PPM = "ppm"
    PNG = "png"

    @classmethod
    def from_path(cls, path: Path | str) -> "ImageFormat":
        """Guess the format from a file suffix.

        Raises:
            ImageFormatError: If the suffix is not .ppm or .png.
        """
        suffix = Path(path).suffix.lower().lstrip(".")
        try:
            return cls(suffix)
        except ValueError as e:
            raise ImageFormatError(f"unsupported image suffix: {path}") from e


def _read_png(path: Path) -> tuple[NDArray[np.uint8], int]:
    """Decode a PNG into a (height, width, planes) uint8 array.

    Returns:
        Tuple of (pixels, planes).
    """
    try:
        width, height, rows, info = png.Reader(filename=str(path)).read()
        pixels = np.vstack([np.asarray(row, dtype=np.uint16) for row in rows])
    except (OSError, png.Error) as e:
        raise ImageFormatError(f"cannot read PNG {path}: {e}") from e

    if info["bitdepth"] != SUPPORTED_BIT_DEPTH:
        raise ImageFormatError(
            f"unsupported bit depth {info['bitdepth']} in {path} "
            f"(only {SUPPORTED_BIT_DEPTH}-bit is supported)"
        )
    if "palette" in info:
        raise ImageFormatError(f"palette PNGs are not supported: {path}")

    planes = int(info["planes"])
    return pixels.reshape(height, width, planes).astype(np.uint8), planes


def _read_token(stream: bytes, pos: int) -> tuple[bytes, int]:
    """Read one whitespace-separated header token, skipping # comments."""
    length = len(stream)
    while pos < length:
        if stream[pos : pos + 1].isspace():
            pos += 1
        elif stream[pos : pos + 1] == b"#":
            while pos < length and stream[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < length and not stream[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated PPM header")
    return stream[start:pos], pos


def _read_ppm(path: Path) -> NDArray[np.uint8]:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ImageFormatError(f"cannot read PPM {path}: {e}") from e

    magic, pos = _read_token(raw, 0)
    if magic != PPM_MAGIC:
        raise ImageFormatError(
            f"{path} is not a binary RGB PPM (magic {magic!r}, expected P6)"
        )
    try:
        width_tok, pos = _read_token(raw, pos)
        height_tok, pos = _read_token(raw, pos)
        maxval_tok, pos = _read_token(raw, pos)
        width, height, maxval = int(width_tok), int(height_tok), int(maxval_tok)
    except ValueError as e:
        raise ImageFormatError(f"malformed PPM header in {path}") from e

    if maxval != PPM_MAXVAL:
        raise ImageFormatError(
            f"unsupported bit depth in {path}: maxval {maxval}, expected {PPM_MAXVAL}"
        )
    # Exactly one whitespace byte separates the header from the raster
    pos += 1
    expected = width * height * 3
    body = raw[pos : pos + expected]
    if width < 1 or height < 1 or len(body) != expected:
        raise ImageFormatError(
            f"PPM raster in {path} has {len(body)} bytes, expected {expected}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)


def load_image(path: Path | str, fmt: ImageFormat | str | None = None) -> LinearImage:
    """Load an 8-bit RGB image as floating values v/255.

    No gamma linearization is applied; values stay in sRGB numeric space.

    Args:
        path: Image file path.
        fmt: "ppm" or "png". Guessed from the suffix when omitted.

    Returns:
        The decoded image.

    Raises:
        ImageFormatError: Unreadable file, unsupported bit depth or a channel
            layout other than RGB.
    """
    path = Path(path)
    fmt = ImageFormat(fmt) if fmt is not None else ImageFormat.from_path(path)

    if fmt is ImageFormat.PPM:
        pixels = _read_ppm(path)
    else:
        pixels, planes = _read_png(path)
        if planes != 3:
            raise ImageFormatError(
                f"{path} has {planes} channel(s); an RGB image without alpha "
                "is required"
            )

    logger.debug(f"Loaded image {path} ({pixels.shape[1]}x{pixels.shape[0]})")
    return LinearImage(pixels.astype(np.float64) / 255.0)


def quantize(values: NDArray[np.float64]) -> NDArray[np.uint8]:
    """Clamp to [0, 1] and quantize with round-half-up to 8 bits."""
    clamped = np.clip(values, 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def as_stored(image: LinearImage) -> LinearImage:
    """The image exactly as save_image followed by load_image returns it."""
    return LinearImage(quantize(image.data).astype(np.float64) / 255.0)


def save_image(
    image: LinearImage, path: Path | str, fmt: ImageFormat | str | None = None
) -> None:
    """Write an image as 8-bit RGB.

    This is the only place where values are clamped.

    Raises:
        ImageFormatError: If the path cannot be written.
    """
    path = Path(path)
    fmt = ImageFormat(fmt) if fmt is not None else ImageFormat.from_path(path)
    pixels = quantize(image.data)
    height, width = pixels.shape[:2]

    try:
        if fmt is ImageFormat.PPM:
            header = f"P6\n{width} {height}\n{PPM_MAXVAL}\n".encode("ascii")
            path.write_bytes(header + pixels.tobytes())
        else:
            writer = png.Writer(width, height, greyscale=False, bitdepth=8)
            with open(path, "wb") as f:
                writer.write(f, pixels.reshape(height, width * 3))
    except OSError as e:
        raise ImageFormatError(f"cannot write image {path}: {e}") from e

    logger.debug(f"Saved image {path}")


def load_mask(path: Path | str, class_count: int) -> SemanticMask:
    """Load an 8-bit single-channel PNG whose pixel values are class indices.

    Raises:
        ImageFormatError: Unreadable file or not single-channel 8-bit.
        LabelRangeError: A label is >= class_count.
    """
    path = Path(path)
    pixels, planes = _read_png(path)
    if planes != 1:
        raise ImageFormatError(
            f"mask {path} has {planes} channels; a single-channel PNG is required"
        )
    return SemanticMask(pixels[:, :, 0].astype(np.int64), class_count)


def save_mask(mask: SemanticMask, path: Path | str) -> None:
    """Write a mask as an 8-bit greyscale PNG.

    Raises:
        ImageFormatError: If the path cannot be written.
    """
    path = Path(path)
    writer = png.Writer(mask.width, mask.height, greyscale=True, bitdepth=8)
    try:
        with open(path, "wb") as f:
            writer.write(f, mask.labels.astype(np.uint8))
    except OSError as e:
        raise ImageFormatError(f"cannot write mask {path}: {e}") from e
