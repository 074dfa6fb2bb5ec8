"""Image files in and out: binary PGM (P5) natively, anything else through Pillow.

Images are handled as (1, 1, h, w) float64 tensors with values in [0, 1]; an
8-bit value v maps to v / 255, a value under maxval m to v / m.
"""
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from dnres_forge.errors import ImageFormatError
from dnres_forge.nn.tensor import Tensor

logger = logging.getLogger(__name__)

PGM_MAGIC = b"P5"
PGM_SUFFIXES = (".pgm",)
WHITESPACE = b" \t\n\r\v\f"

# BT.601 luma
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PathLike = Union[str, Path]


class PgmDecoder:
    """Parse a binary PGM: header tokens separated by whitespace, ``#`` comments
    running to end of line, a single whitespace byte, then the raster."""

    def __init__(self, data: bytes, name: str = "<bytes>"):
        self.data = data
        self.name = name
        self.pos = 0

    def _error(self, message: str) -> ImageFormatError:
        return ImageFormatError(f"{self.name}: {message}")

    def _skip_whitespace_and_comments(self):
        while self.pos < len(self.data):
            byte = self.data[self.pos : self.pos + 1]
            if byte == b"#":
                end = self.data.find(b"\n", self.pos)
                self.pos = len(self.data) if end < 0 else end + 1
            elif byte in WHITESPACE:
                self.pos += 1
            else:
                return

    def _read_int(self, field: str) -> int:
        self._skip_whitespace_and_comments()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if start == self.pos:
            raise self._error(f"malformed header: expected {field}")
        return int(self.data[start : self.pos])

    def _read_header(self) -> Tuple[int, int, int]:
        if self.data[:2] != PGM_MAGIC:
            raise self._error(f"not a binary PGM (magic {self.data[:2]!r})")
        self.pos = 2
        width = self._read_int("width")
        height = self._read_int("height")
        maxval = self._read_int("maxval")
        if width < 1 or height < 1:
            raise self._error(f"malformed header: size {width}x{height}")
        if not 0 < maxval < 65536:
            raise self._error(f"malformed header: maxval {maxval}")
        if not self.data[self.pos : self.pos + 1] or self.data[self.pos] not in WHITESPACE:
            raise self._error("malformed header: missing whitespace before raster")
        self.pos += 1
        return width, height, maxval

    @property
    def result(self) -> np.ndarray:
        """Pixel values scaled to [0, 1], shape (h, w), float64."""
        width, height, maxval = self._read_header()
        dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
        expected = width * height * dtype.itemsize
        raster = self.data[self.pos : self.pos + expected]
        if len(raster) < expected:
            raise self._error(
                f"truncated payload: expected {expected} bytes, got {len(raster)}"
            )
        values = np.frombuffer(raster, dtype=dtype).reshape(height, width)
        if values.max(initial=0) > maxval:
            raise self._error(f"pixel value above maxval {maxval}")
        return values.astype(np.float64) / maxval


def encode_pgm(values: np.ndarray) -> bytes:
    """8-bit P5 bytes of a 2-D uint8 array."""
    height, width = values.shape
    header = b"P5\n%d %d\n255\n" % (width, height)
    return header + np.ascontiguousarray(values, dtype=np.uint8).tobytes()


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and quantize to 8 bits, rounding half to even."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)


def quantize(image: np.ndarray) -> np.ndarray:
    return to_uint8(image).astype(np.float64) / 255


def rgb_to_y(rgb: np.ndarray) -> Tensor:
    """Luma of a 3-channel image, (3, h, w) or (n, 3, h, w), as (n, 1, h, w)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 3:
        rgb = rgb[np.newaxis]
    if rgb.ndim != 4 or rgb.shape[1] != 3:
        raise ValueError(f"rgb_to_y expects 3 channels, got shape {rgb.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * rgb[:, 0:1] + g * rgb[:, 1:2] + b * rgb[:, 2:3]


def _read_with_pillow(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I;16L", "I"):
                values = np.asarray(img, dtype=np.float64) / 65535
            elif img.mode == "L":
                values = np.asarray(img, dtype=np.float64) / 255
            else:
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255
                values = rgb_to_y(rgb.transpose(2, 0, 1))[0, 0]
    except UnidentifiedImageError as e:
        raise ImageFormatError(f"{path}: unsupported image format") from e
    return values


def load_image(path: PathLike) -> Tensor:
    """Read a grayscale (or luma of a color) image as a (1, 1, h, w) tensor."""
    path = Path(path)
    with open(path, "rb") as file:
        data = file.read()
    if data[:2] == PGM_MAGIC:
        values = PgmDecoder(data, str(path)).result
    elif data[:1] == b"P":
        raise ImageFormatError(f"{path}: only binary PGM (P5) is supported among PNM formats")
    else:
        values = _read_with_pillow(path)
    return values[np.newaxis, np.newaxis]


def write_image(path: PathLike, image: np.ndarray):
    """Write a [0, 1] image as 8-bit grayscale; values are clamped here and only here."""
    path = Path(path)
    values = to_uint8(np.asarray(image).reshape(np.shape(image)[-2:]))
    if path.suffix.lower() in PGM_SUFFIXES:
        with open(path, "wb") as file:
            file.write(encode_pgm(values))
    else:
        Image.fromarray(values).save(path)
    logger.info(f"Wrote file: {path}")


def list_images(directory: PathLike) -> List[Path]:
    """Image files directly inside ``directory``, sorted by name."""
    suffixes = PGM_SUFFIXES + (".png",)
    return sorted(
        p for p in Path(directory).iterdir() if p.suffix.lower() in suffixes and p.is_file()
    )
