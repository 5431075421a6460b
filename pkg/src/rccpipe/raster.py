"""8-bit RGB rasters and RGBA sprites with PNG and binary-PPM storage.

PNG goes through Pillow; PPM (P6, maxval 255) has its own tiny codec so test
fixtures can be built and inspected without any imaging dependency.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, IoError, MissingFileError, ParseError


@dataclass(frozen=True)
class Raster:
    """Row-major RGB pixels, 8-bit channels, shape (height, width, 3)."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DataError(f"raster must have shape (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError("raster must be at least 1x1")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]

    def same_bytes(self, other: "Raster") -> bool:
        return self.array.shape == other.array.shape and np.array_equal(
            self.array, other.array
        )


@dataclass(frozen=True)
class Sprite:
    """RGBA overlay, shape (height, width, 4); alpha 0 transparent."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise DataError(f"sprite must have shape (h, w, 4), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError("sprite must be at least 1x1")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def width(self) -> int:
        return self.array.shape[1]


# -- PPM (P6) -------------------------------------------------------------


def _read_ppm(p: Path) -> Raster:
    data = p.read_bytes()
    # Header: magic, width, height, maxval as whitespace-separated tokens;
    # comments (# to end of line) allowed between them.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"truncated PPM header in {p.name}")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ParseError(f"{p.name}: not a P6 PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError(f"{p.name}: non-numeric PPM header") from None
    if maxval != 255:
        raise ParseError(f"{p.name}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + width * height * 3]
    if len(body) != width * height * 3:
        raise ParseError(f"{p.name}: expected {width * height * 3} pixel bytes")
    return Raster(np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3))


def _write_ppm(img: Raster, p: Path) -> None:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    p.write_bytes(header + img.array.tobytes())


# -- shared entry points ---------------------------------------------------


def load_image(path) -> Raster:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"image not found: {p}")
    if p.suffix.lower() == ".ppm":
        return _read_ppm(p)
    try:
        with Image.open(p) as im:
            return Raster(np.asarray(im.convert("RGB")))
    except (OSError, SyntaxError) as exc:
        raise ParseError(f"cannot read image {p.name}: {exc}") from None


def save_image(img: Raster, path) -> None:
    p = Path(path)
    try:
        if p.suffix.lower() == ".ppm":
            _write_ppm(img, p)
        else:
            Image.fromarray(img.array, mode="RGB").save(p)
    except OSError as exc:
        raise IoError(f"cannot write image {p}: {exc}") from None


def load_sprite(path) -> Sprite:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"sprite not found: {p}")
    try:
        with Image.open(p) as im:
            return Sprite(np.asarray(im.convert("RGBA")))
    except (OSError, SyntaxError) as exc:
        raise ParseError(f"cannot read sprite {p.name}: {exc}") from None
