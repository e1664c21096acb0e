"""
Frame representation, HSL colour conversion and binary pixmap (P6) I/O.

Every other module works on :class:`Frame` values. A frame owns a read-only
``uint8`` array of shape ``(height, width, 3)``; the RGB samples are stored
row-major, exactly as they appear in a P6 file body.
"""
import os
import re
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from .exceptions import (
    MalformedHeader,
    UnsupportedMaxval,
    TruncatedData,
    DimensionMismatch,
)
from .storage import atomic_write

MAXVAL = 255
RASTER_SUFFIX = ".ppm"


@dataclass(frozen=True, eq=False)
class Frame:
    """
    One decoded RGB image with 8-bit channels.

    The constructor copies the supplied samples and freezes the copy, so a frame
    can be shared between threads without further synchronisation. Samples of
    any integer dtype are accepted when they lie in [0, 255]; floating-point
    samples are rejected instead of being truncated.
    """
    data: np.ndarray

    def __post_init__(self) -> None:
        _data = np.asarray(self.data)
        if _data.ndim != 3 or _data.shape[2] != 3:
            raise DimensionMismatch(
                f"Frame data must have shape (height, width, 3), got {_data.shape}.",
                stage='frame'
            )
        if _data.shape[0] < 1 or _data.shape[1] < 1:
            raise DimensionMismatch("Frame must be at least 1x1 pixels.", stage='frame')
        if _data.dtype != np.uint8:
            if not np.issubdtype(_data.dtype, np.integer):
                raise DimensionMismatch(
                    f"Frame samples must be integers, got dtype {_data.dtype}; round them first.",
                    stage='frame'
                )
            if np.any(_data < 0) or np.any(_data > MAXVAL):
                raise DimensionMismatch("Frame samples must lie in [0, 255].", stage='frame')
            _data = _data.astype(np.uint8)
        _data = np.array(_data, dtype=np.uint8, copy=True, order='C')
        _data.setflags(write=False)
        object.__setattr__(self, 'data', _data)

    @classmethod
    def from_bytes(cls, width: int, height: int, samples: bytes) -> "Frame":
        """
        Build a frame from row-major RGB bytes.

        :param width: width in pixels
        :type width: int
        :param height: height in pixels
        :type height: int
        :param samples: exactly width*height*3 bytes
        :type samples: bytes
        :return: frame
        :rtype: Frame
        """
        if len(samples) != width * height * 3:
            raise DimensionMismatch(
                f"Expected {width * height * 3} samples, got {len(samples)}.", stage='frame'
            )
        return cls(np.frombuffer(samples, dtype=np.uint8).reshape(height, width, 3))

    @classmethod
    def filled(cls, width: int, height: int, value: Union[int, Tuple[int, int, int]]) -> "Frame":
        """
        Build a uniform frame.

        :param width: width in pixels
        :type width: int
        :param height: height in pixels
        :type height: int
        :param value: gray level or RGB triple
        :type value: Union[int, Tuple[int, int, int]]
        :return: frame
        :rtype: Frame
        """
        _data = np.empty((height, width, 3), dtype=np.uint8)
        _data[...] = value
        return cls(_data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 3

    @property
    def shape(self) -> Tuple[int, int]:
        return self.width, self.height

    def to_bytes(self) -> bytes:
        return self.data.tobytes()

    def luma(self) -> np.ndarray:
        """
        Luma plane (0.299R + 0.587G + 0.114B) as float64.

        :return: array of shape (height, width)
        :rtype: numpy.ndarray
        """
        _rgb = self.data.astype(np.float64)
        return 0.299 * _rgb[..., 0] + 0.587 * _rgb[..., 1] + 0.114 * _rgb[..., 2]

    def __eq__(self, __value: object) -> bool:
        if not isinstance(__value, Frame):
            return False
        return np.array_equal(self.data, __value.data)

    def __repr__(self) -> str:
        return f"Frame({self.width}x{self.height})"


@dataclass(frozen=True)
class HslPixel:
    hue: float
    saturation: float
    lightness: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.hue < 360.0:
            raise ValueError(f"Hue {self.hue} outside [0, 360).")
        if not 0.0 <= self.saturation <= 1.0:
            raise ValueError(f"Saturation {self.saturation} outside [0, 1].")
        if not 0.0 <= self.lightness <= 1.0:
            raise ValueError(f"Lightness {self.lightness} outside [0, 1].")


def rgb_to_hsl_array(rgb: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised RGB -> HSL conversion. Achromatic pixels get hue 0.

    :param rgb: array (..., 3) of samples in [0, 255]
    :type rgb: numpy.ndarray
    :return: hue in degrees [0, 360), saturation and lightness in [0, 1]
    :rtype: Tuple[numpy.ndarray, numpy.ndarray, numpy.ndarray]
    """
    _rgb = np.asarray(rgb, dtype=np.float64) / MAXVAL
    r, g, b = _rgb[..., 0], _rgb[..., 1], _rgb[..., 2]
    _max = np.max(_rgb, axis=-1)
    _min = np.min(_rgb, axis=-1)
    delta = _max - _min
    lightness = (_max + _min) / 2.0

    chromatic = delta > 0
    _safe = np.where(chromatic, delta, 1.0)
    saturation = np.where(
        chromatic, delta / np.where(chromatic, 1.0 - np.abs(2.0 * lightness - 1.0), 1.0), 0.0
    )

    hue = np.where(
        _max == r,
        np.mod((g - b) / _safe, 6.0),
        np.where(_max == g, (b - r) / _safe + 2.0, (r - g) / _safe + 4.0)
    ) * 60.0
    hue = np.where(chromatic, hue, 0.0)
    hue = np.where(hue >= 360.0, 0.0, hue)
    return hue, np.clip(saturation, 0.0, 1.0), np.clip(lightness, 0.0, 1.0)


def hsl_to_rgb_array(
    hue: np.ndarray, saturation: np.ndarray, lightness: np.ndarray
) -> np.ndarray:
    """
    Vectorised HSL -> RGB conversion, rounded half-up and clamped to [0, 255].

    :param hue: degrees in [0, 360)
    :type hue: numpy.ndarray
    :param saturation: values in [0, 1]
    :type saturation: numpy.ndarray
    :param lightness: values in [0, 1]
    :type lightness: numpy.ndarray
    :return: uint8 array (..., 3)
    :rtype: numpy.ndarray
    """
    hue = np.asarray(hue, dtype=np.float64)
    saturation = np.asarray(saturation, dtype=np.float64)
    lightness = np.asarray(lightness, dtype=np.float64)

    chroma = (1.0 - np.abs(2.0 * lightness - 1.0)) * saturation
    sector = hue / 60.0
    x = chroma * (1.0 - np.abs(np.mod(sector, 2.0) - 1.0))
    m = lightness - chroma / 2.0
    zero = np.zeros_like(chroma)

    index = np.clip(np.floor(sector).astype(np.int64), 0, 5)
    r = np.choose(index, [chroma, x, zero, zero, x, chroma])
    g = np.choose(index, [x, chroma, chroma, x, zero, zero])
    b = np.choose(index, [zero, zero, x, chroma, chroma, x])

    _rgb = np.stack([r + m, g + m, b + m], axis=-1) * MAXVAL
    return np.clip(np.floor(_rgb + 0.5), 0, MAXVAL).astype(np.uint8)


def rgb_to_hsl(r: int, g: int, b: int) -> HslPixel:
    """
    Convert one RGB sample triple to HSL.

    :param r: red sample
    :type r: int
    :param g: green sample
    :type g: int
    :param b: blue sample
    :type b: int
    :return: HSL pixel
    :rtype: HslPixel
    """
    hue, saturation, lightness = rgb_to_hsl_array(np.array([r, g, b]))
    return HslPixel(float(hue), float(saturation), float(lightness))


def hsl_to_rgb(pixel: HslPixel) -> Tuple[int, int, int]:
    """
    Convert one HSL pixel back to RGB samples.

    :param pixel: HSL pixel
    :type pixel: HslPixel
    :return: (r, g, b)
    :rtype: Tuple[int, int, int]
    """
    _rgb = hsl_to_rgb_array(pixel.hue, pixel.saturation, pixel.lightness)
    return int(_rgb[0]), int(_rgb[1]), int(_rgb[2])


_WHITESPACE = b" \t\n\r\v\f"


def _next_token(raw: bytes, offset: int) -> Tuple[bytes, int]:
    """
    Read the next header token, skipping whitespace and '#' comments.
    """
    while offset < len(raw):
        if raw[offset] in _WHITESPACE:
            offset += 1
        elif raw[offset] == ord('#'):
            while offset < len(raw) and raw[offset] not in b"\r\n":
                offset += 1
        else:
            break
    start = offset
    while offset < len(raw) and raw[offset] not in _WHITESPACE and raw[offset] != ord('#'):
        offset += 1
    if start == offset:
        raise MalformedHeader(f"Unexpected end of header at offset {start}.", offset=start)
    return raw[start:offset], offset


def parse_raster(raw: bytes) -> Frame:
    """
    Parse a binary portable pixmap (P6, maxval 255).

    :param raw: file content
    :type raw: bytes
    :return: frame
    :rtype: Frame
    :raises MalformedHeader: if the header cannot be parsed
    :raises UnsupportedMaxval: if maxval is not 255
    :raises TruncatedData: if the body is shorter than width*height*3
    """
    if raw[:2] != b"P6":
        raise MalformedHeader('Missing "P6" magic at offset 0.', offset=0)
    offset = 2
    if offset >= len(raw) or raw[offset] not in _WHITESPACE:
        raise MalformedHeader(f"Expected whitespace at offset {offset}.", offset=offset)

    values = []
    for name in ("width", "height", "maxval"):
        start = offset
        token, offset = _next_token(raw, offset)
        if not re.fullmatch(rb"\d+", token):
            raise MalformedHeader(
                f"Invalid {name} {token!r} at offset {start}.", offset=start
            )
        values.append((int(token), offset - len(token)))
    (width, _), (height, h_offset), (maxval, m_offset) = values

    if width < 1 or height < 1:
        raise MalformedHeader(f"Invalid raster size {width}x{height}.", offset=h_offset)
    if maxval != MAXVAL:
        raise UnsupportedMaxval(
            f"Unsupported maxval {maxval} at offset {m_offset}; only 255 is supported.",
            offset=m_offset
        )
    if offset >= len(raw) or raw[offset] not in _WHITESPACE:
        raise MalformedHeader(f"Expected single whitespace at offset {offset}.", offset=offset)
    offset += 1

    expected = width * height * 3
    body = raw[offset:offset + expected]
    if len(body) < expected:
        raise TruncatedData(
            f"Raster declares {expected} data bytes but only {len(body)} are present "
            f"(data starts at offset {offset}, ends at offset {offset + len(body)}).",
            offset=offset + len(body)
        )
    return Frame.from_bytes(width, height, body)


def encode_raster(frame: Frame) -> bytes:
    """
    Serialise a frame to P6 bytes.

    :param frame: frame
    :type frame: Frame
    :return: file content
    :rtype: bytes
    """
    return f"P6\n{frame.width} {frame.height}\n{MAXVAL}\n".encode('ascii') + frame.to_bytes()


def load_raster(path: str) -> Frame:
    """
    Load a frame from a P6 file.

    :param path: file path
    :type path: str
    :return: frame
    :rtype: Frame
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f'File path "{path}" does not exist.')
    with open(path, 'rb') as file:
        return parse_raster(file.read())


def save_raster(frame: Frame, path: str) -> None:
    """
    Write a frame to a P6 file (atomically).

    :param frame: frame
    :type frame: Frame
    :param path: file path
    :type path: str
    """
    atomic_write(path, encode_raster(frame))


def list_rasters(folder: str) -> List[str]:
    """
    Sorted list of raster file paths inside a folder.

    :param folder: directory holding numbered rasters
    :type folder: str
    :return: list of paths
    :rtype: List[str]
    """
    if not os.path.isdir(folder):
        raise FileNotFoundError(f'Folder "{folder}" does not exist.')
    return [
        os.path.join(folder, name) for name in sorted(os.listdir(folder))
        if name.endswith(RASTER_SUFFIX)
    ]


def load_frames(folder: str) -> List[Tuple[str, Frame]]:
    """
    Load every raster of a frame directory, ordered by file name.

    :param folder: directory holding numbered rasters
    :type folder: str
    :return: list of (frame_id, frame) pairs; frame_id is the file stem
    :rtype: List[Tuple[str, Frame]]
    """
    return [
        (os.path.splitext(os.path.basename(path))[0], load_raster(path))
        for path in list_rasters(folder)
    ]


def frame_name(index: int) -> str:
    return f"{index:06d}"
