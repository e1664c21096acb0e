"""
Deterministic reference codec: uniform scalar quantisation followed by PackBits
run-length coding.

Payload layout, all integers big-endian::

    0   4s  magic "EBLC"
    4   B   format version (1)
    5   B   codec id (1 = built-in)
    6   B   crf
    7   I   width
    11  I   height
    15  I   frame count
    19  13x zero padding up to 32 bytes
    32  ... PackBits stream of the row-major quantised samples of all frames

PackBits control byte ``h``: 0..127 copies the next ``h + 1`` bytes literally,
129..255 repeats the next byte ``257 - h`` times, 128 is never written.
"""
import struct
from typing import List

import numpy as np

from eblc.utils.frame import Frame, MAXVAL
from eblc.utils.exceptions import CorruptPayload
from eblc.codecs.base import (
    BaseCodec,
    CompressionProfile,
    CompressedSegment,
)

MAGIC = b"EBLC"
VERSION = 1
BUILTIN_CODEC_BYTE = 1
HEADER = struct.Struct(">4sBBBIII13x")
HEADER_SIZE = HEADER.size

_MAX_RUN = 128
_MIN_RUN = 3


def quantization_step(crf: int) -> int:
    return 1 + crf


def quantize(samples: np.ndarray, crf: int) -> np.ndarray:
    """
    Map every sample v to clamp(round(v / q) * q, 0, 255) with q = 1 + crf,
    rounding halves up.

    :param samples: uint8 samples
    :type samples: numpy.ndarray
    :param crf: constant rate factor
    :type crf: int
    :return: quantised uint8 samples
    :rtype: numpy.ndarray
    """
    step = quantization_step(crf)
    if step == 1:
        return np.asarray(samples, dtype=np.uint8)
    _levels = np.floor(np.asarray(samples, dtype=np.float64) / step + 0.5) * step
    return np.clip(_levels, 0, MAXVAL).astype(np.uint8)


def _chunk(starts: np.ndarray, lengths: np.ndarray) -> tuple:
    # split spans into pieces of at most _MAX_RUN bytes, preserving order
    pieces = -(-lengths // _MAX_RUN)
    owner = np.repeat(np.arange(starts.size), pieces)
    first = np.cumsum(pieces) - pieces
    rank = np.arange(owner.size) - np.repeat(first, pieces)
    offset = rank * _MAX_RUN
    return starts[owner] + offset, np.minimum(_MAX_RUN, lengths[owner] - offset), owner


def packbits_encode(data: bytes) -> bytes:
    """
    PackBits-encode a byte string. Runs of three or more equal bytes become
    repeat packets of at most 128 bytes; a run tail shorter than three bytes
    and every shorter run are grouped into literal packets of at most 128 bytes.
    """
    _array = np.frombuffer(data, dtype=np.uint8)
    size = _array.size
    if size == 0:
        return b""
    starts = np.concatenate(([0], np.flatnonzero(np.diff(_array)) + 1))
    lengths = np.diff(np.concatenate((starts, [size])))

    tail = np.where(lengths >= _MIN_RUN, lengths % _MAX_RUN, lengths)
    tail = np.where((lengths >= _MIN_RUN) & (tail >= _MIN_RUN), 0, tail)
    covered = lengths - tail

    _runs = np.flatnonzero(covered)
    rep_start, rep_count, _owner = _chunk(starts[_runs], covered[_runs])
    rep_value = _array[starts[_runs]][_owner]

    _position = np.arange(size) - np.repeat(starts, lengths)
    literal = np.flatnonzero(_position >= np.repeat(covered, lengths))
    if literal.size:
        _breaks = np.flatnonzero(np.diff(literal) != 1) + 1
        span_start = literal[np.concatenate(([0], _breaks))]
        span_length = np.diff(np.concatenate(([0], _breaks, [literal.size])))
        lit_start, lit_count, _ = _chunk(span_start, span_length)
    else:
        lit_start = lit_count = np.zeros(0, dtype=np.int64)

    packet_start = np.concatenate((rep_start, lit_start))
    is_repeat = np.concatenate((np.ones(rep_start.size, bool), np.zeros(lit_start.size, bool)))
    packet_size = np.where(is_repeat, 2, 1 + np.concatenate((np.zeros(rep_start.size, np.int64), lit_count)))
    order = np.argsort(packet_start, kind='stable')
    _out_start = np.empty(order.size, dtype=np.int64)
    _out_start[order] = np.concatenate(([0], np.cumsum(packet_size[order])[:-1]))

    out = np.empty(int(packet_size.sum()), dtype=np.uint8)
    rep_out = _out_start[:rep_start.size]
    lit_out = _out_start[rep_start.size:]
    out[rep_out] = 257 - rep_count
    out[rep_out + 1] = rep_value
    out[lit_out] = lit_count - 1
    out[np.repeat(lit_out + 1 - lit_start, lit_count) + literal] = _array[literal]
    return out.tobytes()


def packbits_decode(data: bytes, expected: int) -> bytes:
    """
    Decode a PackBits stream that must expand to exactly ``expected`` bytes.

    :raises CorruptPayload: on truncated packets or a length mismatch
    """
    size = len(data)
    literals, repeats = [], []
    produced = 0
    offset = 0
    while offset < size and produced <= expected:
        header = data[offset]
        if header < 128:
            if offset + header + 2 > size:
                raise CorruptPayload(
                    f"Literal packet at offset {offset} runs past the end of the payload.",
                    stage='codec'
                )
            literals.append((produced, offset + 1, header + 1))
            produced += header + 1
            offset += header + 2
        elif header > 128:
            if offset + 1 >= size:
                raise CorruptPayload(
                    f"Repeat packet at offset {offset} has no value byte.", stage='codec'
                )
            repeats.append((produced, data[offset + 1], 257 - header))
            produced += 257 - header
            offset += 2
        else:
            raise CorruptPayload(f"Invalid control byte 128 at offset {offset}.", stage='codec')
    if produced != expected or offset != size:
        raise CorruptPayload(
            f"Payload expands to at least {produced} samples, expected {expected}.", stage='codec'
        )

    source = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(expected, dtype=np.uint8)
    if literals:
        _dst, _src, _count = (np.array(column, dtype=np.int64) for column in zip(*literals))
        _shift = np.repeat(_src - _dst, _count)
        _target = np.arange(_count.sum()) + np.repeat(_dst - (np.cumsum(_count) - _count), _count)
        out[_target] = source[_target + _shift]
    if repeats:
        _dst, _value, _count = (np.array(column, dtype=np.int64) for column in zip(*repeats))
        _target = np.arange(_count.sum()) + np.repeat(_dst - (np.cumsum(_count) - _count), _count)
        out[_target] = np.repeat(_value, _count).astype(np.uint8)
    return out.tobytes()


class BuiltinCodec(BaseCodec):
    """
    Quantise-then-RLE codec. Both PSNR and payload size shrink monotonically
    as the CRF grows; CRF 0 is lossless.
    """
    codec_id = "builtin"

    def _encode(self, frames: List[Frame], profile: CompressionProfile) -> CompressedSegment:
        width, height = frames[0].shape
        samples = np.concatenate([frame.data.reshape(-1) for frame in frames])
        body = packbits_encode(quantize(samples, profile.crf).tobytes())
        header = HEADER.pack(MAGIC, VERSION, BUILTIN_CODEC_BYTE, profile.crf, width, height, len(frames))
        self.logger.debug(
            "Encoded %d frames at %s into %d bytes.", len(frames), profile, HEADER_SIZE + len(body)
        )
        return CompressedSegment(
            profile=profile,
            payload=header + body,
            frame_count=len(frames),
            width=width,
            height=height,
            fps=self.fps,
        )

    @staticmethod
    def read_header(payload: bytes) -> tuple:
        """
        Validate and unpack the fixed header.

        :return: (crf, width, height, frame_count)
        :rtype: tuple
        """
        if len(payload) < HEADER_SIZE:
            raise CorruptPayload(
                f"Payload of {len(payload)} bytes is shorter than the {HEADER_SIZE} byte header.",
                stage='codec'
            )
        magic, version, codec_byte, crf, width, height, count = HEADER.unpack_from(payload)
        if magic != MAGIC:
            raise CorruptPayload(f"Bad magic {magic!r}.", stage='codec')
        if version != VERSION or codec_byte != BUILTIN_CODEC_BYTE:
            raise CorruptPayload(
                f"Unsupported version {version} or codec byte {codec_byte}.", stage='codec'
            )
        if width < 1 or height < 1 or count < 1:
            raise CorruptPayload("Header declares an empty segment.", stage='codec')
        return crf, width, height, count

    def decode(self, seg: CompressedSegment) -> List[Frame]:
        """
        Decode a built-in segment.

        :param seg: compressed segment
        :type seg: CompressedSegment
        :return: decoded frames
        :rtype: List[Frame]
        :raises CorruptPayload: on a damaged header, truncated stream or size mismatch
        """
        _, width, height, count = self.read_header(seg.payload)
        frame_size = width * height * 3
        samples = packbits_decode(seg.payload[HEADER_SIZE:], frame_size * count)
        _array = np.frombuffer(samples, dtype=np.uint8).reshape(count, height, width, 3)
        return [Frame(_array[index]) for index in range(count)]
