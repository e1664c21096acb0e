import logging
from dataclasses import dataclass
from typing import List, Sequence

from eblc.utils.frame import Frame
from eblc.utils.exceptions import (
    InvalidProfile,
    EmptySequence,
    MixedDimensions,
)

CRF_MIN = 0
CRF_MAX = 51
DEFAULT_FPS = 10.0


@dataclass(frozen=True)
class CompressionProfile:
    """
    Codec choice plus its Constant Rate Factor. CRF 0 means no compression and
    CRF 51 the strongest compression.
    """
    codec_id: str = "builtin"
    crf: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.crf, bool) or not isinstance(self.crf, int):
            raise InvalidProfile(f"CRF must be an integer, got {self.crf!r}.", stage='codec')
        if not CRF_MIN <= self.crf <= CRF_MAX:
            raise InvalidProfile(
                f"CRF must lie in [{CRF_MIN}, {CRF_MAX}], got {self.crf}.", stage='codec'
            )

    def __str__(self) -> str:
        return f"{self.codec_id}@crf{self.crf}"


@dataclass(frozen=True)
class CompressedSegment:
    profile: CompressionProfile
    payload: bytes
    frame_count: int
    width: int
    height: int
    fps: float = DEFAULT_FPS

    @property
    def duration(self) -> float:
        return self.frame_count / self.fps

    def __len__(self) -> int:
        return len(self.payload)


@dataclass(frozen=True)
class BitrateReport:
    bits_total: int
    duration: float
    bitrate: float

    def to_dict(self) -> dict:
        return {
            'bits_total': self.bits_total,
            'duration': self.duration,
            'bitrate': self.bitrate,
        }


def measure_bitrate(seg: CompressedSegment, fps: float = None) -> BitrateReport:
    """
    Bitrate of a segment in Mbit/s. The payload length already includes any
    container header the codec writes.

    :param seg: compressed segment
    :type seg: CompressedSegment
    :param fps: frames per second, defaults to the segment's own rate
    :type fps: float
    :return: bitrate report
    :rtype: BitrateReport
    """
    _fps = seg.fps if fps is None else fps
    if _fps <= 0:
        raise ValueError(f"Frame rate must be positive, got {_fps}.")
    bits = 8 * len(seg.payload)
    duration = seg.frame_count / _fps
    return BitrateReport(bits_total=bits, duration=duration, bitrate=bits / duration / 1e6)


class BaseCodec:
    """
    Base class for codecs. A codec turns a non-empty sequence of equally sized
    frames into one :class:`CompressedSegment` and back. Subclasses set
    ``codec_id`` and implement :meth:`_encode` and :meth:`decode`.
    """
    codec_id = ""

    def __init__(self, fps: float = DEFAULT_FPS) -> None:
        self.fps = fps
        self.logger = logging.getLogger(self.__class__.__name__)

    def profile(self, crf: int) -> CompressionProfile:
        return CompressionProfile(self.codec_id, crf)

    def check_frames(self, frames: Sequence[Frame]) -> None:
        """
        :raises EmptySequence: if there is nothing to encode
        :raises MixedDimensions: if the frames differ in size
        """
        if len(frames) == 0:
            raise EmptySequence("Cannot encode an empty frame sequence.", stage='codec')
        _shape = frames[0].shape
        for index, frame in enumerate(frames):
            if frame.shape != _shape:
                raise MixedDimensions(
                    f"Frame {index} is {frame.width}x{frame.height}, "
                    f"expected {_shape[0]}x{_shape[1]}.",
                    stage='codec'
                )

    def encode(self, frames: Sequence[Frame], profile: CompressionProfile) -> CompressedSegment:
        """
        Encode frames with the given profile.

        :param frames: non-empty sequence of equally sized frames
        :type frames: Sequence[Frame]
        :param profile: compression profile; its codec_id must name this codec
        :type profile: CompressionProfile
        :return: compressed segment
        :rtype: CompressedSegment
        """
        if profile.codec_id != self.codec_id:
            raise InvalidProfile(
                f"Profile for codec {profile.codec_id!r} passed to {self.codec_id!r}.", stage='codec'
            )
        self.check_frames(frames)
        return self._encode(list(frames), profile)

    def _encode(self, frames: List[Frame], profile: CompressionProfile) -> CompressedSegment:
        raise NotImplementedError

    def decode(self, seg: CompressedSegment) -> List[Frame]:
        raise NotImplementedError

    def roundtrip(self, frames: Sequence[Frame], crf: int) -> List[Frame]:
        return self.decode(self.encode(frames, self.profile(crf)))

    def __repr__(self) -> str:
        return self.codec_id
