from typing import Sequence

from eblc.utils.frame import Frame
from eblc.utils.metrics import segment_quality
from eblc.utils.exceptions import InvalidProfile
from .base import (
    BaseCodec,
    BitrateReport,
    CompressedSegment,
    CompressionProfile,
    measure_bitrate,
    CRF_MIN,
    CRF_MAX,
    DEFAULT_FPS,
)
from .builtin import BuiltinCodec
from .external import ExternalCodec, ExternalCodecConfig

CODECS = {
    BuiltinCodec.codec_id: BuiltinCodec,
    ExternalCodec.codec_id: ExternalCodec,
}


def get_codec(
    codec_id: str = BuiltinCodec.codec_id,
    external: ExternalCodecConfig = None,
    fps: float = DEFAULT_FPS,
) -> BaseCodec:
    """
    Instantiate a codec by identifier.

    :param codec_id: "builtin" or "external"
    :type codec_id: str
    :param external: configuration used by the external adapter
    :type external: ExternalCodecConfig
    :param fps: frame rate stamped on produced segments
    :type fps: float
    :return: codec instance
    :rtype: BaseCodec
    """
    if codec_id not in CODECS:
        raise InvalidProfile(
            f"Unknown codec {codec_id!r}; choose from {', '.join(sorted(CODECS))}.", stage='codec'
        )
    if codec_id == ExternalCodec.codec_id:
        return ExternalCodec(external, fps=fps)
    return CODECS[codec_id](fps=fps)


def crf_to_psnr(corpus: Sequence[Frame], codec: BaseCodec, crf: int) -> float:
    """
    Measured mean PSNR of a corpus after a round trip through ``codec`` at ``crf``.

    :param corpus: reference frames
    :type corpus: Sequence[Frame]
    :param codec: codec instance
    :type codec: BaseCodec
    :param crf: constant rate factor
    :type crf: int
    :return: PSNR in dB, infinite for a lossless round trip
    :rtype: float
    """
    return segment_quality(corpus, codec.roundtrip(corpus, crf), with_ssim=False).psnr
