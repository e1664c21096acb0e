"""
Adapter for an external video encoder exposing a CRF knob (ffmpeg by default).

Frames travel through temporary P6 files: encoding writes them, runs the
configured encode command and keeps the produced container as the payload;
decoding writes the container back, runs the decode command and reads the
resulting rasters. Argument templates may use ``{input_dir}``,
``{input_pattern}``, ``{input}``, ``{crf}``, ``{fps}``, ``{output}``,
``{output_dir}`` and ``{output_pattern}``.
"""
import os
import tempfile
import threading
import subprocess
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

from eblc.utils.frame import Frame, save_raster, load_frames
from eblc.utils.exceptions import CodecError, CorruptPayload, ExternalEncoderFailure
from eblc.codecs.base import (
    BaseCodec,
    CompressionProfile,
    CompressedSegment,
    DEFAULT_FPS,
)

PATTERN = "frame_%06d.ppm"


@dataclass
class ExternalCodecConfig:
    """
    Configuration of the external encoder. The adapter refuses to run unless
    ``enabled`` is set.
    """
    enabled: bool = False
    executable: str = "ffmpeg"
    encode_args: List[str] = field(default_factory=lambda: [
        "-y", "-loglevel", "error", "-framerate", "{fps}", "-start_number", "0",
        "-i", "{input_pattern}", "-c:v", "libx264", "-pix_fmt", "yuv444p",
        "-crf", "{crf}", "{output}",
    ])
    decode_args: List[str] = field(default_factory=lambda: [
        "-y", "-loglevel", "error", "-i", "{input}", "-start_number", "0", "{output_pattern}",
    ])
    container: str = "mkv"
    timeout: float = 600.0

    @classmethod
    def from_dict(cls, data: dict) -> "ExternalCodecConfig":
        _known = {key: value for key, value in (data or {}).items() if key in cls.__dataclass_fields__}
        return cls(**_known)


class ExternalCodec(BaseCodec):
    """
    Runs the configured executable as a subprocess. Invocations of the same
    executable are serialised.
    """
    codec_id = "external"

    _locks: Dict[str, threading.Lock] = {}
    _locks_guard = threading.Lock()

    def __init__(self, config: ExternalCodecConfig = None, fps: float = DEFAULT_FPS) -> None:
        super().__init__(fps)
        self.config = config or ExternalCodecConfig()

    @classmethod
    def _lock_for(cls, executable: str) -> threading.Lock:
        with cls._locks_guard:
            return cls._locks.setdefault(executable, threading.Lock())

    def _run(self, template: Sequence[str], stage: str, **values) -> None:
        if not self.config.enabled:
            raise CodecError(
                "The external codec is disabled; set external_codec.enabled in the configuration.",
                stage=stage
            )
        command = [self.config.executable] + [arg.format(**values) for arg in template]
        self.logger.debug("Running %s", " ".join(command))
        with self._lock_for(self.config.executable):
            try:
                result = subprocess.run(
                    command, capture_output=True, timeout=self.config.timeout, check=False
                )
            except FileNotFoundError as exc:
                raise ExternalEncoderFailure(
                    f"Executable {self.config.executable!r} not found.", returncode=None, stage=stage
                ) from exc
            except subprocess.TimeoutExpired as exc:
                raise ExternalEncoderFailure(
                    f"{self.config.executable} timed out after {self.config.timeout} s.",
                    returncode=None, stage=stage
                ) from exc
        if result.returncode != 0:
            _stderr = result.stderr.decode('utf-8', errors='replace').strip().splitlines()
            raise ExternalEncoderFailure(
                f"{self.config.executable} exited with status {result.returncode}"
                + (f": {_stderr[-1]}" if _stderr else "."),
                returncode=result.returncode,
                stage=stage
            )

    def _encode(self, frames: List[Frame], profile: CompressionProfile) -> CompressedSegment:
        width, height = frames[0].shape
        with tempfile.TemporaryDirectory(prefix="eblc-enc-") as workdir:
            input_dir = os.path.join(workdir, "frames")
            os.makedirs(input_dir)
            for index, frame in enumerate(frames):
                save_raster(frame, os.path.join(input_dir, PATTERN % index))
            output = os.path.join(workdir, f"segment.{self.config.container}")
            self._run(
                self.config.encode_args,
                stage='codec',
                input_dir=input_dir,
                input_pattern=os.path.join(input_dir, PATTERN),
                input=input_dir,
                crf=profile.crf,
                fps=self.fps,
                output=output,
                output_dir=workdir,
                output_pattern=output,
            )
            if not os.path.isfile(output):
                raise ExternalEncoderFailure(
                    f"{self.config.executable} produced no output file.", returncode=0, stage='codec'
                )
            with open(output, 'rb') as file:
                payload = file.read()
        return CompressedSegment(
            profile=profile,
            payload=payload,
            frame_count=len(frames),
            width=width,
            height=height,
            fps=self.fps,
        )

    def decode(self, seg: CompressedSegment) -> List[Frame]:
        """
        Decode a segment produced by :meth:`encode`.

        :raises CorruptPayload: if the decoder yields a different frame count or size
        """
        with tempfile.TemporaryDirectory(prefix="eblc-dec-") as workdir:
            source = os.path.join(workdir, f"segment.{self.config.container}")
            with open(source, 'wb') as file:
                file.write(seg.payload)
            output_dir = os.path.join(workdir, "frames")
            os.makedirs(output_dir)
            self._run(
                self.config.decode_args,
                stage='codec',
                input=source,
                input_dir=workdir,
                input_pattern=source,
                crf=seg.profile.crf,
                fps=seg.fps,
                output=output_dir,
                output_dir=output_dir,
                output_pattern=os.path.join(output_dir, PATTERN),
            )
            frames = [frame for _, frame in load_frames(output_dir)]
        if len(frames) != seg.frame_count:
            raise CorruptPayload(
                f"Decoder produced {len(frames)} frames, expected {seg.frame_count}.", stage='codec'
            )
        for frame in frames:
            if frame.shape != (seg.width, seg.height):
                raise CorruptPayload(
                    f"Decoder produced a {frame.width}x{frame.height} frame, "
                    f"expected {seg.width}x{seg.height}.",
                    stage='codec'
                )
        return frames
