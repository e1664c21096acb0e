"""
Feedback-based real-time compression loop.

Every N-th frame the classifier votes on the environmental condition; the
active condition changes only when a strict majority of the last M votes
agrees on a different one. Each frame is compressed at the reference-table
CRF of the active condition, decoded and passed to the detector calibrated for
that (condition, crf) pair.
"""
import re
import math
import logging
from collections import Counter
from dataclasses import dataclass, asdict, field, replace
from typing import List, Optional, Sequence, Tuple

from eblc.calibrate import ReferenceTable
from eblc.classifiers.base import BaseClassifier
from eblc.codecs import BaseCodec, BuiltinCodec
from eblc.detectors.base import Annotation, Detection, MatchResult, match
from eblc.detectors.contrast import ContrastCalibration, ContrastDetector
from eblc.utils import status as st
from eblc.utils.conditions import EnvCondition
from eblc.utils.exceptions import ControllerError, ZeroCompressedSize, MalformedReport
from eblc.utils.frame import Frame, frame_name
from eblc.utils.metrics import psnr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControllerConfig:
    """
    :param classify_every: classification cadence N in frames
    :param vote_window: number M of most recent votes considered for a switch
    """
    classify_every: int = 10
    vote_window: int = 3

    def __post_init__(self) -> None:
        if self.classify_every < 1 or self.vote_window < 1:
            raise ControllerError("classify_every and vote_window must be positive.", stage='controller')

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        return cls(**{key: value for key, value in (data or {}).items() if key in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ControllerState:
    active_condition: EnvCondition
    active_crf: int
    active_model_id: Optional[str]
    frames_since_classify: int
    classify_window: Tuple[EnvCondition, ...]
    fallback: bool = False


@dataclass(frozen=True)
class StepReport:
    frame_id: str
    condition: EnvCondition
    crf: int
    psnr: float
    detections: int
    accuracy: Optional[float]
    compressed_bits: int
    raw_bits: int
    bandwidth_reduction: float
    model_id: Optional[str]
    status: st._Status
    tp: Optional[int] = None
    fp: Optional[int] = None
    fn: Optional[int] = None
    true_condition: Optional[EnvCondition] = None
    fallback: bool = False
    boxes: Tuple[Detection, ...] = field(default=(), compare=False, repr=False)

    def to_dict(self) -> dict:
        _dict = asdict(self)
        del _dict['boxes']
        _dict['condition'] = self.condition.value
        _dict['true_condition'] = None if self.true_condition is None else self.true_condition.value
        _dict['status'] = str(self.status)
        if math.isinf(self.psnr):
            _dict['psnr'] = "Infinity"
        return _dict

    @classmethod
    def from_dict(cls, data: dict) -> "StepReport":
        """
        Rebuild a report from its JSON form.

        :raises MalformedReport: on missing or invalid fields
        """
        try:
            _true = data.get('true_condition')
            return cls(
                frame_id=str(data['frame_id']),
                condition=EnvCondition.parse(data['condition']),
                crf=int(data['crf']),
                psnr=float(data['psnr']),
                detections=int(data['detections']),
                accuracy=None if data.get('accuracy') is None else float(data['accuracy']),
                compressed_bits=int(data['compressed_bits']),
                raw_bits=int(data['raw_bits']),
                bandwidth_reduction=float(data['bandwidth_reduction']),
                model_id=data.get('model_id'),
                status=st._Status(status=str(data.get('status', ''))),
                tp=None if data.get('tp') is None else int(data['tp']),
                fp=None if data.get('fp') is None else int(data['fp']),
                fn=None if data.get('fn') is None else int(data['fn']),
                true_condition=None if _true is None else EnvCondition.parse(_true),
                fallback=bool(data.get('fallback', False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedReport(f"Invalid step report: {exc}", stage='evaluate') from exc


def bandwidth_reduction(raw_bits: float, compressed_bits: float) -> float:
    """
    Uncompressed size divided by compressed size.

    :raises ZeroCompressedSize: if compressed_bits is not positive
    """
    if compressed_bits <= 0:
        raise ZeroCompressedSize("Compressed size must be positive.", stage='controller')
    if raw_bits <= 0:
        raise ControllerError("Raw size must be positive.", stage='controller')
    return raw_bits / compressed_bits


@dataclass(frozen=True)
class ReductionCheck:
    computed: float
    printed: float
    consistent: bool
    notation_mapped: bool


_FACTOR = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*[×xX]?\s*$")


def reconcile_reduction(
    raw_mbps: float, required_mbps: float, printed: str, tolerance: float = 0.1
) -> ReductionCheck:
    """
    Recompute a published bandwidth-reduction factor and compare it with the
    printed one. A printed "0×" for an uncompressed row means a factor of 1.
    The two agree when they differ by at most ``tolerance`` times the printed
    factor.

    :param raw_mbps: uncompressed bitrate
    :type raw_mbps: float
    :param required_mbps: bitrate after compression
    :type required_mbps: float
    :param printed: printed factor, e.g. "9.5×"
    :type printed: str
    :param tolerance: accepted difference relative to the printed factor
    :type tolerance: float
    :return: comparison result; ``consistent`` is False for a discrepancy
    :rtype: ReductionCheck
    """
    _match = _FACTOR.match(printed)
    if _match is None:
        raise MalformedReport(f"Cannot parse reduction factor {printed!r}.", stage='evaluate')
    computed = bandwidth_reduction(raw_mbps, required_mbps)
    value = float(_match.group(1))
    mapped = value == 0
    if mapped:
        value = 1.0
    consistent = abs(computed - value) <= tolerance * value
    if not consistent:
        logger.warning(
            "Printed reduction %s disagrees with computed %.2fx (%.2f / %.2f).",
            printed.strip(), computed, raw_mbps, required_mbps
        )
    return ReductionCheck(computed=computed, printed=value, consistent=consistent, notation_mapped=mapped)


class EBLCController:
    """
    Single-stream controller. State lives in immutable :class:`ControllerState`
    values, so :meth:`step` is a pure function of its inputs.
    """
    def __init__(
        self,
        table: ReferenceTable,
        classifier: BaseClassifier,
        codec: BaseCodec = None,
        detector: ContrastDetector = None,
        config: ControllerConfig = None,
        verbosity: int = 1,
    ) -> None:
        self.table = table
        self.classifier = classifier
        self.codec = codec or BuiltinCodec()
        self.detector = detector or ContrastDetector()
        self.config = config or ControllerConfig()
        self.logger = logging.getLogger(self.__class__.__name__)
        self._verbosity = verbosity

    def profile_for(self, condition: EnvCondition) -> Tuple[int, Optional[str], bool]:
        """
        CRF and detector model for a condition; CRF 0 with the fallback flag
        set when the table has no valid CRF for it.
        """
        entry = self.table.lookup(condition)
        if entry.max_crf is None:
            return 0, None, True
        return entry.max_crf, entry.model_id, False

    def initialize(self, frame: Frame) -> ControllerState:
        """
        Classify the first frame and fill the vote window with its condition.
        A classifier failure starts the stream in Normal.
        """
        try:
            condition = self.classifier.predict(frame)
        except Exception as exc:  # pylint: disable=broad-except
            self.logger.warning("Classifier failed on the first frame (%s); starting in normal.", exc)
            condition = EnvCondition.NORMAL
        crf, model_id, fallback = self.profile_for(condition)
        return ControllerState(
            active_condition=condition,
            active_crf=crf,
            active_model_id=model_id,
            frames_since_classify=0,
            classify_window=(condition,) * self.config.vote_window,
            fallback=fallback,
        )

    def _vote(self, frame: Frame, state: ControllerState) -> Tuple[ControllerState, st._Status]:
        try:
            vote = self.classifier.predict(frame)
        except Exception as exc:  # pylint: disable=broad-except
            return state, st.ClassifierFailed(message=f"{exc.__class__.__name__}: {exc}")
        window = (state.classify_window + (vote,))[-self.config.vote_window:]
        state = replace(state, classify_window=window)
        leader, votes = Counter(window).most_common(1)[0]
        if leader is not state.active_condition and votes * 2 > len(window):
            crf, model_id, fallback = self.profile_for(leader)
            return replace(
                state, active_condition=leader, active_crf=crf, active_model_id=model_id, fallback=fallback
            ), st.Switched(message=f"Switched to {leader} at crf {crf}.")
        return state, st.Classified()

    def _model(self, model_id: Optional[str]) -> ContrastCalibration:
        return self.table.model(model_id)

    def step(
        self,
        frame: Frame,
        state: ControllerState,
        annotations: Optional[Sequence[Annotation]] = None,
        frame_id: str = "",
        true_condition: Optional[EnvCondition] = None,
    ) -> Tuple[StepReport, ControllerState]:
        """
        Process one frame with the active profile, then (every N-th frame)
        classify it. A condition switch applies from the next frame on.

        :param frame: frame to transmit
        :type frame: Frame
        :param state: controller state before this frame
        :type state: ControllerState
        :param annotations: ground truth of the frame, if known
        :type annotations: Optional[Sequence[Annotation]]
        :param frame_id: identifier copied into the report
        :type frame_id: str
        :param true_condition: scheduled condition of the frame, if known
        :type true_condition: Optional[EnvCondition]
        :return: report for this frame and the state for the next one
        :rtype: Tuple[StepReport, ControllerState]
        """
        report = transmit(
            frame,
            crf=state.active_crf,
            codec=self.codec,
            detector=self.detector,
            calibration=self._model(state.active_model_id),
            condition=state.active_condition,
            model_id=state.active_model_id,
            annotations=annotations,
            frame_id=frame_id,
            true_condition=true_condition,
        )
        status = st.FallbackCrf() if state.fallback else st.Ok()
        next_state = state
        if state.frames_since_classify == 0:
            next_state, _voted = self._vote(frame, state)
            if not isinstance(_voted, st.Classified) or not state.fallback:
                status = _voted
            if isinstance(_voted, st.ClassifierFailed):
                self.logger.warning("Classifier failed on frame %s: %s", frame_id, _voted.message)
            elif isinstance(_voted, st.Switched) and self._verbosity > 0:
                self.logger.info('INFO: %s: frame %s: %s', self.logger.name, frame_id, _voted.message)
        next_state = replace(
            next_state, frames_since_classify=(state.frames_since_classify + 1) % self.config.classify_every
        )
        return replace(report, status=status, fallback=state.fallback), next_state

    def run(
        self,
        frames: Sequence[Frame],
        annotations: Optional[Sequence[Sequence[Annotation]]] = None,
        frame_ids: Optional[Sequence[str]] = None,
        schedule: Optional[Sequence[EnvCondition]] = None,
    ) -> List[StepReport]:
        """
        Run the controller over a whole stream.

        :param frames: frames in stream order
        :type frames: Sequence[Frame]
        :param annotations: per-frame ground truth, optional
        :type annotations: Optional[Sequence[Sequence[Annotation]]]
        :param frame_ids: per-frame identifiers, defaults to zero-padded indices
        :type frame_ids: Optional[Sequence[str]]
        :param schedule: per-frame scheduled condition, optional
        :type schedule: Optional[Sequence[EnvCondition]]
        :return: one report per frame, in frame order
        :rtype: List[StepReport]
        """
        if not frames:
            return []
        state = self.initialize(frames[0])
        reports = []
        for index, frame in enumerate(frames):
            report, state = self.step(
                frame,
                state,
                annotations=None if annotations is None else annotations[index],
                frame_id=frame_ids[index] if frame_ids else frame_name(index),
                true_condition=None if schedule is None else schedule[index],
            )
            reports.append(report)
            if self._verbosity > 1 and (index + 1) % 100 == 0:
                self.logger.info(
                    'INFO: %s (%d/%d): processed, active condition %s.',
                    self.logger.name, index + 1, len(frames), state.active_condition
                )
        return reports


def transmit(
    frame: Frame,
    crf: int,
    codec: BaseCodec,
    detector: ContrastDetector,
    calibration: ContrastCalibration,
    condition: EnvCondition,
    model_id: Optional[str],
    annotations: Optional[Sequence[Annotation]] = None,
    frame_id: str = "",
    true_condition: Optional[EnvCondition] = None,
) -> StepReport:
    """
    Compress, decode and run detection on one frame.
    """
    segment = codec.encode([frame], codec.profile(crf))
    decoded = codec.decode(segment)[0]
    detections = detector.detect(decoded, calibration)
    compressed_bits = 8 * len(segment.payload)
    raw_bits = 8 * frame.width * frame.height * frame.channels
    accuracy = tp = fp = fn = None
    if annotations is not None:
        result: MatchResult = match(detections, annotations, detector.config.match_iou)
        tp, fp, fn = result.tp, result.fp, result.fn
        if tp + fn > 0:
            accuracy = result.recall
    return StepReport(
        frame_id=frame_id,
        condition=condition,
        crf=crf,
        psnr=psnr(frame, decoded),
        detections=len(detections),
        accuracy=accuracy,
        compressed_bits=compressed_bits,
        raw_bits=raw_bits,
        bandwidth_reduction=bandwidth_reduction(raw_bits, compressed_bits),
        model_id=model_id,
        status=st.Ok(),
        tp=tp,
        fp=fp,
        fn=fn,
        true_condition=true_condition,
        boxes=tuple(detections),
    )


def run_static_baseline(
    frames: Sequence[Frame],
    fixed_crf: int,
    detector: ContrastDetector = None,
    table: Optional[ReferenceTable] = None,
    codec: BaseCodec = None,
    annotations: Optional[Sequence[Sequence[Annotation]]] = None,
    frame_ids: Optional[Sequence[str]] = None,
    schedule: Optional[Sequence[EnvCondition]] = None,
) -> List[StepReport]:
    """
    The same pipeline with classification disabled: every frame is sent at
    ``fixed_crf`` and detected with the Normal-condition calibration for that
    CRF (default thresholds when the table has none).

    :param frames: frames in stream order
    :type frames: Sequence[Frame]
    :param fixed_crf: pinned CRF
    :type fixed_crf: int
    :return: one report per frame
    :rtype: List[StepReport]
    """
    codec = codec or BuiltinCodec()
    detector = detector or ContrastDetector()
    codec.profile(fixed_crf)
    if table is not None:
        calibration = table.model_for(EnvCondition.NORMAL, fixed_crf)
    else:
        calibration = ContrastCalibration()
    return [
        transmit(
            frame,
            crf=fixed_crf,
            codec=codec,
            detector=detector,
            calibration=calibration,
            condition=EnvCondition.NORMAL,
            model_id=calibration.model_id,
            annotations=None if annotations is None else annotations[index],
            frame_id=frame_ids[index] if frame_ids else frame_name(index),
            true_condition=None if schedule is None else schedule[index],
        )
        for index, frame in enumerate(frames)
    ]
