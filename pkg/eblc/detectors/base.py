import logging
from dataclasses import dataclass, asdict
from typing import Any, List, Sequence

from eblc.utils.frame import Frame
from eblc.utils.exceptions import DetectorError, NoGroundTruth

PERSON = "person"


@dataclass(frozen=True)
class BBox:
    """
    Axis-aligned box in pixel coordinates, half-open: it covers columns
    ``x_min .. x_max - 1`` and rows ``y_min .. y_max - 1``.
    """
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DetectorError(
                f"Degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max}).",
                stage='detect'
            )

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_tuple(self) -> tuple:
        return self.x_min, self.y_min, self.x_max, self.y_max


@dataclass(frozen=True)
class Detection:
    box: BBox
    score: float
    class_label: str = PERSON

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DetectorError(f"Detection score {self.score} outside [0, 1].", stage='detect')

    def to_dict(self) -> dict:
        _dict = asdict(self.box)
        _dict['score'] = self.score
        _dict['class_label'] = self.class_label
        return _dict


@dataclass(frozen=True)
class Annotation:
    box: BBox
    class_label: str = PERSON
    frame_id: str = ""


@dataclass(frozen=True)
class DetectorConfig:
    """
    :param input_size: side of the square the detector resizes frames to
    :param nms_iou_threshold: overlap at which the weaker of two detections is dropped
    :param score_threshold: detections scoring below this are discarded
    :param match_iou: minimum overlap for a detection to count as a hit
    """
    input_size: int = 416
    nms_iou_threshold: float = 0.5
    score_threshold: float = 0.0
    match_iou: float = 0.5

    def __post_init__(self) -> None:
        if self.input_size <= 0:
            raise DetectorError("input_size must be positive.", stage='detect')
        for name in ('nms_iou_threshold', 'score_threshold'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise DetectorError(f"{name} must lie in [0, 1].", stage='detect')
        if not 0.0 < self.match_iou <= 1.0:
            raise DetectorError("match_iou must lie in (0, 1].", stage='detect')

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        return cls(**{key: value for key, value in (data or {}).items() if key in cls.__dataclass_fields__})


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int

    def __add__(self, other: "MatchResult") -> "MatchResult":
        return MatchResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        _found = self.tp + self.fp
        return self.tp / _found if _found else 0.0

    @property
    def recall(self) -> float:
        return detection_accuracy(self.tp, self.fp, self.fn)

    @property
    def f1(self) -> float:
        _p, _r = self.precision, self.recall
        return 2 * _p * _r / (_p + _r) if (_p + _r) else 0.0


def iou(a: BBox, b: BBox) -> float:
    """
    Intersection over union of two boxes, 0 when they are disjoint.

    :param a: first box
    :type a: BBox
    :param b: second box
    :type b: BBox
    :return: overlap in [0, 1]
    :rtype: float
    """
    width = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    height = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (a.area + b.area - intersection)


def _by_score(dets: Sequence[Detection]) -> List[int]:
    # sorted() is stable, so equal scores keep input order
    return sorted(range(len(dets)), key=lambda index: -dets[index].score)


def nms(dets: Sequence[Detection], iou_threshold: float) -> List[Detection]:
    """
    Greedy non-maximum suppression. The highest-scoring remaining detection is
    kept and every remaining detection overlapping it by ``iou_threshold`` or
    more is dropped; equal scores keep their input order.

    :param dets: detections
    :type dets: Sequence[Detection]
    :param iou_threshold: suppression overlap in [0, 1]
    :type iou_threshold: float
    :return: survivors sorted by descending score
    :rtype: List[Detection]
    """
    kept: List[Detection] = []
    for index in _by_score(dets):
        candidate = dets[index]
        if all(iou(candidate.box, survivor.box) < iou_threshold for survivor in kept):
            kept.append(candidate)
    return kept


def match(dets: Sequence[Detection], truths: Sequence[Annotation], iou_min: float = 0.5) -> MatchResult:
    """
    Greedy score-ordered matching of detections to ground truth.

    Each detection, strongest first, takes the unmatched truth of its class
    with the highest overlap of at least ``iou_min``; ties go to the lowest
    truth index.

    :param dets: detections
    :type dets: Sequence[Detection]
    :param truths: ground-truth annotations
    :type truths: Sequence[Annotation]
    :param iou_min: minimum overlap in (0, 1]
    :type iou_min: float
    :return: true positives, false positives and false negatives
    :rtype: MatchResult
    """
    taken = [False] * len(truths)
    tp = 0
    for index in _by_score(dets):
        det = dets[index]
        best, best_iou = None, iou_min
        for position, truth in enumerate(truths):
            if taken[position] or truth.class_label != det.class_label:
                continue
            overlap = iou(det.box, truth.box)
            if overlap > best_iou or (best is None and overlap >= iou_min):
                best, best_iou = position, overlap
        if best is not None:
            taken[best] = True
            tp += 1
    return MatchResult(tp=tp, fp=len(dets) - tp, fn=len(truths) - tp)


def detection_accuracy(tp: int, fp: int, fn: int) -> float:
    """
    Detection accuracy, defined as recall over the ground-truth objects.

    :raises NoGroundTruth: if there is no ground truth (tp + fn == 0)
    """
    if tp + fn == 0:
        raise NoGroundTruth("Accuracy is undefined without ground-truth objects.", stage='detect')
    return tp / (tp + fn)


class BaseDetector:
    """
    Base class for detectors. A detector maps a frame to a list of
    :class:`Detection` objects using per-(condition, crf) calibration data.
    """
    def __init__(self, config: DetectorConfig = None) -> None:
        self.config = config or DetectorConfig()
        self.logger = logging.getLogger(self.__class__.__name__)

    @property
    def detector_id(self) -> str:
        return self.__class__.__name__

    def detect(self, frame: Frame, calibration: Any) -> List[Detection]:
        raise NotImplementedError

    def evaluate(
        self, frame: Frame, truths: Sequence[Annotation], calibration: Any
    ) -> MatchResult:
        return match(self.detect(frame, calibration), truths, self.config.match_iou)
