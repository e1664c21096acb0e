from .base import (
    Annotation,
    BaseDetector,
    BBox,
    Detection,
    DetectorConfig,
    MatchResult,
    detection_accuracy,
    iou,
    match,
    nms,
)
from .contrast import (
    ContrastCalibration,
    ContrastDetector,
    resize_nearest,
    synthesize_scene,
)
