"""
Synthetic pedestrian scenes and a calibrated contrast detector.

Scenes are a smooth, wide-ranging gray texture with dark upright rectangles
standing in for pedestrians. The detector estimates the background with a
greyscale closing, looks for connected regions that are darker than it by a
calibrated threshold and keeps those whose outline is sharp enough. A target
survives quantisation only while the quantiser step stays below its contrast,
so accuracy reacts to darkening, shading and compression the way a learned
detector's would.
"""
import logging
from dataclasses import dataclass, asdict
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from eblc.utils.frame import Frame, MAXVAL
from eblc.utils.exceptions import TooManyTargets
from eblc.detectors.base import (
    Annotation,
    BaseDetector,
    BBox,
    Detection,
    DetectorConfig,
    PERSON,
    nms,
)

logger = logging.getLogger(__name__)

BACKGROUND_LEVEL = 150.0
TEXTURE_STD = 30.0
TEXTURE_SIGMA = 16.0
# texture is clipped to +-TEXTURE_LIMIT so targets never clip at zero
TEXTURE_LIMIT = 55.0
TARGET_CONTRAST = 90
TARGET_SPACING = 10
BORDER_MARGIN = 6
# side of the square closing element, in resized pixels; wider than any target
BACKGROUND_WINDOW = 41
MIN_THRESHOLD = 0.5
_PLACEMENT_ATTEMPTS = 200


def target_size(width: int, height: int) -> Tuple[int, int]:
    """
    Pedestrian rectangle size for a scene: a twentieth of the width by a sixth
    of the height, e.g. 8x20 pixels at 160x120.
    """
    return max(4, int(round(width / 20))), max(10, int(round(height / 6)))


def scene_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(1,))))


def synthesize_scene(
    seed: int, n_targets: int, width: int, height: int
) -> Tuple[Frame, List[Annotation]]:
    """
    Render a textured background with ``n_targets`` non-overlapping dark
    rectangles, each 90 sample units darker than the background under it.

    The texture is zero-mean Gaussian-smoothed noise scaled to a standard
    deviation of 30 and clipped to +-55 around a level of 150. Its spread is
    wider than the target contrast, so targets sit at every phase of a
    quantiser grid.

    Targets keep 10 pixels from each other and 6 pixels from the frame border.

    :param seed: scene seed
    :type seed: int
    :param n_targets: number of pedestrians
    :type n_targets: int
    :param width: frame width
    :type width: int
    :param height: frame height
    :type height: int
    :return: the frame and one annotation per rendered rectangle
    :rtype: Tuple[Frame, List[Annotation]]
    :raises TooManyTargets: if the targets cannot be placed
    """
    rng = scene_generator(seed)
    texture = ndimage.gaussian_filter(rng.normal(size=(height, width)), sigma=TEXTURE_SIGMA, mode='wrap')
    texture = texture - texture.mean()
    _std = texture.std()
    if _std > 0:
        texture = texture / _std * TEXTURE_STD
    plane = BACKGROUND_LEVEL + np.clip(texture, -TEXTURE_LIMIT, TEXTURE_LIMIT)

    box_w, box_h = target_size(width, height)
    span_x = width - 2 * BORDER_MARGIN - box_w
    span_y = height - 2 * BORDER_MARGIN - box_h
    if n_targets > 0 and (span_x < 0 or span_y < 0):
        raise TooManyTargets(
            f"A {box_w}x{box_h} target does not fit in a {width}x{height} frame.", stage='scene'
        )

    boxes: List[BBox] = []
    attempts = 0
    while len(boxes) < n_targets:
        if attempts >= _PLACEMENT_ATTEMPTS * max(n_targets, 1):
            raise TooManyTargets(
                f"Could not place {n_targets} targets in a {width}x{height} frame.", stage='scene'
            )
        attempts += 1
        x = BORDER_MARGIN + int(rng.integers(0, span_x + 1))
        y = BORDER_MARGIN + int(rng.integers(0, span_y + 1))
        candidate = BBox(x, y, x + box_w, y + box_h)
        if all(
            candidate.x_min >= other.x_max + TARGET_SPACING
            or other.x_min >= candidate.x_max + TARGET_SPACING
            or candidate.y_min >= other.y_max + TARGET_SPACING
            or other.y_min >= candidate.y_max + TARGET_SPACING
            for other in boxes
        ):
            boxes.append(candidate)

    for box in boxes:
        plane[box.y_min:box.y_max, box.x_min:box.x_max] -= TARGET_CONTRAST
    gray = np.clip(np.floor(plane + 0.5), 0, MAXVAL).astype(np.uint8)
    frame = Frame(np.repeat(gray[..., None], 3, axis=2))
    return frame, [Annotation(box=box, class_label=PERSON) for box in boxes]


def resize_nearest(data: np.ndarray, size: int) -> np.ndarray:
    """
    Nearest-neighbour resize of the two leading axes to ``size`` x ``size``;
    output pixel ``i`` samples source pixel ``floor(i * n / size)``.
    """
    height, width = data.shape[:2]
    rows = (np.arange(size) * height) // size
    columns = (np.arange(size) * width) // size
    return data[rows][:, columns]


def _to_resized(box: BBox, width: int, height: int, size: int) -> Tuple[slice, slice]:
    # inverse of resize_nearest: resized pixels whose source lies inside the box
    def _first(value, extent):
        return -(-value * size // extent)
    return (
        slice(_first(box.y_min, height), _first(box.y_max, height)),
        slice(_first(box.x_min, width), _first(box.x_max, width)),
    )


def edge_map(luma: np.ndarray) -> np.ndarray:
    """
    Per-pixel edge strength: the largest absolute forward or backward
    difference along either axis, with replicated borders.
    """
    padded = np.pad(luma, 1, mode='edge')
    center = padded[1:-1, 1:-1]
    return np.maximum.reduce([
        np.abs(padded[1:-1, 2:] - center),
        np.abs(center - padded[1:-1, :-2]),
        np.abs(padded[2:, 1:-1] - center),
        np.abs(center - padded[:-2, 1:-1]),
    ])


def contrast_map(luma: np.ndarray) -> np.ndarray:
    """
    How much darker each pixel is than the local background: the black
    top-hat, i.e. a 41x41 greyscale closing minus the luma. Dark features
    narrower than the element are filled by the closing; flat steps of a
    quantised background are not.
    """
    return ndimage.black_tophat(luma, size=BACKGROUND_WINDOW, mode='nearest')


def _boundary(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1))


@dataclass(frozen=True)
class ContrastCalibration:
    """
    Thresholds of one calibrated detector model, all measured in the
    detector's resized input space.
    """
    threshold: float = 45.0
    min_edge: float = 45.0
    min_area: float = 64.0
    model_id: str = "contrast-default"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ContrastCalibration":
        return cls(**{key: value for key, value in data.items() if key in cls.__dataclass_fields__})

    @classmethod
    def fit(
        cls,
        samples: Sequence[Tuple[Frame, Sequence[Annotation]]],
        config: DetectorConfig = None,
        model_id: str = "contrast-fitted",
    ) -> "ContrastCalibration":
        """
        Fit thresholds to annotated frames.

        The contrast threshold is half the 10th percentile of the per-target
        median contrast, and never below 0.5. Every pixel of a target whose
        contrast survived quantisation then clears it, even when the target
        sits only one quantiser step below its background. The edge minimum
        is 0.6 times the 10th percentile of per-target outline strength, and
        the area minimum a quarter of the median target area.

        :param samples: frames with their ground truth
        :type samples: Sequence[Tuple[Frame, Sequence[Annotation]]]
        :param config: detector configuration (input size)
        :type config: DetectorConfig
        :param model_id: identifier stored with the thresholds
        :type model_id: str
        :return: fitted calibration; defaults when there are no targets
        :rtype: ContrastCalibration
        """
        config = config or DetectorConfig()
        size = config.input_size
        medians, edges, areas = [], [], []
        for frame, truths in samples:
            luma = resize_nearest(frame.luma(), size)
            contrast = contrast_map(luma)
            strength = edge_map(luma)
            for truth in truths:
                _box = _to_resized(truth.box, frame.width, frame.height, size)
                mask = np.zeros(luma.shape, dtype=bool)
                mask[_box] = True
                if not mask.any():
                    continue
                medians.append(float(np.median(contrast[mask])))
                edges.append(float(strength[_boundary(mask)].mean()))
                areas.append(float(mask.sum()))
        if not edges:
            logger.warning("No targets to calibrate %s on; keeping default thresholds.", model_id)
            return cls(model_id=model_id)
        target_low = float(np.percentile(medians, 10))
        return cls(
            threshold=max(0.5 * target_low, MIN_THRESHOLD),
            min_edge=0.6 * float(np.percentile(edges, 10)),
            min_area=0.25 * float(np.median(areas)),
            model_id=model_id,
        )


class ContrastDetector(BaseDetector):
    """
    Finds dark connected regions in the resized frame.

    A region becomes a :class:`Detection` when its area reaches ``min_area``
    and the mean edge strength along its outline reaches ``min_edge``; the
    score is its mean contrast divided by 255.
    """
    def detect(self, frame: Frame, calibration: Optional[ContrastCalibration] = None) -> List[Detection]:
        """
        :param frame: frame to search
        :type frame: Frame
        :param calibration: thresholds for the frame's (condition, crf)
        :type calibration: ContrastCalibration
        :return: detections after non-maximum suppression
        :rtype: List[Detection]
        """
        calibration = calibration or ContrastCalibration()
        size = self.config.input_size
        luma = resize_nearest(frame.luma(), size)
        contrast = contrast_map(luma)
        mask = contrast > calibration.threshold
        labels, count = ndimage.label(mask)
        if count == 0:
            return []
        ids = np.arange(1, count + 1)
        areas = ndimage.sum_labels(mask, labels, ids)
        means = ndimage.mean(contrast, labels, ids)
        outline = np.where(_boundary(mask), labels, 0)
        strength = ndimage.mean(edge_map(luma), outline, ids)

        detections = []
        for index, region in enumerate(ndimage.find_objects(labels)):
            if region is None or areas[index] < calibration.min_area:
                continue
            if not strength[index] >= calibration.min_edge:
                continue
            score = float(np.clip(means[index] / MAXVAL, 0.0, 1.0))
            if score < self.config.score_threshold:
                continue
            rows, columns = region
            box = BBox(
                (columns.start * frame.width) // size,
                (rows.start * frame.height) // size,
                ((columns.stop - 1) * frame.width) // size + 1,
                ((rows.stop - 1) * frame.height) // size + 1,
            )
            detections.append(Detection(box=box, score=score, class_label=PERSON))
        return nms(detections, self.config.nms_iou_threshold)

    @staticmethod
    def model_id(condition, crf: int) -> str:
        return f"contrast-{condition.value}-crf{crf:02d}"
