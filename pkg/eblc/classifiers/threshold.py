"""
Feature-threshold classifier for the seven environmental conditions.

Four features are measured per frame. Mean and spread of HSL lightness
separate the darkness classes. Streak energy and sharpness pick out rain:
streaks are thin bright ridges, and rain frames are blurred. The decision
ladder checks rain first, because darkening never creates ridges while rain
does lower sharpness.
"""
import math
import logging
from dataclasses import dataclass, asdict, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from eblc.utils.frame import Frame, rgb_to_hsl_array
from eblc.utils.conditions import EnvCondition, CONDITIONS, DARK_CONDITIONS, RAIN_CONDITIONS
from eblc.utils.exceptions import FrameTooSmall, UncalibratedThresholds, InsufficientSamples
from eblc.utils.storage import read_json, write_json
from eblc.classifiers.base import BaseClassifier, ClassProbabilities

logger = logging.getLogger(__name__)

MIN_SIZE = 8
MIN_SAMPLES = 10
# width of the horizontal opening behind the ridge filter; below the gap between targets
RIDGE_WINDOW = 9
RIDGE_FLOOR = 8.0


@dataclass(frozen=True)
class FeatureVector:
    mean_lightness: float
    lightness_stddev: float
    streak_energy: float
    sharpness: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.mean_lightness, self.lightness_stddev, self.streak_energy, self.sharpness


def ridge_response(luma: np.ndarray, window: int = RIDGE_WINDOW) -> np.ndarray:
    """
    How much each pixel stands out above the horizontal opening of the luma:
    a white top-hat with a ``1 x window`` element. Bright features narrower
    than the window respond, so near-vertical streaks do. Dark objects,
    smooth gradients and bright gaps at least ``window`` pixels wide do not.
    """
    return ndimage.white_tophat(luma, size=(1, window), mode='reflect')


def extract_features(f: Frame) -> FeatureVector:
    """
    Measure the classifier features of a frame.

    :param f: frame of at least 8x8 pixels
    :type f: Frame
    :return: features
    :rtype: FeatureVector
    :raises FrameTooSmall: for frames under 8x8
    """
    if f.width < MIN_SIZE or f.height < MIN_SIZE:
        raise FrameTooSmall(
            f"Feature extraction needs at least {MIN_SIZE}x{MIN_SIZE} pixels, got {f.width}x{f.height}.",
            stage='classify'
        )
    _, _, lightness = rgb_to_hsl_array(f.data)
    luma = f.luma()
    ridges = ridge_response(luma)
    return FeatureVector(
        mean_lightness=float(lightness.mean()),
        lightness_stddev=float(lightness.std()),
        streak_energy=float(np.where(ridges > RIDGE_FLOOR, ridges, 0.0).mean()),
        sharpness=float(ndimage.laplace(luma, mode='nearest').var()),
    )


@dataclass(frozen=True)
class ClassifierConfig:
    """
    Band boundaries of the decision ladder. Rain bands apply to streak energy,
    darkness bands to mean lightness. ``blur_threshold`` may be infinite when
    sharpness does not separate rain from clear frames.
    """
    t_light_rain: Optional[float] = None
    t_moderate_rain: Optional[float] = None
    t_heavy_rain: Optional[float] = None
    blur_threshold: Optional[float] = None
    t_normal: Optional[float] = None
    t_light_dark: Optional[float] = None
    t_medium_dark: Optional[float] = None

    @property
    def calibrated(self) -> bool:
        return all(getattr(self, _field.name) is not None for _field in fields(self))

    def to_dict(self) -> dict:
        _dict = asdict(self)
        if _dict['blur_threshold'] is not None and math.isinf(_dict['blur_threshold']):
            _dict['blur_threshold'] = "Infinity"
        return _dict

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierConfig":
        _values = {}
        for _field in fields(cls):
            value = data.get(_field.name)
            _values[_field.name] = None if value is None else float(value)
        return cls(**_values)

    def save(self, path: str) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path_or_text: str) -> "ClassifierConfig":
        return cls.from_dict(read_json(path_or_text))


def classify(v: FeatureVector, thresholds: ClassifierConfig) -> ClassProbabilities:
    """
    Run the decision ladder and return a one-hot probability vector.

    :param v: features of the frame
    :type v: FeatureVector
    :param thresholds: calibrated band boundaries
    :type thresholds: ClassifierConfig
    :return: one-hot class probabilities
    :rtype: ClassProbabilities
    :raises UncalibratedThresholds: if any boundary is missing
    """
    if not thresholds.calibrated:
        raise UncalibratedThresholds(
            "Classifier thresholds are missing; run calibrate first.", stage='classify'
        )
    if v.streak_energy >= thresholds.t_light_rain and v.sharpness < thresholds.blur_threshold:
        if v.streak_energy >= thresholds.t_heavy_rain:
            return ClassProbabilities.one_hot(EnvCondition.HEAVY_RAIN)
        if v.streak_energy >= thresholds.t_moderate_rain:
            return ClassProbabilities.one_hot(EnvCondition.MODERATE_RAIN)
        return ClassProbabilities.one_hot(EnvCondition.LIGHT_RAIN)
    if v.mean_lightness >= thresholds.t_normal:
        return ClassProbabilities.one_hot(EnvCondition.NORMAL)
    if v.mean_lightness >= thresholds.t_light_dark:
        return ClassProbabilities.one_hot(EnvCondition.LIGHT_DARK)
    if v.mean_lightness >= thresholds.t_medium_dark:
        return ClassProbabilities.one_hot(EnvCondition.MEDIUM_DARK)
    return ClassProbabilities.one_hot(EnvCondition.HIGH_DARK)


def _midpoint(low: float, high: float) -> float:
    return (low + high) / 2.0


def calibrate_thresholds(labelled: Sequence[Tuple[Frame, EnvCondition]]) -> ClassifierConfig:
    """
    Fit the band boundaries to a labelled corpus.

    Each boundary is the midpoint between the feature means of the two
    adjacent classes. The light-rain boundary sits between the highest
    non-rain streak energy mean and the light-rain mean; the blur threshold
    sits between the Normal sharpness mean and the sharpest rain class, or is
    infinite when rain is not blurrier than Normal. Means use exact summation,
    so the result does not depend on corpus order.

    :param labelled: frames with their true condition, at least 10 per class
    :type labelled: Sequence[Tuple[Frame, EnvCondition]]
    :return: calibrated thresholds
    :rtype: ClassifierConfig
    :raises InsufficientSamples: naming every class with fewer than 10 frames
    """
    features: Dict[EnvCondition, List[FeatureVector]] = {condition: [] for condition in CONDITIONS}
    for frame, condition in labelled:
        features[condition].append(extract_features(frame))
    missing = [condition for condition in CONDITIONS if len(features[condition]) < MIN_SAMPLES]
    if missing:
        raise InsufficientSamples(missing, stage='classify')

    def _mean(condition: EnvCondition, name: str) -> float:
        _values = [getattr(vector, name) for vector in features[condition]]
        return math.fsum(_values) / len(_values)

    lightness = {condition: _mean(condition, 'mean_lightness') for condition in CONDITIONS}
    streaks = {condition: _mean(condition, 'streak_energy') for condition in CONDITIONS}
    sharpness = {condition: _mean(condition, 'sharpness') for condition in CONDITIONS}

    non_rain = max(streaks[condition] for condition in (EnvCondition.NORMAL,) + DARK_CONDITIONS)
    sharpest_rain = max(sharpness[condition] for condition in RAIN_CONDITIONS)
    if sharpness[EnvCondition.NORMAL] > sharpest_rain:
        blur_threshold = _midpoint(sharpness[EnvCondition.NORMAL], sharpest_rain)
    else:
        logger.warning("Rain frames are not blurrier than Normal frames; sharpness check disabled.")
        blur_threshold = math.inf

    light_rain, moderate_rain, heavy_rain = RAIN_CONDITIONS
    light_dark, medium_dark, high_dark = DARK_CONDITIONS
    return ClassifierConfig(
        t_light_rain=_midpoint(non_rain, streaks[light_rain]),
        t_moderate_rain=_midpoint(streaks[light_rain], streaks[moderate_rain]),
        t_heavy_rain=_midpoint(streaks[moderate_rain], streaks[heavy_rain]),
        blur_threshold=blur_threshold,
        t_normal=_midpoint(lightness[EnvCondition.NORMAL], lightness[light_dark]),
        t_light_dark=_midpoint(lightness[light_dark], lightness[medium_dark]),
        t_medium_dark=_midpoint(lightness[medium_dark], lightness[high_dark]),
    )


class ThresholdClassifier(BaseClassifier):
    """
    Classifier running :func:`classify` on :func:`extract_features`. Immutable
    once built, so one instance can serve several threads.
    """
    def __init__(self, config: ClassifierConfig) -> None:
        super().__init__()
        self.config = config

    def classify_frame(self, frame: Frame) -> ClassProbabilities:
        return classify(extract_features(frame), self.config)

    @classmethod
    def calibrate(cls, labelled: Sequence[Tuple[Frame, EnvCondition]]) -> "ThresholdClassifier":
        return cls(calibrate_thresholds(labelled))
