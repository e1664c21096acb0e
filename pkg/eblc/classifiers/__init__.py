from .base import BaseClassifier, ClassProbabilities
from .threshold import (
    ClassifierConfig,
    FeatureVector,
    ThresholdClassifier,
    calibrate_thresholds,
    classify,
    extract_features,
)
