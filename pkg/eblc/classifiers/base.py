import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

from eblc.utils.frame import Frame
from eblc.utils.conditions import EnvCondition, CONDITIONS
from eblc.utils.exceptions import ClassifierError

_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ClassProbabilities:
    """
    Seven weights indexed by :class:`EnvCondition` order, non-negative and
    summing to one. ``[0, 0, 1, 0, 0, 0, 0]`` means MediumDark.
    """
    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        _weights = tuple(float(weight) for weight in self.weights)
        if len(_weights) != len(CONDITIONS):
            raise ClassifierError(
                f"Expected {len(CONDITIONS)} class weights, got {len(_weights)}.", stage='classify'
            )
        if any(weight < 0 or math.isnan(weight) for weight in _weights):
            raise ClassifierError("Class weights must be non-negative.", stage='classify')
        if abs(math.fsum(_weights) - 1.0) > _TOLERANCE:
            raise ClassifierError("Class weights must sum to 1.", stage='classify')
        object.__setattr__(self, 'weights', _weights)

    @classmethod
    def one_hot(cls, condition: EnvCondition) -> "ClassProbabilities":
        return cls(tuple(1.0 if member is condition else 0.0 for member in CONDITIONS))

    @property
    def argmax(self) -> EnvCondition:
        """
        Predicted condition; ties resolve to the earliest condition in enum order.
        """
        _best = max(self.weights)
        return CONDITIONS[self.weights.index(_best)]

    def __getitem__(self, condition: EnvCondition) -> float:
        return self.weights[condition.index]

    def to_dict(self) -> dict:
        return {condition.value: weight for condition, weight in zip(CONDITIONS, self.weights)}


class BaseClassifier:
    """
    Base class for environmental-condition classifiers. Implementations map a
    frame to :class:`ClassProbabilities`; the controller only uses the argmax.
    """
    def __init__(self) -> None:
        self.logger = logging.getLogger(self.__class__.__name__)

    def classify_frame(self, frame: Frame) -> ClassProbabilities:
        raise NotImplementedError

    def predict(self, frame: Frame) -> EnvCondition:
        return self.classify_frame(frame).argmax

    def accuracy(self, labelled: Sequence[Tuple[Frame, EnvCondition]]) -> float:
        """
        Share of frames whose predicted condition equals the label.
        """
        if not labelled:
            return 0.0
        hits = sum(self.predict(frame) is condition for frame, condition in labelled)
        return hits / len(labelled)
