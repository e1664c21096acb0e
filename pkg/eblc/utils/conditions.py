from enum import Enum
from dataclasses import dataclass, asdict, replace
from typing import Dict, Optional, Tuple

from .exceptions import InvalidFactor


class EnvCondition(Enum):
    """
    The seven environmental conditions. Member order is the index order of
    :class:`eblc.classifiers.base.ClassProbabilities` and breaks argmax ties.
    """
    NORMAL = "normal"
    LIGHT_DARK = "light_dark"
    MEDIUM_DARK = "medium_dark"
    HIGH_DARK = "high_dark"
    LIGHT_RAIN = "light_rain"
    MODERATE_RAIN = "moderate_rain"
    HEAVY_RAIN = "heavy_rain"

    def __str__(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return CONDITIONS.index(self)

    @property
    def is_dark(self) -> bool:
        return self in DARK_CONDITIONS

    @property
    def is_rain(self) -> bool:
        return self in RAIN_CONDITIONS

    @classmethod
    def parse(cls, name: str) -> "EnvCondition":
        """
        Accepts the value ("medium_dark"), the member name ("MEDIUM_DARK") or the
        display name ("MediumDark").
        """
        _key = name.strip()
        for condition in cls:
            if _key in (condition.value, condition.name, condition.display_name):
                return condition
        _normalized = _key.lower().replace('-', '_').replace(' ', '_')
        for condition in cls:
            if _normalized == condition.value:
                return condition
        raise ValueError(f"Unknown environmental condition: {name!r}.")

    @property
    def display_name(self) -> str:
        return "".join(part.capitalize() for part in self.value.split('_'))


CONDITIONS: Tuple[EnvCondition, ...] = tuple(EnvCondition)
DARK_CONDITIONS = (EnvCondition.LIGHT_DARK, EnvCondition.MEDIUM_DARK, EnvCondition.HIGH_DARK)
RAIN_CONDITIONS = (EnvCondition.LIGHT_RAIN, EnvCondition.MODERATE_RAIN, EnvCondition.HEAVY_RAIN)

STREAK_COLOR = (200, 200, 200)


@dataclass(frozen=True)
class Severity:
    """
    Parameters of one synthetic condition. ``shade`` is the lightness
    multiplier of overcast rain, applied under the streaks; it is separate
    from ``darkness_factor``, which only darkness conditions use.
    """
    condition: EnvCondition
    darkness_factor: float = 1.0
    streak_density: float = 0.0
    streak_length: int = 12
    blur_radius: int = 0
    seed: int = 0
    streak_color: Tuple[int, int, int] = STREAK_COLOR
    shade: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.darkness_factor <= 1:
            raise InvalidFactor(
                f"Darkness factor must lie in (0, 1], got {self.darkness_factor}.", stage='augment'
            )
        if not 0 < self.shade <= 1:
            raise InvalidFactor(f"Rain shade must lie in (0, 1], got {self.shade}.", stage='augment')
        if self.streak_density < 0 or self.blur_radius < 0 or self.streak_length < 0:
            raise InvalidFactor(
                "Streak density, streak length and blur radius must be non-negative.",
                stage='augment'
            )
        if not self.condition.is_rain and self.shade != 1:
            raise InvalidFactor(
                f"Only rain severities can shade the frame, not {self.condition}.", stage='augment'
            )
        if self.condition.is_dark and self.streak_density != 0:
            raise InvalidFactor(f"{self.condition} severity cannot carry rain streaks.", stage='augment')
        if self.condition.is_rain and self.darkness_factor != 1:
            raise InvalidFactor(f"{self.condition} severity cannot darken the frame.", stage='augment')
        if self.condition is EnvCondition.NORMAL and (
            self.darkness_factor != 1 or self.streak_density != 0 or self.blur_radius != 0
        ):
            raise InvalidFactor("Normal severity must be the identity.", stage='augment')

    def with_seed(self, seed: int) -> "Severity":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        _dict = asdict(self)
        _dict['condition'] = self.condition.value
        _dict['streak_color'] = list(self.streak_color)
        return _dict

    @classmethod
    def from_dict(cls, data: dict) -> "Severity":
        _data = dict(data)
        _data['condition'] = EnvCondition.parse(_data['condition'])
        if 'streak_color' in _data:
            _data['streak_color'] = tuple(int(c) for c in _data['streak_color'])
        return cls(**_data)


DEFAULT_SEVERITIES: Dict[EnvCondition, Severity] = {
    EnvCondition.NORMAL: Severity(EnvCondition.NORMAL),
    EnvCondition.LIGHT_DARK: Severity(EnvCondition.LIGHT_DARK, darkness_factor=0.7),
    EnvCondition.MEDIUM_DARK: Severity(EnvCondition.MEDIUM_DARK, darkness_factor=0.5),
    EnvCondition.HIGH_DARK: Severity(EnvCondition.HIGH_DARK, darkness_factor=0.3),
    EnvCondition.LIGHT_RAIN: Severity(
        EnvCondition.LIGHT_RAIN, streak_density=50, blur_radius=1, shade=0.6
    ),
    EnvCondition.MODERATE_RAIN: Severity(
        EnvCondition.MODERATE_RAIN, streak_density=150, blur_radius=1, shade=0.4
    ),
    EnvCondition.HEAVY_RAIN: Severity(
        EnvCondition.HEAVY_RAIN, streak_density=300, blur_radius=2, shade=0.2
    ),
}


def severity_table(overrides: Optional[Dict[str, dict]] = None) -> Dict[EnvCondition, Severity]:
    """
    Default severity table with per-condition overrides applied.

    :param overrides: mapping condition name -> partial severity fields
    :type overrides: Optional[Dict[str, dict]]
    :return: severity for every condition
    :rtype: Dict[EnvCondition, Severity]
    """
    _table = dict(DEFAULT_SEVERITIES)
    for name, fields in (overrides or {}).items():
        _condition = EnvCondition.parse(name)
        _fields = dict(fields)
        if 'streak_color' in _fields:
            _fields['streak_color'] = tuple(int(c) for c in _fields['streak_color'])
        _table[_condition] = replace(_table[_condition], **_fields)
    return _table
