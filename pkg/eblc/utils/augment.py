"""
Synthesis of darkness and rain conditions from clear-weather frames.

Darkness scales the HSL lightness of every pixel. Rain shades the frame the
same way, draws anti-aliased bright streaks and then box-blurs the result.
Random placement comes from NumPy's ``PCG64`` bit generator seeded with
``SeedSequence([seed, frame_index])``, which is stable across platforms and
NumPy releases, so every frame of a corpus can be synthesised independently
and reproducibly.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter

from .conditions import Severity, STREAK_COLOR
from .exceptions import InvalidFactor
from .frame import Frame, MAXVAL, rgb_to_hsl_array, hsl_to_rgb_array

logger = logging.getLogger(__name__)

ANGLE_RANGE = (70.0, 110.0)
STREAK_MARGIN = 8


def rain_generator(seed: int, frame_index: int = 0) -> np.random.Generator:
    """
    The documented generator behind every random draw of this module.

    :param seed: user seed
    :type seed: int
    :param frame_index: index of the frame inside its sequence
    :type frame_index: int
    :return: PCG64-backed generator
    :rtype: numpy.random.Generator
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(frame_index)])))


def darken(f: Frame, factor: float) -> Frame:
    """
    Scale the HSL lightness of every pixel by ``factor``; hue and saturation
    are preserved up to conversion rounding.

    :param f: input frame
    :type f: Frame
    :param factor: lightness multiplier in (0, 1]
    :type factor: float
    :return: darkened frame
    :rtype: Frame
    :raises InvalidFactor: if factor is outside (0, 1]
    """
    if not 0 < factor <= 1:
        raise InvalidFactor(f"Darkness factor must lie in (0, 1], got {factor}.", stage='augment')
    if factor == 1:
        return f
    hue, saturation, lightness = rgb_to_hsl_array(f.data)
    return Frame(hsl_to_rgb_array(hue, saturation, lightness * factor))


def streak_count(density: float, width: int, height: int) -> int:
    return int(np.floor(density * width * height / 1e6 + 0.5))


def _streak_alpha(
    width: int, height: int, count: int, length: int, rng: np.random.Generator,
    angle_range: Tuple[float, float] = ANGLE_RANGE,
) -> np.ndarray:
    # one row of three uniforms per streak: start column, start row, angle
    draws = rng.random((count, 3))
    alpha = np.zeros((height, width), dtype=np.float64)
    if count == 0 or length <= 0:
        return alpha

    if width > 2 * STREAK_MARGIN:
        x0 = STREAK_MARGIN + draws[:, 0] * (width - 2 * STREAK_MARGIN)
    else:
        x0 = draws[:, 0] * width
    y0 = np.floor(draws[:, 1] * max(height - length, 1)).astype(np.int64)
    theta = np.deg2rad(angle_range[0] + draws[:, 2] * (angle_range[1] - angle_range[0]))
    # horizontal drift per row; 90 degrees is a vertical streak
    slope = np.cos(theta) / np.sin(theta)
    # ``length`` is measured along the streak, so slanted streaks span fewer rows
    spans = np.maximum(np.floor(length * np.sin(theta) + 0.5), 1).astype(np.int64)

    steps = np.arange(length, dtype=np.float64)
    rows = y0[:, None] + steps.astype(np.int64)[None, :]
    columns = x0[:, None] + steps[None, :] * slope[:, None]
    left = np.floor(columns).astype(np.int64)
    coverage = columns - left
    drawn = steps.astype(np.int64)[None, :] < spans[:, None]

    rows = rows[drawn]
    left = left[drawn]
    coverage = coverage[drawn]
    for column, weight in ((left, 1.0 - coverage), (left + 1, coverage)):
        inside = (rows >= 0) & (rows < height) & (column >= 0) & (column < width)
        np.maximum.at(alpha, (rows[inside], column[inside]), weight[inside])
    return alpha


def box_blur(f: Frame, radius: int) -> Frame:
    """
    Normalised box blur with a (2r+1)x(2r+1) window, edges replicated.
    """
    if radius <= 0:
        return f
    _size = 2 * int(radius) + 1
    _blurred = uniform_filter(f.data.astype(np.float64), size=(_size, _size, 1), mode='nearest')
    return Frame(np.clip(np.floor(_blurred + 0.5), 0, MAXVAL).astype(np.uint8))


def add_rain(
    f: Frame,
    density: float,
    length: int,
    blur_radius: int,
    seed: int,
    frame_index: int = 0,
    color: Tuple[int, int, int] = STREAK_COLOR,
    shade: float = 1.0,
) -> Frame:
    """
    Shade the frame, overlay ``round(density * width * height / 1e6)``
    anti-aliased rain streaks and blur the result.

    Shading scales HSL lightness like :func:`darken` and stands for the
    overcast sky of a rainy day. Each streak starts at a random column (kept
    8 px away from the side borders when the frame is wide enough) and a
    random row, is ``length`` pixels long and is slanted by an angle drawn
    uniformly from [70, 110] degrees, measured from the horizontal axis.
    Coverage is split between the two columns around the exact line position
    and blended with ``color``.

    :param f: input frame
    :type f: Frame
    :param density: streaks per megapixel
    :type density: float
    :param length: streak length along the streak, in pixels; a streak at
        angle theta covers ``round(length * sin(theta))`` rows
    :type length: int
    :param blur_radius: box blur radius in pixels
    :type blur_radius: int
    :param seed: user seed
    :type seed: int
    :param frame_index: index of the frame inside its sequence
    :type frame_index: int
    :param color: streak colour
    :type color: Tuple[int, int, int]
    :param shade: lightness multiplier in (0, 1] applied before the streaks
    :type shade: float
    :return: rainy frame
    :rtype: Frame
    """
    if density < 0 or blur_radius < 0:
        raise InvalidFactor("Streak density and blur radius must be non-negative.", stage='augment')
    if not 0 < shade <= 1:
        raise InvalidFactor(f"Rain shade must lie in (0, 1], got {shade}.", stage='augment')
    _count = streak_count(density, f.width, f.height)
    _frame = darken(f, shade)
    if _count > 0:
        alpha = _streak_alpha(
            f.width, f.height, _count, int(length), rain_generator(seed, frame_index)
        )[..., None]
        _color = np.asarray(color, dtype=np.float64).reshape(1, 1, 3)
        _blend = _frame.data.astype(np.float64) * (1.0 - alpha) + _color * alpha
        _frame = Frame(np.clip(np.floor(_blend + 0.5), 0, MAXVAL).astype(np.uint8))
    return box_blur(_frame, int(blur_radius))


def synthesize(f: Frame, s: Severity, frame_index: int = 0) -> Frame:
    """
    Apply a severity: darken first, then rain (shade, streaks, blur). Every
    step is a no-op at its identity parameters.

    :param f: clear-weather frame
    :type f: Frame
    :param s: severity to apply
    :type s: Severity
    :param frame_index: index of the frame inside its sequence
    :type frame_index: int
    :return: augmented frame
    :rtype: Frame
    """
    _frame = darken(f, s.darkness_factor)
    return add_rain(
        _frame,
        density=s.streak_density,
        length=s.streak_length,
        blur_radius=s.blur_radius,
        seed=s.seed,
        frame_index=frame_index,
        color=s.streak_color,
        shade=s.shade,
    )


def synthesize_sequence(frames: Sequence[Frame], s: Severity) -> List[Frame]:
    logger.debug("Synthesising %d frames for %s.", len(frames), s.condition)
    return [synthesize(frame, s, index) for index, frame in enumerate(frames)]
