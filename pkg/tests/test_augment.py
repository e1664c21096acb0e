import unittest

import numpy as np

from eblc.utils.augment import (
    darken,
    add_rain,
    box_blur,
    rain_generator,
    streak_count,
    synthesize,
    synthesize_sequence,
    _streak_alpha,
)
from eblc.utils.conditions import (
    EnvCondition,
    CONDITIONS,
    DEFAULT_SEVERITIES,
    Severity,
    severity_table,
)
from eblc.utils.exceptions import InvalidFactor
from eblc.utils.frame import Frame, rgb_to_hsl_array
from eblc.detectors.contrast import synthesize_scene
from eblc.utils.metrics import psnr
from ._template import gray, noise_frame


class DarkenTests(unittest.TestCase):

    def test_identity(self):
        frame = noise_frame(0, 16, 16)
        self.assertIs(darken(frame, 1.0), frame)

    def test_black_stays_black(self):
        self.assertEqual(darken(gray(0), 0.3), gray(0))

    def test_halves_gray(self):
        darkened = darken(gray(200), 0.5)
        self.assertLessEqual(int(np.abs(darkened.data.astype(int) - 100).max()), 1)

    def test_keeps_hue(self):
        darkened = darken(Frame.filled(4, 4, (200, 100, 50)), 0.5)
        r, g, b = (int(value) for value in darkened.data[0, 0])
        self.assertGreater(r, g)
        self.assertGreater(g, b)

    def test_lightness_monotone_in_factor(self):
        frame = noise_frame(4, 32, 32)
        values = [
            float(rgb_to_hsl_array(darken(frame, factor).data)[2].mean())
            for factor in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
        ]
        for lower_factor, higher_factor in zip(values, values[1:]):
            self.assertLessEqual(lower_factor, higher_factor)

    def test_half_factor_halves_mean_lightness(self):
        for seed in range(5):
            frame, _ = synthesize_scene(seed, 3, 160, 120)
            before = float(rgb_to_hsl_array(frame.data)[2].mean())
            after = float(rgb_to_hsl_array(darken(frame, 0.5).data)[2].mean())
            self.assertAlmostEqual(after, 0.5 * before, delta=0.02)

    def test_invalid_factor(self):
        for factor in (0.0, -0.2, 1.5):
            with self.assertRaises(InvalidFactor):
                darken(gray(10), factor)


class RainTests(unittest.TestCase):

    def setUp(self) -> None:
        self.frame = gray(80, 160, 120)

    def test_noop_parameters(self):
        self.assertEqual(add_rain(self.frame, 0, 12, 0, seed=1), self.frame)

    def test_streak_count(self):
        self.assertEqual(streak_count(50, 160, 120), 1)
        self.assertEqual(streak_count(300, 160, 120), 6)
        self.assertEqual(streak_count(0, 160, 120), 0)

    def test_deterministic(self):
        first = add_rain(self.frame, 300, 12, 1, seed=5, frame_index=3)
        second = add_rain(self.frame, 300, 12, 1, seed=5, frame_index=3)
        self.assertEqual(first.to_bytes(), second.to_bytes())
        self.assertNotEqual(first, add_rain(self.frame, 300, 12, 1, seed=6, frame_index=3))
        self.assertNotEqual(first, add_rain(self.frame, 300, 12, 1, seed=5, frame_index=4))

    def test_streaks_are_bright(self):
        rainy = add_rain(self.frame, 300, 12, 0, seed=2)
        self.assertGreater(int(rainy.data.max()), 80)
        self.assertEqual(int(rainy.data.min()), 80)

    def test_more_streaks_lower_psnr(self):
        values = [
            psnr(self.frame, add_rain(self.frame, density, 12, 0, seed=9))
            for density in (50, 150, 300, 600)
        ]
        for lower_density, higher_density in zip(values, values[1:]):
            self.assertGreaterEqual(lower_density, higher_density)

    def test_blur(self):
        frame = noise_frame(1, 20, 20)
        self.assertIs(box_blur(frame, 0), frame)
        blurred = box_blur(frame, 2)
        self.assertLess(float(blurred.data.astype(float).std()), float(frame.data.astype(float).std()))

    def test_slanted_streaks_span_fewer_rows(self):
        for angle, expected in ((70.0, 11), (90.0, 12)):
            alpha = _streak_alpha(64, 64, 1, 12, rain_generator(0), angle_range=(angle, angle))
            self.assertEqual(int(np.count_nonzero(alpha.any(axis=1))), expected)

    def test_shade(self):
        shaded = add_rain(gray(200, 32, 32), 0, 12, 0, seed=0, shade=0.5)
        self.assertLessEqual(int(np.abs(shaded.data.astype(int) - 100).max()), 1)
        for shade in (0.0, 1.5):
            with self.assertRaises(InvalidFactor):
                add_rain(self.frame, 10, 12, 0, seed=0, shade=shade)

    def test_invalid_parameters(self):
        with self.assertRaises(InvalidFactor):
            add_rain(self.frame, -1, 12, 0, seed=0)
        with self.assertRaises(InvalidFactor):
            add_rain(self.frame, 10, 12, -1, seed=0)


class SeverityTests(unittest.TestCase):

    def test_normal_is_identity(self):
        frame = noise_frame(3, 24, 24)
        self.assertEqual(synthesize(frame, DEFAULT_SEVERITIES[EnvCondition.NORMAL]), frame)

    def test_high_dark(self):
        darkened = synthesize(gray(200), DEFAULT_SEVERITIES[EnvCondition.HIGH_DARK])
        self.assertAlmostEqual(float(darkened.data.mean()), 60.0, delta=2.0)

    def test_invariants(self):
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.LIGHT_DARK, darkness_factor=0.7, streak_density=5)
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.HEAVY_RAIN, darkness_factor=0.5, streak_density=300)
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.NORMAL, blur_radius=1)
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.MEDIUM_DARK, darkness_factor=0.0)
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.LIGHT_DARK, darkness_factor=0.7, shade=0.5)
        with self.assertRaises(InvalidFactor):
            Severity(EnvCondition.LIGHT_RAIN, streak_density=50, shade=0.0)

    def test_overrides(self):
        table = severity_table({"HeavyRain": {"streak_density": 400, "streak_color": [255, 255, 255]}})
        self.assertEqual(table[EnvCondition.HEAVY_RAIN].streak_density, 400)
        self.assertEqual(table[EnvCondition.HEAVY_RAIN].streak_color, (255, 255, 255))
        self.assertEqual(table[EnvCondition.HEAVY_RAIN].blur_radius, 2)
        self.assertEqual(table[EnvCondition.NORMAL], DEFAULT_SEVERITIES[EnvCondition.NORMAL])

    def test_dict_roundtrip(self):
        severity = DEFAULT_SEVERITIES[EnvCondition.MODERATE_RAIN].with_seed(17)
        self.assertEqual(Severity.from_dict(severity.to_dict()), severity)

    def test_every_condition(self):
        frames = [noise_frame(seed, 24, 24) for seed in range(3)]
        augmented = [
            frame
            for condition in CONDITIONS
            for frame in synthesize_sequence(frames, DEFAULT_SEVERITIES[condition].with_seed(1))
        ]
        self.assertEqual(len(augmented), 7 * len(frames))
