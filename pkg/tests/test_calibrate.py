import random
import unittest

import pandas as pd

from eblc.calibrate import (
    Calibrator,
    CalibrationConfig,
    ReferenceTable,
    ReferenceTableEntry,
    coarse_to_fine_search,
    exhaustive_oracle,
    split_corpus,
)
from eblc.corpus import as_pairs, generate_corpus
from eblc.detectors.contrast import ContrastCalibration
from eblc.utils.conditions import EnvCondition, CONDITIONS
from eblc.utils.exceptions import CalibrationError
from eblc.utils.metrics import INFINITE
from ._template import fixed_table, gray, input_path


class _Counted:
    def __init__(self, curve):
        self.curve = curve
        self.calls = 0

    def __call__(self, crf: int) -> float:
        self.calls += 1
        return self.curve(crf)


def _step(last_passing):
    return lambda crf: 1.0 if crf <= last_passing else 0.5


def _max_crf(entry: ReferenceTableEntry) -> int:
    return -1 if entry.max_crf is None else entry.max_crf


class SearchTests(unittest.TestCase):

    def setUp(self) -> None:
        self.cfg = CalibrationConfig()

    def test_step_curves(self):
        cases = ((27, 27), (51, 51), (50, 50), (0, 0), (9, 9), (10, 10), (45, 45), (-1, None))
        for last_passing, expected in cases:
            evaluate = _Counted(_step(last_passing))
            self.assertEqual(coarse_to_fine_search(evaluate, self.cfg), expected)
            self.assertLessEqual(evaluate.calls, 15)
            oracle = _Counted(_step(last_passing))
            self.assertEqual(exhaustive_oracle(oracle, self.cfg), expected)
            self.assertEqual(oracle.calls, 52)

    def test_call_budget_on_random_curves(self):
        rng = random.Random(21)
        for _ in range(200):
            values = [rng.uniform(0.9, 1.0) for _ in range(52)]
            evaluate = _Counted(values.__getitem__)
            coarse_to_fine_search(evaluate, self.cfg)
            self.assertLessEqual(evaluate.calls, 16)

    def test_matches_oracle_on_monotone_curves(self):
        rng = random.Random(12)
        for _ in range(200):
            values = sorted((rng.uniform(0.9, 1.0) for _ in range(52)), reverse=True)
            curve = values.__getitem__
            self.assertEqual(coarse_to_fine_search(curve, self.cfg), exhaustive_oracle(curve, self.cfg))

    def test_non_monotone_result_still_passes(self):
        rng = random.Random(3)
        for _ in range(100):
            values = [rng.uniform(0.9, 1.0) for _ in range(52)]
            found = coarse_to_fine_search(values.__getitem__, self.cfg)
            if found is not None:
                self.assertGreaterEqual(values[found], self.cfg.accuracy_threshold)

    def test_config_validation(self):
        for kwargs in (
            {'accuracy_threshold': 0.0},
            {'accuracy_threshold': 1.2},
            {'coarse_grid': ()},
            {'coarse_grid': (20, 10)},
            {'crf_max': 40},
            {'crf_min': 5, 'crf_max': 3},
            {'train_fraction': 0.0},
            {'train_fraction': 1.0},
        ):
            with self.assertRaises(CalibrationError):
                CalibrationConfig(**kwargs)
        cfg = CalibrationConfig.from_dict({'accuracy_threshold': 0.9, 'coarse_grid': [5, 15], 'unused': 1})
        self.assertEqual(cfg.coarse_grid, (5, 15))
        self.assertEqual(CalibrationConfig.from_dict(cfg.to_dict()), cfg)


class SplitTests(unittest.TestCase):

    def test_disjoint_and_complete(self):
        for size in (2, 3, 10, 51):
            fit, scored = split_corpus(size, 0.5, seed=4)
            self.assertTrue(fit and scored)
            self.assertFalse(set(fit) & set(scored))
            self.assertEqual(sorted(fit + scored), list(range(size)))
            self.assertEqual(fit, sorted(fit))
        self.assertEqual(len(split_corpus(50, 0.5, seed=4)[0]), 25)
        self.assertEqual(len(split_corpus(10, 0.99, seed=4)[1]), 1)

    def test_seeded(self):
        self.assertEqual(split_corpus(50, 0.5, seed=4), split_corpus(50, 0.5, seed=4))
        self.assertNotEqual(split_corpus(50, 0.5, seed=4), split_corpus(50, 0.5, seed=5))

    def test_single_frame(self):
        self.assertEqual(split_corpus(1, 0.5, seed=0), ([0], [0]))

    def test_calibrator_scores_held_out_frames(self):
        calibrator = Calibrator(as_pairs(generate_corpus(5, 4)), seed=3, verbosity=0)
        self.assertEqual((calibrator.fit_indices, calibrator.score_indices), split_corpus(4, 0.5, 3))
        point = calibrator.evaluate_point(EnvCondition.NORMAL, 0)
        self.assertEqual(point.matches.tp + point.matches.fn, 3 * len(calibrator.score_indices))


class ReferenceTableTests(unittest.TestCase):

    def test_totality(self):
        table = fixed_table({})
        with self.assertRaises(CalibrationError):
            ReferenceTable(entries={EnvCondition.NORMAL: table.entries[EnvCondition.NORMAL]}, models=table.models)

    def test_unknown_model(self):
        table = fixed_table({})
        with self.assertRaises(CalibrationError):
            ReferenceTable(entries=table.entries, models={})

    def test_dumps_roundtrip(self):
        table = fixed_table({EnvCondition.NORMAL: 30, EnvCondition.HEAVY_RAIN: None})
        text = table.dumps()
        self.assertEqual(ReferenceTable.load(text).dumps(), text)
        self.assertEqual(fixed_table({EnvCondition.NORMAL: 30, EnvCondition.HEAVY_RAIN: None}).dumps(), text)
        self.assertIsNone(ReferenceTable.load(text).lookup(EnvCondition.HEAVY_RAIN).max_crf)

    def test_to_frame(self):
        frame = fixed_table({EnvCondition.NORMAL: 30}).to_frame()
        self.assertEqual(len(frame), 7)
        self.assertEqual(frame.loc[0, 'condition'], "normal")
        self.assertEqual(frame.loc[0, 'max_crf'], 30)

    def test_malformed(self):
        with self.assertRaises(CalibrationError):
            ReferenceTable.from_dict({'entries': [{'max_crf': 3}]})

    def test_model_lookup(self):
        table = fixed_table({EnvCondition.NORMAL: 30})
        self.assertEqual(table.model_for(EnvCondition.NORMAL, 30).model_id, "contrast-normal-crf30")
        self.assertEqual(table.model_for(EnvCondition.NORMAL, 31), ContrastCalibration())
        self.assertEqual(table.model(None), ContrastCalibration())


class PublishedTableTests(unittest.TestCase):
    """
    The published outcome, read as a fixture.
    """
    @classmethod
    def setUpClass(cls) -> None:
        rows = pd.read_csv(input_path("table2.tsv"), sep='\t')
        entries = {}
        for row in rows.itertuples(index=False):
            condition = EnvCondition.parse(row.condition)
            entries[condition] = ReferenceTableEntry(condition, int(row.max_crf), float(row.min_psnr_db), None, None)
        cls.table = ReferenceTable(entries=entries)

    def test_values(self):
        crfs = [self.table.lookup(condition).max_crf for condition in CONDITIONS]
        self.assertEqual(crfs, [30, 30, 20, 10, 10, 0, 0])
        self.assertEqual(self.table.lookup(EnvCondition.HEAVY_RAIN).min_psnr_db, INFINITE)

    def test_severity_ordering(self):
        for group in ((EnvCondition.NORMAL, EnvCondition.LIGHT_DARK, EnvCondition.MEDIUM_DARK, EnvCondition.HIGH_DARK),
                      (EnvCondition.NORMAL, EnvCondition.LIGHT_RAIN, EnvCondition.MODERATE_RAIN,
                       EnvCondition.HEAVY_RAIN)):
            crfs = [self.table.lookup(condition).max_crf for condition in group]
            self.assertEqual(crfs, sorted(crfs, reverse=True))

    def test_lookup_by_psnr(self):
        self.assertIs(self.table.lookup_by_psnr(43).condition, EnvCondition.MEDIUM_DARK)
        self.assertIs(self.table.lookup_by_psnr(41).condition, EnvCondition.NORMAL)
        self.assertIs(self.table.lookup_by_psnr(60).condition, EnvCondition.MODERATE_RAIN)
        self.assertIsNone(ReferenceTable(entries={
            condition: ReferenceTableEntry(condition, None, None, None, None) for condition in CONDITIONS
        }).lookup_by_psnr(10))


class CalibratorTests(unittest.TestCase):

    @classmethod
    def setUpClass(cls) -> None:
        cls.corpus = as_pairs(generate_corpus(5, 3))

    def test_invalid_corpus(self):
        with self.assertRaises(CalibrationError):
            Calibrator([])
        with self.assertRaises(CalibrationError):
            Calibrator([(gray(128, 160, 120), ())])

    def test_lossless_point(self):
        calibrator = Calibrator(self.corpus, verbosity=0)
        point = calibrator.evaluate_point(EnvCondition.NORMAL, 0)
        self.assertEqual(point.psnr, INFINITE)
        self.assertEqual(point.accuracy, 1.0)
        self.assertEqual(point.model_id, "contrast-normal-crf00")
        self.assertIs(calibrator.evaluate_point(EnvCondition.NORMAL, 0), point)
        self.assertEqual(calibrator.calls, 1)
        with self.assertRaises(CalibrationError):
            calibrator.evaluate_point(EnvCondition.NORMAL, 52)

    def test_clear_weather_compresses_at_least_as_far_as_heavy_rain(self):
        calibrator = Calibrator(self.corpus, seed=1, verbosity=0)
        normal = calibrator.search(EnvCondition.NORMAL)
        heavy = calibrator.search(EnvCondition.HEAVY_RAIN)
        self.assertGreaterEqual(_max_crf(normal), _max_crf(heavy))
        self.assertLessEqual(calibrator.calls, 30)

    def test_reference_table_is_reproducible(self):
        tiny = self.corpus[:2]
        first = Calibrator(tiny, seed=2, verbosity=0)
        table = first.build_reference_table(config_hash="abc", timestamp="2020-01-01T00:00:00")
        self.assertEqual(set(table.entries), set(CONDITIONS))
        self.assertEqual(table.provenance['config_hash'], "abc")
        self.assertEqual(table.provenance['corpus_hash'], first.corpus_hash)
        for entry in table.entries.values():
            if entry.max_crf is not None:
                self.assertGreaterEqual(entry.accuracy, 0.97)
                self.assertIn(entry.model_id, table.models)
        points = first.points()
        self.assertEqual(list(points.columns[:4]), ['condition', 'crf', 'accuracy', 'psnr'])
        self.assertEqual(len(points), first.calls)
        again = Calibrator(tiny, seed=2, verbosity=0).build_reference_table("abc", "2020-01-01T00:00:00")
        self.assertEqual(again.dumps(), table.dumps())
