import unittest

from eblc.controller import (
    ControllerConfig,
    EBLCController,
    StepReport,
    bandwidth_reduction,
    reconcile_reduction,
    run_static_baseline,
)
from eblc.utils import status as st
from eblc.utils.conditions import EnvCondition
from eblc.utils.exceptions import ControllerError, InvalidProfile, MalformedReport, ZeroCompressedSize
from eblc.utils.metrics import INFINITE
from ._template import (
    _TemplateCorpusTests,
    FailingClassifier,
    ScriptedClassifier,
    SequenceClassifier,
    fixed_table,
    gray,
)

NORMAL = EnvCondition.NORMAL
HEAVY = EnvCondition.HEAVY_RAIN


def _frames(stream):
    return [item.frame for item in stream]


def _truths(stream):
    return [item.annotations for item in stream]


class ReductionTests(unittest.TestCase):

    def test_bandwidth_reduction(self):
        self.assertAlmostEqual(bandwidth_reduction(9.82, 0.53), 18.53, places=2)
        self.assertEqual(bandwidth_reduction(1000, 1000), 1.0)
        with self.assertRaises(ZeroCompressedSize):
            bandwidth_reduction(1000, 0)
        with self.assertRaises(ControllerError):
            bandwidth_reduction(0, 10)

    def test_published_rows(self):
        normal = reconcile_reduction(9.82, 0.53, "18×")
        self.assertTrue(normal.consistent)
        uncompressed = reconcile_reduction(9.82, 9.82, "0×")
        self.assertTrue(uncompressed.notation_mapped)
        self.assertEqual(uncompressed.printed, 1.0)
        self.assertTrue(uncompressed.consistent)
        medium_dark = reconcile_reduction(9.82, 1.01, "9.5×")
        self.assertAlmostEqual(medium_dark.computed, 9.72, places=2)
        self.assertTrue(medium_dark.consistent)
        self.assertTrue(reconcile_reduction(9.82, 4.05, "2.5x").consistent)

    def test_light_rain_row_is_flagged(self):
        with self.assertLogs('eblc.controller', level='WARNING'):
            light_rain = reconcile_reduction(9.82, 5.15, "1.5×")
        self.assertFalse(light_rain.consistent)
        self.assertAlmostEqual(light_rain.computed, 1.91, places=2)

    def test_unreadable_factor(self):
        with self.assertRaises(MalformedReport):
            reconcile_reduction(9.82, 1.0, "about ten")


class ReportTests(unittest.TestCase):

    def test_dict_roundtrip(self):
        report = StepReport(
            frame_id="000004", condition=HEAVY, crf=0, psnr=INFINITE, detections=2, accuracy=0.5,
            compressed_bits=800, raw_bits=6144, bandwidth_reduction=7.68, model_id=None,
            status=st.FallbackCrf(), tp=1, fp=1, fn=1, true_condition=NORMAL, fallback=True,
        )
        data = report.to_dict()
        self.assertEqual(data['psnr'], "Infinity")
        self.assertEqual(data['status'], "fallback crf")
        self.assertEqual(StepReport.from_dict(data), report)

    def test_invalid(self):
        with self.assertRaises(MalformedReport):
            StepReport.from_dict({'frame_id': "1", 'condition': "fog"})

    def test_config(self):
        with self.assertRaises(ControllerError):
            ControllerConfig(classify_every=0)
        self.assertEqual(ControllerConfig.from_dict({'vote_window': 5, 'x': 1}), ControllerConfig(10, 5))


class ControllerTests(_TemplateCorpusTests):

    def setUp(self) -> None:
        self.table = fixed_table({NORMAL: 30, HEAVY: 5})

    def test_clear_stream_stays_at_its_crf(self):
        schedule = [NORMAL] * 8
        stream = self.stream(schedule)
        controller = EBLCController(self.table, ScriptedClassifier.for_stream(stream, schedule), verbosity=0)
        reports = controller.run(_frames(stream), _truths(stream), schedule=schedule)
        self.assertEqual(len(reports), 8)
        self.assertEqual({report.crf for report in reports}, {30})
        self.assertEqual({report.model_id for report in reports}, {"contrast-normal-crf30"})
        self.assertTrue(all(report.bandwidth_reduction > 1 for report in reports))
        self.assertEqual(reports[0].status, st.Classified())
        self.assertEqual(reports[1].status, st.Ok())
        self.assertEqual([len(report.boxes) for report in reports], [report.detections for report in reports])
        self.assertNotIn('boxes', reports[0].to_dict())

    def test_switch_needs_a_majority(self):
        schedule = [NORMAL] * 4 + [HEAVY] * 8
        stream = self.stream(schedule)
        classifier = ScriptedClassifier.for_stream(stream, schedule)
        controller = EBLCController(self.table, classifier, config=ControllerConfig(2, 3), verbosity=0)
        reports = controller.run(_frames(stream), schedule=schedule)
        # votes on frames 4 and 6 see rain; the second one tips the window
        self.assertEqual(reports[6].status, st.Switched())
        self.assertEqual([report.condition for report in reports[:7]], [NORMAL] * 7)
        self.assertEqual([report.condition for report in reports[7:]], [HEAVY] * 5)
        self.assertEqual({report.crf for report in reports[7:]}, {5})
        self.assertEqual(classifier.calls, 1 + 6)

    def test_step_by_step(self):
        controller = EBLCController(
            self.table, SequenceClassifier([NORMAL, HEAVY, HEAVY]), config=ControllerConfig(1, 3), verbosity=0
        )
        frame = gray(100, 32, 32)
        state = controller.initialize(frame)
        self.assertEqual(state.classify_window, (NORMAL,) * 3)
        report, state = controller.step(frame, state, frame_id="000000")
        self.assertEqual((report.crf, report.status), (30, st.Classified()))
        self.assertEqual(state.classify_window, (NORMAL, NORMAL, HEAVY))
        report, state = controller.step(frame, state, frame_id="000001")
        self.assertEqual((report.crf, report.status), (30, st.Switched()))
        self.assertEqual((state.active_condition, state.active_crf), (HEAVY, 5))
        self.assertEqual(state.frames_since_classify, 0)

    def test_single_glitch_is_ignored(self):
        votes = [NORMAL] * 4 + [HEAVY] + [NORMAL] * 8
        controller = EBLCController(self.table, SequenceClassifier(votes), config=ControllerConfig(1, 3), verbosity=0)
        reports = controller.run([gray(100, 32, 32)] * 10)
        self.assertEqual({report.condition for report in reports}, {NORMAL})
        self.assertNotIn(st.Switched(), [report.status for report in reports])

    def test_switch_after_two_votes(self):
        votes = [NORMAL] * 3 + [HEAVY] * 10
        controller = EBLCController(self.table, SequenceClassifier(votes), config=ControllerConfig(1, 3), verbosity=0)
        reports = controller.run([gray(100, 32, 32)] * 8)
        # frame k is classified with votes[k + 1]
        self.assertEqual(reports[3].status, st.Switched())
        self.assertEqual([report.crf for report in reports], [30] * 4 + [5] * 4)

    def test_classifier_failure_keeps_condition(self):
        controller = EBLCController(self.table, FailingClassifier(), config=ControllerConfig(2, 3), verbosity=0)
        with self.assertLogs('EBLCController', level='WARNING'):
            reports = controller.run([gray(100, 32, 32)] * 4)
        self.assertEqual([str(report.status) for report in reports],
                         ["classifier failed", "ok", "classifier failed", "ok"])
        self.assertEqual({report.condition for report in reports}, {NORMAL})
        self.assertEqual({report.crf for report in reports}, {30})

    def test_fallback_crf(self):
        table = fixed_table({NORMAL: None})
        controller = EBLCController(table, SequenceClassifier([NORMAL]), config=ControllerConfig(1, 3), verbosity=0)
        reports = controller.run([gray(100, 32, 32)] * 3)
        for report in reports:
            self.assertEqual(report.crf, 0)
            self.assertTrue(report.fallback)
            self.assertEqual(report.status, st.FallbackCrf())
            self.assertEqual(report.psnr, INFINITE)
            self.assertIsNone(report.model_id)

    def test_empty_stream(self):
        self.assertEqual(EBLCController(self.table, SequenceClassifier([NORMAL])).run([]), [])

    def test_deterministic(self):
        schedule = [NORMAL] * 3 + [HEAVY] * 5
        stream = self.stream(schedule)
        runs = [
            [report.to_dict() for report in EBLCController(
                self.table, ScriptedClassifier.for_stream(stream, schedule), config=ControllerConfig(1, 3),
                verbosity=0,
            ).run(_frames(stream), _truths(stream), schedule=schedule)]
            for _ in range(2)
        ]
        self.assertEqual(runs[0], runs[1])
        self.assertEqual(runs[0][-1]['true_condition'], "heavy_rain")


class StaticBaselineTests(_TemplateCorpusTests):

    def test_lossless(self):
        stream = self.stream([NORMAL] * 3)
        reports = run_static_baseline(_frames(stream), 0, annotations=_truths(stream))
        self.assertEqual({report.psnr for report in reports}, {INFINITE})
        self.assertEqual({report.crf for report in reports}, {0})
        self.assertTrue(all(report.accuracy is not None for report in reports))

    def test_matches_controller_on_clear_stream(self):
        schedule = [NORMAL] * 4
        stream = self.stream(schedule)
        table = fixed_table({NORMAL: 30})
        dynamic = EBLCController(table, ScriptedClassifier.for_stream(stream, schedule), verbosity=0).run(
            _frames(stream), _truths(stream)
        )
        static = run_static_baseline(_frames(stream), 30, table=table, annotations=_truths(stream))
        self.assertEqual([r.compressed_bits for r in static], [r.compressed_bits for r in dynamic])
        self.assertEqual([r.accuracy for r in static], [r.accuracy for r in dynamic])

    def test_invalid_crf(self):
        with self.assertRaises(InvalidProfile):
            run_static_baseline([gray(1)], 60)
