import random
import unittest

from eblc.detectors import (
    Annotation,
    BBox,
    ContrastCalibration,
    ContrastDetector,
    Detection,
    DetectorConfig,
    MatchResult,
    detection_accuracy,
    iou,
    match,
    nms,
    synthesize_scene,
)
from eblc.codecs import BuiltinCodec
from eblc.utils.augment import synthesize
from eblc.utils.conditions import EnvCondition, DEFAULT_SEVERITIES
from eblc.utils.exceptions import DetectorError, MalformedXml, MissingField, NoGroundTruth, TooManyTargets
from eblc.utils.voc_parser import VOCParser, parse_voc
from ._template import _TemplateCorpusTests, gray, input_path


def _det(box, score=0.9):
    return Detection(box=BBox(*box), score=score)


def _truth(box):
    return Annotation(box=BBox(*box))


class BoxTests(unittest.TestCase):

    def test_iou(self):
        self.assertAlmostEqual(iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)), 1 / 3)
        self.assertEqual(iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)), 0.0)
        self.assertEqual(iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)), 1.0)

    def test_degenerate_box(self):
        with self.assertRaises(DetectorError):
            BBox(5, 0, 5, 10)

    def test_score_range(self):
        with self.assertRaises(DetectorError):
            _det((0, 0, 1, 1), score=1.5)

    def test_config_validation(self):
        with self.assertRaises(DetectorError):
            DetectorConfig(match_iou=0.0)
        with self.assertRaises(DetectorError):
            DetectorConfig(input_size=0)
        self.assertEqual(DetectorConfig.from_dict({'input_size': 224, 'other': 1}).input_size, 224)


class MatchingTests(unittest.TestCase):

    def test_nms(self):
        strong, weak = _det((0, 0, 10, 10), 0.9), _det((0, 0, 10, 6), 0.5)
        far = _det((40, 40, 50, 50), 0.7)
        self.assertEqual(nms([weak, strong, far], 0.5), [strong, far])
        self.assertEqual(nms([weak, strong], 0.7), [strong, weak])
        self.assertEqual(nms([], 0.5), [])

    def test_nms_equal_scores_keep_order(self):
        first, second = _det((0, 0, 10, 10), 0.5), _det((1, 0, 11, 10), 0.5)
        self.assertEqual(nms([first, second], 0.5), [first])
        self.assertEqual(nms([second, first], 0.5), [second])

    def test_perfect_match(self):
        boxes = [(0, 0, 10, 10), (20, 0, 30, 10), (40, 0, 50, 10)]
        result = match([_det(box) for box in boxes], [_truth(box) for box in boxes])
        self.assertEqual(result, MatchResult(3, 0, 0))
        self.assertEqual(result.recall, 1.0)

    def test_no_detections(self):
        truths = [_truth((0, 0, 10, 10)), _truth((20, 0, 30, 10)), _truth((40, 0, 50, 10))]
        result = match([], truths)
        self.assertEqual(result, MatchResult(0, 0, 3))
        self.assertEqual(result.recall, 0.0)

    def test_duplicate_detection_is_false_positive(self):
        dets = [_det((0, 0, 10, 10), 0.9), _det((0, 0, 10, 6), 0.8)]
        self.assertEqual(match(dets, [_truth((0, 0, 10, 10))], 0.5), MatchResult(1, 1, 0))

    def test_other_class_never_matches(self):
        det = Detection(box=BBox(0, 0, 10, 10), score=0.9, class_label="car")
        self.assertEqual(match([det], [_truth((0, 0, 10, 10))]), MatchResult(0, 1, 1))

    def test_accuracy(self):
        self.assertAlmostEqual(detection_accuracy(2, 5, 1), 2 / 3)
        with self.assertRaises(NoGroundTruth):
            detection_accuracy(0, 3, 0)
        self.assertEqual(MatchResult(1, 0, 1) + MatchResult(1, 1, 0), MatchResult(2, 1, 1))


class MatchingPropertyTests(unittest.TestCase):

    def setUp(self) -> None:
        self.rng = random.Random(17)

    def random_box(self):
        x, y = self.rng.randrange(0, 60), self.rng.randrange(0, 60)
        return BBox(x, y, x + self.rng.randrange(1, 30), y + self.rng.randrange(1, 30))

    def random_detections(self):
        # scores on a coarse grid so that ties occur
        return [
            Detection(box=self.random_box(), score=self.rng.randrange(0, 11) / 10)
            for _ in range(self.rng.randrange(0, 12))
        ]

    def test_nms_survivors(self):
        for _ in range(200):
            dets = self.random_detections()
            threshold = self.rng.choice((0.1, 0.3, 0.5, 0.7, 0.9))
            kept = nms(dets, threshold)
            self.assertTrue(all(any(survivor is det for det in dets) for survivor in kept))
            for position, first in enumerate(kept):
                for second in kept[position + 1:]:
                    self.assertLess(iou(first.box, second.box), threshold)
            self.assertEqual([det.score for det in kept], sorted((det.score for det in kept), reverse=True))
            if dets:
                strongest = max(det.score for det in dets)
                self.assertIs(kept[0], next(det for det in dets if det.score == strongest))

    def test_match_counts(self):
        for _ in range(200):
            dets = self.random_detections()
            truths = [Annotation(box=self.random_box()) for _ in range(self.rng.randrange(0, 8))]
            result = match(dets, truths, self.rng.choice((0.3, 0.5, 0.7)))
            self.assertEqual(result.tp + result.fp, len(dets))
            self.assertEqual(result.tp + result.fn, len(truths))
            self.assertLessEqual(result.tp, min(len(dets), len(truths)))
            self.assertGreaterEqual(min(result.tp, result.fp, result.fn), 0)


class VOCParserTests(unittest.TestCase):

    def setUp(self) -> None:
        self.parser = VOCParser()

    def test_person(self):
        annotations = self.parser.parse_file(input_path("person.xml"))
        self.assertEqual(len(annotations), 1)
        self.assertEqual(annotations[0].box.as_tuple(), (10, 20, 50, 80))
        self.assertEqual(annotations[0].class_label, "person")
        self.assertEqual(annotations[0].frame_id, "000007")

    def test_empty(self):
        self.assertEqual(self.parser.parse_file(input_path("empty.xml")), [])

    def test_missing_bndbox(self):
        with self.assertRaises(MissingField) as ctx:
            self.parser.parse_file(input_path("missing_bndbox.xml"))
        self.assertEqual(ctx.exception.path, "object/bndbox")

    def test_malformed(self):
        with self.assertRaises(MalformedXml):
            self.parser.parse("<annotation><object>")
        with self.assertRaises(MalformedXml):
            self.parser.parse("<scene/>")

    def test_written_document_parses_back(self):
        annotations = [_truth((1, 2, 9, 22)), _truth((30, 5, 38, 25))]
        xml = self.parser.write(annotations, "000003", 160, 120)
        parsed = self.parser.parse(xml)
        self.assertEqual([a.box for a in parsed], [a.box for a in annotations])
        self.assertEqual({a.frame_id for a in parsed}, {"000003"})
        self.assertEqual({a.frame_id for a in parse_voc(xml, "000009")}, {"000009"})


class SceneTests(unittest.TestCase):

    def test_no_targets(self):
        frame, annotations = synthesize_scene(1, 0, 160, 120)
        self.assertEqual(annotations, [])
        self.assertEqual(frame.shape, (160, 120))

    def test_deterministic(self):
        first = synthesize_scene(4, 3, 160, 120)
        second = synthesize_scene(4, 3, 160, 120)
        self.assertEqual(first[0].to_bytes(), second[0].to_bytes())
        self.assertEqual(first[1], second[1])

    def test_targets(self):
        _, annotations = synthesize_scene(5, 3, 160, 120)
        self.assertEqual(len(annotations), 3)
        for annotation in annotations:
            self.assertEqual((annotation.box.x_max - annotation.box.x_min,
                              annotation.box.y_max - annotation.box.y_min), (8, 20))
        for a in annotations:
            for b in annotations:
                if a is not b:
                    self.assertEqual(iou(a.box, b.box), 0.0)

    def test_too_many_targets(self):
        with self.assertRaises(TooManyTargets):
            synthesize_scene(0, 1, 20, 20)
        with self.assertRaises(TooManyTargets):
            synthesize_scene(0, 60, 160, 120)


class ContrastDetectorTests(_TemplateCorpusTests):

    def setUp(self) -> None:
        self.detector = ContrastDetector()

    def test_finds_targets_on_clear_scenes(self):
        total = MatchResult(0, 0, 0)
        for item in self.corpus:
            total = total + self.detector.evaluate(item.frame, item.annotations, ContrastCalibration())
        self.assertEqual(total.recall, 1.0)

    def test_blank_frame(self):
        self.assertEqual(self.detector.detect(gray(128, 160, 120)), [])

    def test_fit(self):
        fitted = ContrastCalibration.fit(
            [(item.frame, item.annotations) for item in self.corpus], model_id="contrast-normal-crf00"
        )
        self.assertEqual(fitted.model_id, "contrast-normal-crf00")
        self.assertGreater(fitted.threshold, 10.0)
        self.assertLess(fitted.threshold, 90.0)
        total = MatchResult(0, 0, 0)
        for item in self.corpus:
            total = total + self.detector.evaluate(item.frame, item.annotations, fitted)
        self.assertEqual(total.recall, 1.0)

    def test_heavy_compression_never_helps(self):
        codec = BuiltinCodec()
        pairs = [(item.frame, item.annotations) for item in self.corpus]
        for condition in (EnvCondition.NORMAL, EnvCondition.MEDIUM_DARK, EnvCondition.HEAVY_RAIN):
            severity = DEFAULT_SEVERITIES[condition].with_seed(self.seed)
            frames = [synthesize(frame, severity, index) for index, (frame, _) in enumerate(pairs)]
            accuracies = []
            for crf in (0, 51):
                decoded = codec.roundtrip(frames, crf)
                samples = [(frame, truths) for frame, (_, truths) in zip(decoded, pairs)]
                fitted = ContrastCalibration.fit(samples)
                total = MatchResult(0, 0, 0)
                for frame, truths in samples:
                    total = total + self.detector.evaluate(frame, truths, fitted)
                accuracies.append(total.recall)
            self.assertLessEqual(accuracies[1], accuracies[0])

    def test_fit_without_targets(self):
        fitted = ContrastCalibration.fit([(gray(128, 160, 120), [])], model_id="empty")
        self.assertEqual(fitted, ContrastCalibration(model_id="empty"))

    def test_calibration_dict(self):
        calibration = ContrastCalibration(40.0, 50.0, 70.0, "m")
        self.assertEqual(ContrastCalibration.from_dict(calibration.to_dict()), calibration)
