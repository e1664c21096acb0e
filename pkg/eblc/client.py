import os
import logging
from dataclasses import dataclass, asdict, field
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from eblc.calibrate import Calibrator, CalibrationConfig, ReferenceTable
from eblc.classifiers import ClassifierConfig, ThresholdClassifier, extract_features
from eblc.codecs import get_codec, BaseCodec, ExternalCodecConfig, DEFAULT_FPS
from eblc.controller import (
    ControllerConfig,
    EBLCController,
    run_static_baseline,
    reconcile_reduction,
)
from eblc.corpus import (
    CorpusItem,
    as_pairs,
    create_summary,
    generate_corpus,
    generate_stream,
    labelled_corpus,
    load_corpus,
    parse_schedule,
    save_corpus,
    DEFAULT_WIDTH,
    DEFAULT_HEIGHT,
    DEFAULT_TARGETS,
)
from eblc.detectors import ContrastDetector, DetectorConfig
from eblc.utils.augment import synthesize
from eblc.utils.conditions import EnvCondition, Severity, severity_table
from eblc.utils.dataset import ReportDataset, reports_to_jsonl
from eblc.utils.exceptions import EBLCError, EmptySequence
from eblc.utils.frame import load_frames
from eblc.utils.metrics import segment_quality
from eblc.utils.storage import atomic_write, canonical_json, read_json, sha256_hex, write_json


@dataclass(frozen=True)
class HarnessConfig:
    """
    Effective configuration of a harness run. Top-level scalars are global
    options; each nested object configures one component.
    """
    seed: int
    fps: float = DEFAULT_FPS
    codec: str = "builtin"
    timestamp: Optional[str] = None
    corpus: Dict[str, Any] = field(default_factory=dict)
    external_codec: ExternalCodecConfig = field(default_factory=ExternalCodecConfig)
    severities: Dict[str, dict] = field(default_factory=dict)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    _CORPUS_DEFAULTS = {
        'frames': 50,
        'width': DEFAULT_WIDTH,
        'height': DEFAULT_HEIGHT,
        'targets': DEFAULT_TARGETS,
        'per_class': 100,
    }

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise EBLCError(f"fps must be positive, got {self.fps}.", stage='config')
        object.__setattr__(self, 'corpus', {**self._CORPUS_DEFAULTS, **(self.corpus or {})})

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "HarnessConfig":
        """
        Build the configuration from its JSON form.

        :raises EBLCError: if the seed is missing or a section is invalid
        """
        data = data or {}
        _global = {key: value for key, value in data.items() if not isinstance(value, dict)}
        _local = {key.lower(): value for key, value in data.items() if isinstance(value, dict)}
        if _global.get('seed') is None:
            raise EBLCError("Configuration must set a seed.", stage='config')
        try:
            return cls(
                seed=int(_global['seed']),
                fps=float(_global.get('fps', DEFAULT_FPS)),
                codec=str(_global.get('codec', "builtin")),
                timestamp=_global.get('timestamp'),
                corpus=_local.get('corpus', {}),
                external_codec=ExternalCodecConfig.from_dict(_local.get('external_codec')),
                severities=_local.get('severities', {}),
                calibration=CalibrationConfig.from_dict(_local.get('calibration')),
                controller=ControllerConfig.from_dict(_local.get('controller')),
                detector=DetectorConfig.from_dict(_local.get('detector')),
            )
        except (TypeError, ValueError) as exc:
            raise EBLCError(f"Invalid configuration: {exc}", stage='config') from exc

    @classmethod
    def load(cls, path_or_text: Optional[str] = None, **overrides: Any) -> "HarnessConfig":
        """
        Load the configuration from a JSON file or inline JSON text; global
        options given as keyword arguments take precedence when not None.
        """
        data = {}
        if path_or_text is not None:
            try:
                data = read_json(path_or_text)
            except ValueError as exc:
                raise EBLCError(f"Invalid JSON format in config: {path_or_text}", stage='config') from exc
            if not isinstance(data, dict):
                raise EBLCError("Configuration must be a JSON object.", stage='config')
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            'seed': self.seed,
            'fps': self.fps,
            'codec': self.codec,
            'timestamp': self.timestamp,
            'corpus': dict(self.corpus),
            'external_codec': asdict(self.external_codec),
            'severities': self.severities,
            'calibration': self.calibration.to_dict(),
            'controller': asdict(self.controller),
            'detector': asdict(self.detector),
        }

    @property
    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))

    def severity_table(self) -> Dict[EnvCondition, Severity]:
        return severity_table(self.severities)


class EBLC:
    """
    The EBLC class wires corpus generation, calibration, classification and
    the feedback controller together. Every subcommand is one method; results
    are written into the output folder, never outside it.
    """
    def __init__(
        self,
        config: HarnessConfig,
        outfolder: str = None,
        verbosity: int = 1,
    ) -> None:
        self.config = config
        self.logger = logging.getLogger(self.__class__.__name__)
        logging.basicConfig(level=logging.INFO if verbosity > 0 else logging.ERROR)
        self._verbosity = verbosity
        self.outfolder = outfolder
        if self.outfolder is not None:
            self.outfolder = os.path.abspath(outfolder)
            os.makedirs(self.outfolder, exist_ok=True)
        self._codec: Optional[BaseCodec] = None
        self._detector: Optional[ContrastDetector] = None

    @property
    def codec(self) -> BaseCodec:
        if self._codec is None:
            self._codec = get_codec(self.config.codec, self.config.external_codec, self.config.fps)
        return self._codec

    @property
    def detector(self) -> ContrastDetector:
        if self._detector is None:
            self._detector = ContrastDetector(self.config.detector)
        return self._detector

    def output_path(self, *parts: str) -> str:
        """
        Path inside the output folder.

        :raises EBLCError: if no output folder is set or the path escapes it
        """
        if self.outfolder is None:
            raise EBLCError("No output folder configured; use --output.", stage='output')
        _path = os.path.abspath(os.path.join(self.outfolder, *parts))
        if os.path.commonpath([_path, self.outfolder]) != self.outfolder:
            raise EBLCError(f'Path "{_path}" lies outside the output folder.', stage='output')
        return _path

    def _write_provenance(self, subcommand: str) -> None:
        write_json(self.output_path("config.json"), {
            'subcommand': subcommand,
            'config': self.config.to_dict(),
            'config_hash': self.config.config_hash,
        })

    def _info(self, message: str, *args) -> None:
        if self._verbosity > 0:
            self.logger.info(message, *args)

    def _corpus(self, corpus_dir: Optional[str]) -> List[CorpusItem]:
        if corpus_dir is not None:
            items, _ = load_corpus(corpus_dir)
            return items
        _cfg = self.config.corpus
        return generate_corpus(
            self.config.seed, int(_cfg['frames']), int(_cfg['width']), int(_cfg['height']), int(_cfg['targets'])
        )

    def gen_corpus(self, frames: int = None, schedule: Union[str, list] = None) -> List[CorpusItem]:
        """
        Generate an annotated corpus from the configured seed and write it.
        With a schedule the scenes are replayed as a weather stream.

        :param frames: number of frames, overrides ``corpus.frames``
        :type frames: int
        :param schedule: weather schedule, see :func:`eblc.corpus.parse_schedule`
        :type schedule: Union[str, list]
        :return: written corpus items
        :rtype: List[CorpusItem]
        """
        _cfg = self.config.corpus
        _count = int(_cfg['frames'] if frames is None else frames)
        items = generate_corpus(
            self.config.seed, _count, int(_cfg['width']), int(_cfg['height']), int(_cfg['targets'])
        )
        _schedule = None
        if schedule is not None:
            _schedule = parse_schedule(schedule)
            items = generate_stream(items, _schedule, self.config.severity_table(), self.config.seed)
        save_corpus(self.output_path(), items, _schedule, self.config.seed, self.config.config_hash)
        summary = create_summary(items, _schedule, verbose=self._verbosity > 0)
        write_json(self.output_path("summary.json"), summary)
        self._write_provenance('gen-corpus')
        return items

    def augment(self, corpus_dir: str, condition: Union[str, EnvCondition]) -> List[CorpusItem]:
        """
        Synthesise a corpus to one condition with the configured severity,
        keeping frame identifiers and annotations.
        """
        _condition = condition if isinstance(condition, EnvCondition) else EnvCondition.parse(condition)
        severity = self.config.severity_table()[_condition].with_seed(self.config.seed)
        items = [
            CorpusItem(item.frame_id, synthesize(item.frame, severity, index), item.annotations)
            for index, item in enumerate(self._corpus(corpus_dir))
        ]
        _schedule = [_condition] * len(items)
        save_corpus(self.output_path(), items, _schedule, self.config.seed, self.config.config_hash)
        write_json(self.output_path("summary.json"), create_summary(items, _schedule, verbose=self._verbosity > 0))
        self._write_provenance('augment')
        return items

    def calibrate(self, corpus_dir: str = None) -> ReferenceTable:
        """
        Build the reference table on an annotated clear corpus and fit the
        classifier thresholds on a labelled synthetic corpus.

        Writes ``reference_table.json``, ``classifier.json`` and
        ``calibration_points.csv``.

        :param corpus_dir: annotated clear corpus; generated from the seed when omitted
        :type corpus_dir: str
        :return: reference table
        :rtype: ReferenceTable
        """
        items = self._corpus(corpus_dir)
        if not items:
            raise EmptySequence("Calibration corpus is empty.", stage='calibrate')
        severities = self.config.severity_table()
        calibrator = Calibrator(
            as_pairs(items),
            codec=self.codec,
            detector=self.detector,
            severities=severities,
            config=self.config.calibration,
            seed=self.config.seed,
            verbosity=self._verbosity,
        )
        table = calibrator.build_reference_table(self.config.config_hash, self.config.timestamp)
        self._info(
            'INFO: %s: %d points evaluated on %d frames.', self.logger.name, calibrator.calls, len(items)
        )
        table.save(self.output_path("reference_table.json"))
        atomic_write(self.output_path("calibration_points.csv"), calibrator.points().to_csv(index=False))

        _cfg = self.config.corpus
        labelled = labelled_corpus(
            self.config.seed, int(_cfg['per_class']), int(_cfg['width']), int(_cfg['height']), severities
        )
        classifier = ThresholdClassifier.calibrate(labelled)
        write_json(
            self.output_path("classifier.json"),
            {**classifier.config.to_dict(), 'config_hash': self.config.config_hash},
        )
        self._info(
            'INFO: %s: classifier accuracy on its calibration corpus %.4f.',
            self.logger.name, classifier.accuracy(labelled)
        )
        self._write_provenance('calibrate')
        return table

    def classify(self, frames_dir: str, classifier_path: str) -> pd.DataFrame:
        """
        Predict the condition of every frame. When the corpus manifest holds
        a schedule the true condition is reported next to the prediction.

        Writes ``classifications.csv``.
        """
        classifier = ThresholdClassifier(ClassifierConfig.load(classifier_path))
        items, schedule = load_corpus(frames_dir)
        rows = []
        for index, item in enumerate(items):
            features = extract_features(item.frame)
            rows.append({
                'frame_id': item.frame_id,
                'condition': classifier.classify_frame(item.frame).argmax.value,
                'true_condition': None if schedule is None else schedule[index].value,
                'mean_lightness': features.mean_lightness,
                'lightness_stddev': features.lightness_stddev,
                'streak_energy': features.streak_energy,
                'sharpness': features.sharpness,
            })
        results = pd.DataFrame(rows)
        if schedule is not None:
            self._info(
                'INFO: %s: classification accuracy %.4f.',
                self.logger.name, float((results['condition'] == results['true_condition']).mean())
            )
        atomic_write(self.output_path("classifications.csv"), results.to_csv(index=False))
        self._write_provenance('classify')
        return results

    def metrics(self, reference_dir: str, degraded_dir: str) -> dict:
        """
        Segment PSNR, RMSE and SSIM of a degraded frame directory against its
        reference. Writes ``metrics.json``.
        """
        reference = [frame for _, frame in load_frames(_frames_folder(reference_dir))]
        degraded = [frame for _, frame in load_frames(_frames_folder(degraded_dir))]
        report = segment_quality(reference, degraded, with_ssim=True).to_dict()
        report['config_hash'] = self.config.config_hash
        write_json(self.output_path("metrics.json"), report)
        return report

    def run(
        self,
        corpus_dir: str,
        table_path: str = None,
        classifier_path: str = None,
        schedule: Union[str, list] = None,
        static_crf: int = None,
    ) -> dict:
        """
        Stream a corpus through the feedback controller, or through the
        pinned-CRF baseline when ``static_crf`` is given.

        A schedule turns a clear corpus into a weather stream first. Without
        one, a schedule stored in the corpus manifest labels the frames.
        Writes ``reports.jsonl``, ``detections.jsonl`` (the boxes found in
        every frame) and ``summary.json``.

        :return: summary as written to ``summary.json``
        :rtype: dict
        """
        items, stored = load_corpus(corpus_dir)
        _schedule = stored
        if schedule is not None:
            _schedule = parse_schedule(schedule)
            items = generate_stream(items, _schedule, self.config.severity_table(), self.config.seed)
        table = None if table_path is None else ReferenceTable.load(table_path)
        frames = [item.frame for item in items]
        annotations = [item.annotations for item in items]
        frame_ids = [item.frame_id for item in items]

        if static_crf is not None:
            reports = run_static_baseline(
                frames, int(static_crf), self.detector, table, self.codec, annotations, frame_ids, _schedule
            )
        else:
            if table is None or classifier_path is None:
                raise EBLCError("The controller needs --table and --classifier.", stage='run')
            controller = EBLCController(
                table,
                ThresholdClassifier(ClassifierConfig.load(classifier_path)),
                codec=self.codec,
                detector=self.detector,
                config=self.config.controller,
                verbosity=self._verbosity,
            )
            reports = controller.run(frames, annotations, frame_ids, _schedule)

        records = [report.to_dict() for report in reports]
        atomic_write(self.output_path("reports.jsonl"), reports_to_jsonl(records))
        atomic_write(self.output_path("detections.jsonl"), reports_to_jsonl(
            {'frame_id': report.frame_id, 'detections': [box.to_dict() for box in report.boxes]}
            for report in reports
        ))
        dataset = ReportDataset.from_reports(records)
        summary = dataset.summarize(self.config.fps, by='condition')
        if _schedule is not None:
            summary.update(dataset.summarize(self.config.fps, by='true_condition'))
        summary['mode'] = 'dynamic' if static_crf is None else f'static crf {int(static_crf)}'
        summary['config_hash'] = self.config.config_hash
        write_json(self.output_path("summary.json"), summary)
        self._info(
            'INFO: %s: %d frames sent, mean accuracy %s, reduction %.2fx.',
            self.logger.name, len(records), summary['overall']['mean_accuracy'], summary['overall']['reduction']
        )
        self._write_provenance('run')
        return summary

    def evaluate(self, reports_path: str, fixture_path: str = None) -> dict:
        """
        Summarise a report stream and write ``evaluation.json`` together
        with ``accuracy.csv`` (condition x crf x accuracy). A published table
        fixture, when given, is reconciled into ``reconciliation.csv``.
        """
        if not os.path.isfile(reports_path):
            raise EBLCError(f'Reports file "{reports_path}" does not exist.', stage='evaluate')
        with open(reports_path, 'r', encoding='utf-8') as file:
            dataset = ReportDataset.from_jsonl(file.read())
        summary = dataset.summarize(self.config.fps, by='condition')
        if dataset['true_condition'].notna().any():
            summary.update(dataset.summarize(self.config.fps, by='true_condition'))
        summary['config_hash'] = self.config.config_hash
        if fixture_path is not None:
            reconciled = reconcile_table(fixture_path)
            atomic_write(self.output_path("reconciliation.csv"), reconciled.to_csv(index=False))
            summary['inconsistent_rows'] = reconciled.loc[~reconciled['consistent'], 'condition'].tolist()
        write_json(self.output_path("evaluation.json"), summary)
        atomic_write(self.output_path("accuracy.csv"), dataset.accuracy_table().to_csv(index=False))
        self._write_provenance('evaluate')
        return summary


def reconcile_table(fixture_path: str) -> pd.DataFrame:
    """
    Recompute the reduction factor of every row of a published bitrate
    table (tab separated, with ``condition``, ``raw_mbps``, ``required_mbps``
    and ``printed_reduction`` columns).

    :param fixture_path: TSV file
    :type fixture_path: str
    :return: the fixture with ``computed``, ``consistent`` and ``notation_mapped`` columns
    :rtype: pandas.DataFrame
    """
    table = pd.read_csv(fixture_path, sep='\t', dtype={'printed_reduction': str})
    checks = [
        reconcile_reduction(row.raw_mbps, row.required_mbps, row.printed_reduction)
        for row in table.itertuples(index=False)
    ]
    table['computed'] = [round(check.computed, 2) for check in checks]
    table['consistent'] = [check.consistent for check in checks]
    table['notation_mapped'] = [check.notation_mapped for check in checks]
    return table


def _frames_folder(folder: str) -> str:
    _nested = os.path.join(folder, "frames")
    return _nested if os.path.isdir(_nested) else folder
