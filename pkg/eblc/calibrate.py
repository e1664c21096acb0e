"""
Offline construction of the reference table: for every environmental
condition, the largest CRF at which detection accuracy stays at or above the
baseline threshold, together with the detector calibration fitted at that
point.
"""
import math
import asyncio
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from eblc.codecs import BaseCodec, BuiltinCodec, CRF_MIN, CRF_MAX
from eblc.detectors.base import Annotation, MatchResult
from eblc.detectors.contrast import ContrastCalibration, ContrastDetector
from eblc.utils.augment import synthesize
from eblc.utils.conditions import EnvCondition, CONDITIONS, Severity, DEFAULT_SEVERITIES
from eblc.utils.exceptions import CalibrationError
from eblc.utils.frame import Frame
from eblc.utils.metrics import segment_quality
from eblc.utils.storage import atomic_write, canonical_json, read_json, sha256_hex

COARSE_GRID = (10, 20, 30, 40, 50, 51)

Corpus = Sequence[Tuple[Frame, Sequence[Annotation]]]


@dataclass(frozen=True)
class CalibrationConfig:
    accuracy_threshold: float = 0.97
    coarse_grid: Tuple[int, ...] = COARSE_GRID
    crf_min: int = CRF_MIN
    crf_max: int = CRF_MAX
    corpus_ref: str = ""
    detector_ref: str = "contrast"
    train_fraction: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, 'coarse_grid', tuple(int(crf) for crf in self.coarse_grid))
        if not 0 < self.accuracy_threshold <= 1:
            raise CalibrationError(
                f"accuracy_threshold must lie in (0, 1], got {self.accuracy_threshold}.",
                stage='calibrate'
            )
        if not 0 < self.train_fraction < 1:
            raise CalibrationError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}.", stage='calibrate'
            )
        if not CRF_MIN <= self.crf_min <= self.crf_max <= CRF_MAX:
            raise CalibrationError(
                f"CRF range [{self.crf_min}, {self.crf_max}] is not inside [{CRF_MIN}, {CRF_MAX}].",
                stage='calibrate'
            )
        if not self.coarse_grid:
            raise CalibrationError("coarse_grid must not be empty.", stage='calibrate')
        if any(b <= a for a, b in zip(self.coarse_grid, self.coarse_grid[1:])):
            raise CalibrationError("coarse_grid must be strictly increasing.", stage='calibrate')
        if self.coarse_grid[0] < self.crf_min or self.coarse_grid[-1] > self.crf_max:
            raise CalibrationError("coarse_grid must lie inside [crf_min, crf_max].", stage='calibrate')

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationConfig":
        return cls(**{key: value for key, value in (data or {}).items() if key in cls.__dataclass_fields__})

    def to_dict(self) -> dict:
        return {
            'accuracy_threshold': self.accuracy_threshold,
            'coarse_grid': list(self.coarse_grid),
            'crf_min': self.crf_min,
            'crf_max': self.crf_max,
            'corpus_ref': self.corpus_ref,
            'detector_ref': self.detector_ref,
            'train_fraction': self.train_fraction,
        }


def coarse_to_fine_search(
    evaluate: Callable[[int], float], cfg: CalibrationConfig
) -> Optional[int]:
    """
    Largest CRF whose accuracy reaches the threshold, found by walking the
    coarse grid until the first failing point and then scanning every integer
    between the last passing grid point and that failure.

    When the first grid point already fails the scan covers ``crf_min`` up to
    it; when no grid point fails the scan covers the CRFs above the last grid
    point. On a monotone non-increasing accuracy curve the result equals
    :func:`exhaustive_oracle`; on other curves it is still a passing CRF.

    :param evaluate: accuracy for a CRF
    :type evaluate: Callable[[int], float]
    :param cfg: calibration configuration
    :type cfg: CalibrationConfig
    :return: the largest passing CRF found, or None if none passes
    :rtype: Optional[int]
    """
    def _passes(crf: int) -> bool:
        return evaluate(crf) >= cfg.accuracy_threshold

    last_valid = None
    first_invalid = None
    for crf in cfg.coarse_grid:
        if _passes(crf):
            last_valid = crf
        else:
            first_invalid = crf
            break

    if first_invalid is None:
        low, high = cfg.coarse_grid[-1] + 1, cfg.crf_max + 1
    else:
        low = cfg.crf_min if last_valid is None else last_valid + 1
        high = first_invalid

    best = last_valid
    for crf in range(low, high):
        if _passes(crf):
            best = crf
    return best


def exhaustive_oracle(evaluate: Callable[[int], float], cfg: CalibrationConfig) -> Optional[int]:
    """
    Largest CRF in ``[crf_min, crf_max]`` that reaches the threshold, by
    evaluating every one of them.
    """
    best = None
    for crf in range(cfg.crf_min, cfg.crf_max + 1):
        if evaluate(crf) >= cfg.accuracy_threshold:
            best = crf
    return best


@dataclass(frozen=True)
class PointResult:
    condition: EnvCondition
    crf: int
    accuracy: float
    psnr: float
    model_id: str
    calibration: ContrastCalibration
    matches: MatchResult

    def to_row(self) -> dict:
        return {
            'condition': self.condition.value,
            'crf': self.crf,
            'accuracy': self.accuracy,
            'psnr': self.psnr,
            'precision': self.matches.precision,
            'f1': self.matches.f1,
            'model_id': self.model_id,
        }


@dataclass(frozen=True)
class ReferenceTableEntry:
    condition: EnvCondition
    max_crf: Optional[int]
    min_psnr_db: Optional[float]
    model_id: Optional[str]
    accuracy: Optional[float]

    def to_dict(self) -> dict:
        _psnr = self.min_psnr_db
        if _psnr is not None and math.isinf(_psnr):
            _psnr = "Infinity"
        return {
            'condition': self.condition.value,
            'max_crf': self.max_crf,
            'min_psnr_db': _psnr,
            'model_id': self.model_id,
            'accuracy': self.accuracy,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceTableEntry":
        _psnr = data.get('min_psnr_db')
        return cls(
            condition=EnvCondition.parse(data['condition']),
            max_crf=None if data.get('max_crf') is None else int(data['max_crf']),
            min_psnr_db=None if _psnr is None else float(_psnr),
            model_id=data.get('model_id'),
            accuracy=None if data.get('accuracy') is None else float(data['accuracy']),
        )


@dataclass
class ReferenceTable:
    """
    One entry per environmental condition plus the library of detector
    calibrations fitted during the search, keyed by model id. ``provenance`` records the configuration hash, the
    corpus hash and the configured timestamp.
    """
    entries: Dict[EnvCondition, ReferenceTableEntry]
    models: Dict[str, ContrastCalibration] = field(default_factory=dict)
    provenance: Dict[str, Optional[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _missing = [condition.value for condition in CONDITIONS if condition not in self.entries]
        if _missing:
            raise CalibrationError(
                f"Reference table has no entry for: {', '.join(_missing)}.", stage='calibrate'
            )
        for entry in self.entries.values():
            if entry.model_id is not None and entry.model_id not in self.models:
                raise CalibrationError(
                    f"Reference table entry {entry.condition} refers to unknown model {entry.model_id!r}.",
                    stage='calibrate'
                )

    def lookup(self, condition: EnvCondition) -> ReferenceTableEntry:
        return self.entries[condition]

    def lookup_by_psnr(self, psnr_db: float) -> Optional[ReferenceTableEntry]:
        """
        Entry with the lowest measured PSNR that still meets ``psnr_db``; that
        is the most compressed calibrated model satisfying the requested
        quality. Ties go to the earlier condition.

        :param psnr_db: requested PSNR floor in dB
        :type psnr_db: float
        :return: matching entry or None
        :rtype: Optional[ReferenceTableEntry]
        """
        _candidates = [
            entry for entry in (self.entries[condition] for condition in CONDITIONS)
            if entry.max_crf is not None and entry.min_psnr_db is not None
            and entry.min_psnr_db >= psnr_db
        ]
        if not _candidates:
            return None
        return min(_candidates, key=lambda entry: entry.min_psnr_db)

    def model(self, model_id: Optional[str]) -> ContrastCalibration:
        if model_id is None:
            return ContrastCalibration()
        return self.models[model_id]

    def model_for(self, condition: EnvCondition, crf: int) -> ContrastCalibration:
        """
        Calibration fitted for (condition, crf), or the default thresholds when
        that point was never evaluated.
        """
        return self.models.get(ContrastDetector.model_id(condition, crf), ContrastCalibration())

    def to_dict(self) -> dict:
        return {
            'entries': [self.entries[condition].to_dict() for condition in CONDITIONS],
            'models': {key: self.models[key].to_dict() for key in sorted(self.models)},
            'provenance': dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReferenceTable":
        try:
            entries = [ReferenceTableEntry.from_dict(entry) for entry in data['entries']]
            models = {
                key: ContrastCalibration.from_dict(value) for key, value in data.get('models', {}).items()
            }
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"Malformed reference table: {exc}", stage='calibrate') from exc
        return cls(
            entries={entry.condition: entry for entry in entries},
            models=models,
            provenance=dict(data.get('provenance', {})),
        )

    def dumps(self) -> str:
        return canonical_json(self.to_dict()) + "\n"

    def save(self, path: str) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def load(cls, path_or_text: str) -> "ReferenceTable":
        return cls.from_dict(read_json(path_or_text))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.entries[condition].to_dict() for condition in CONDITIONS])


def corpus_hash(corpus: Corpus) -> str:
    """
    SHA-256 over frame sizes, samples and annotation boxes, in corpus order.
    """
    chunks = []
    for frame, truths in corpus:
        chunks.append(f"{frame.width}x{frame.height};")
        chunks.append(frame.to_bytes())
        chunks.append(canonical_json([[truth.class_label, *truth.box.as_tuple()] for truth in truths]))
    return sha256_hex(*chunks)


def split_corpus(size: int, train_fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """
    Seeded disjoint split of corpus indices into the frames detector
    calibrations are fitted on and the frames they are scored on.

    The fitting share is ``round(train_fraction * size)``, kept between one
    frame and ``size - 1``. A single-frame corpus cannot be split and serves
    both roles. Both index lists are sorted.

    :param size: number of corpus frames
    :type size: int
    :param train_fraction: share of frames used for fitting
    :type train_fraction: float
    :param seed: calibration seed
    :type seed: int
    :return: (fitting indices, scored indices)
    :rtype: Tuple[List[int], List[int]]
    """
    if size < 2:
        return list(range(size)), list(range(size))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2,))))
    order = rng.permutation(size)
    _fit = min(max(int(np.floor(train_fraction * size + 0.5)), 1), size - 1)
    return sorted(order[:_fit].tolist()), sorted(order[_fit:].tolist())


class Calibrator:
    """
    Evaluates (condition, crf) points on an annotated clear-weather corpus and
    searches the reference table. Points are memoised; the memo is shared by
    the per-condition searches, which may run concurrently.

    Each point fits its detector calibration on one seeded part of the corpus
    and scores it on the rest; the split is the same for every condition.
    """
    def __init__(
        self,
        corpus: Corpus,
        codec: BaseCodec = None,
        detector: ContrastDetector = None,
        severities: Dict[EnvCondition, Severity] = None,
        config: CalibrationConfig = None,
        seed: int = 0,
        verbosity: int = 1,
    ) -> None:
        if not corpus:
            raise CalibrationError("Calibration corpus is empty.", stage='calibrate')
        if not any(truths for _, truths in corpus):
            raise CalibrationError("Calibration corpus has no annotations.", stage='calibrate')
        self.corpus = list(corpus)
        self.codec = codec or BuiltinCodec()
        self.detector = detector or ContrastDetector()
        self.severities = severities or DEFAULT_SEVERITIES
        self.config = config or CalibrationConfig()
        self.seed = seed
        self.corpus_hash = corpus_hash(self.corpus)
        self.fit_indices, self.score_indices = split_corpus(
            len(self.corpus), self.config.train_fraction, seed
        )
        self.logger = logging.getLogger(self.__class__.__name__)
        self._verbosity = verbosity
        self._lock = threading.Lock()
        self._memo: Dict[tuple, PointResult] = {}
        self._augmented: Dict[EnvCondition, List[Frame]] = {}
        self.calls = 0
        if len(self.corpus) < 2:
            self.logger.warning("A single-frame corpus is both fitted and scored.")

    def augmented(self, condition: EnvCondition) -> List[Frame]:
        """
        Corpus frames synthesised to ``condition``; cached per condition.
        """
        with self._lock:
            if condition in self._augmented:
                return self._augmented[condition]
        severity = self.severities[condition].with_seed(self.seed)
        frames = [synthesize(frame, severity, index) for index, (frame, _) in enumerate(self.corpus)]
        with self._lock:
            return self._augmented.setdefault(condition, frames)

    def evaluate_point(self, condition: EnvCondition, crf: int) -> PointResult:
        """
        Accuracy and PSNR of the detector at one (condition, crf) point.

        The corpus is synthesised to the condition, compressed at ``crf`` and
        decoded. A detector calibration is fitted on the decoded fitting
        frames, and detection on the scored frames is matched against their
        ground truth. PSNR covers the whole corpus.

        :param condition: environmental condition
        :type condition: EnvCondition
        :param crf: constant rate factor
        :type crf: int
        :return: point result
        :rtype: PointResult
        """
        if not CRF_MIN <= crf <= CRF_MAX:
            raise CalibrationError(f"CRF {crf} outside [{CRF_MIN}, {CRF_MAX}].", stage='calibrate')
        key = (condition, crf, self.corpus_hash, self.detector.detector_id)
        with self._lock:
            if key in self._memo:
                return self._memo[key]

        frames = self.augmented(condition)
        decoded = self.codec.roundtrip(frames, crf)
        psnr = segment_quality(frames, decoded, with_ssim=False).psnr
        model_id = ContrastDetector.model_id(condition, crf)
        calibration = ContrastCalibration.fit(
            [(decoded[index], self.corpus[index][1]) for index in self.fit_indices],
            self.detector.config,
            model_id,
        )
        matches = MatchResult(0, 0, 0)
        for index in self.score_indices:
            matches = matches + self.detector.evaluate(decoded[index], self.corpus[index][1], calibration)
        result = PointResult(
            condition=condition,
            crf=crf,
            accuracy=matches.recall,
            psnr=psnr,
            model_id=model_id,
            calibration=calibration,
            matches=matches,
        )
        with self._lock:
            self.calls += 1
            result = self._memo.setdefault(key, result)
        if self._verbosity > 1:
            self.logger.info(
                'INFO: %s: %s at crf %d: accuracy %.4f, psnr %.2f dB.',
                self.logger.name, condition, crf, result.accuracy, result.psnr
            )
        return result

    def search(self, condition: EnvCondition) -> ReferenceTableEntry:
        max_crf = coarse_to_fine_search(
            lambda crf: self.evaluate_point(condition, crf).accuracy, self.config
        )
        if max_crf is None:
            self.logger.warning("No CRF keeps %s above the accuracy threshold.", condition)
            return ReferenceTableEntry(condition, None, None, None, None)
        point = self.evaluate_point(condition, max_crf)
        return ReferenceTableEntry(condition, max_crf, point.psnr, point.model_id, point.accuracy)

    async def _search_all(self, conditions: Sequence[EnvCondition]) -> List[ReferenceTableEntry]:
        loop = asyncio.get_event_loop()
        _done = []

        async def _search(condition):
            entry = await loop.run_in_executor(None, self.search, condition)
            _done.append(condition)
            if self._verbosity > 0:
                self.logger.info(
                    'INFO: %s (%d/%d): %s calibrated, max crf %s.',
                    self.logger.name, len(_done), len(conditions), condition, entry.max_crf
                )
            return entry

        return await asyncio.gather(*[_search(condition) for condition in conditions])

    def build_reference_table(
        self, config_hash: str = None, timestamp: str = None
    ) -> ReferenceTable:
        """
        Search every condition (concurrently) and assemble the reference table.

        :param config_hash: hash of the effective configuration
        :type config_hash: str
        :param timestamp: provenance timestamp taken from the configuration
        :type timestamp: str
        :return: reference table with one entry per condition
        :rtype: ReferenceTable
        """
        loop = asyncio.new_event_loop()
        try:
            entries = loop.run_until_complete(self._search_all(CONDITIONS))
        finally:
            loop.close()
        return ReferenceTable(
            entries={entry.condition: entry for entry in entries},
            models=self.model_library(),
            provenance={
                'config_hash': config_hash,
                'corpus_hash': self.corpus_hash,
                'timestamp': timestamp,
            },
        )

    def points(self) -> pd.DataFrame:
        """
        Every evaluated point, sorted by condition order and crf.
        """
        with self._lock:
            _results = list(self._memo.values())
        _results.sort(key=lambda point: (point.condition.index, point.crf))
        return pd.DataFrame(
            [point.to_row() for point in _results],
            columns=['condition', 'crf', 'accuracy', 'psnr', 'precision', 'f1', 'model_id'],
        )

    def model_library(self) -> Dict[str, ContrastCalibration]:
        with self._lock:
            return {point.model_id: point.calibration for point in self._memo.values()}


def build_reference_table(
    cfg: CalibrationConfig,
    corpus: Corpus,
    detector: ContrastDetector = None,
    codec: BaseCodec = None,
    severities: Dict[EnvCondition, Severity] = None,
    seed: int = 0,
) -> ReferenceTable:
    return Calibrator(corpus, codec, detector, severities, cfg, seed).build_reference_table()
