import os
import shutil
import tempfile
import unittest
from typing import Dict, List, Optional, Sequence

import numpy as np

from eblc.calibrate import ReferenceTable, ReferenceTableEntry
from eblc.classifiers.base import BaseClassifier, ClassProbabilities
from eblc.corpus import CorpusItem, generate_corpus, generate_stream
from eblc.detectors.contrast import ContrastCalibration, ContrastDetector
from eblc.utils.conditions import EnvCondition, CONDITIONS
from eblc.utils.frame import Frame

INPUT_FOLDER = os.path.join(os.path.dirname(os.path.abspath(__file__)), "inputs")


def input_path(name: str) -> str:
    return os.path.join(INPUT_FOLDER, name)


def gray(value: int, width: int = 16, height: int = 16) -> Frame:
    return Frame.filled(width, height, value)


def noise_frame(seed: int, width: int = 64, height: int = 64) -> Frame:
    rng = np.random.default_rng(seed)
    return Frame(rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8))


def frame_with_mse(target: float, width: int = 32, height: int = 32, base: int = 100) -> Frame:
    """
    A frame whose MSE against ``gray(base)`` is exactly ``target``: the first
    ``k`` samples differ by ``d`` with ``k * d * d == target * n``.
    """
    _count = width * height * 3
    _total = int(round(target * _count))
    for diff in range(1, 100):
        if _total % (diff * diff) == 0 and _total // (diff * diff) <= _count:
            data = np.full(_count, base, dtype=np.int64)
            data[:_total // (diff * diff)] += diff
            return Frame(data.reshape(height, width, 3).astype(np.uint8))
    raise ValueError(f"No exact frame for mse {target}.")


class ScriptedClassifier(BaseClassifier):
    """
    Returns the condition registered for a frame's samples; unknown frames are
    Normal.
    """
    def __init__(self, labels: Optional[Dict[bytes, EnvCondition]] = None) -> None:
        super().__init__()
        self.labels = labels or {}
        self.calls = 0

    @classmethod
    def for_stream(cls, stream: Sequence[CorpusItem], schedule: Sequence[EnvCondition]) -> "ScriptedClassifier":
        return cls({item.frame.to_bytes(): condition for item, condition in zip(stream, schedule)})

    def classify_frame(self, frame: Frame) -> ClassProbabilities:
        self.calls += 1
        return ClassProbabilities.one_hot(self.labels.get(frame.to_bytes(), EnvCondition.NORMAL))


class SequenceClassifier(BaseClassifier):
    """
    Returns the given votes in call order, repeating the last one.
    """
    def __init__(self, votes: Sequence[EnvCondition]) -> None:
        super().__init__()
        self.votes = list(votes)
        self.calls = 0

    def classify_frame(self, frame: Frame) -> ClassProbabilities:
        vote = self.votes[min(self.calls, len(self.votes) - 1)]
        self.calls += 1
        return ClassProbabilities.one_hot(vote)


class FailingClassifier(BaseClassifier):
    def classify_frame(self, frame: Frame) -> ClassProbabilities:
        raise RuntimeError("classifier offline")


def fixed_table(crfs: Dict[EnvCondition, Optional[int]]) -> ReferenceTable:
    """
    Reference table with the given CRF per condition (missing conditions get
    CRF 0) and default detector thresholds for every model.
    """
    entries, models = {}, {}
    for condition in CONDITIONS:
        crf = crfs.get(condition, 0)
        if crf is None:
            entries[condition] = ReferenceTableEntry(condition, None, None, None, None)
            continue
        model_id = ContrastDetector.model_id(condition, crf)
        models[model_id] = ContrastCalibration(model_id=model_id)
        entries[condition] = ReferenceTableEntry(condition, crf, 40.0, model_id, 1.0)
    return ReferenceTable(entries=entries, models=models, provenance={'config_hash': None})


class _TemplateCorpusTests(unittest.TestCase):
    """
    Shares one small annotated corpus between the tests of a class.
    """
    seed = 11
    corpus_size = 6

    @classmethod
    def setUpClass(cls) -> None:
        cls.corpus: List[CorpusItem] = generate_corpus(cls.seed, cls.corpus_size)

    def stream(self, schedule: Sequence[EnvCondition]) -> List[CorpusItem]:
        return generate_stream(self.corpus, schedule, seed=self.seed)


class _TemplateOutputTests(unittest.TestCase):
    """
    Gives every test a fresh output folder.
    """
    def setUp(self) -> None:
        self.outfolder = tempfile.mkdtemp(prefix="eblc_")

    def tearDown(self) -> None:
        shutil.rmtree(self.outfolder, ignore_errors=True)

    def out(self, *parts: str) -> str:
        return os.path.join(self.outfolder, *parts)
