import json
import math
import logging
from typing import Iterable, List

import numpy as np
import pandas as pd

from .exceptions import MalformedReport

REPORT_COLUMNS = [
    'frame_id',
    'condition',
    'crf',
    'psnr',
    'detections',
    'accuracy',
    'compressed_bits',
    'raw_bits',
    'bandwidth_reduction',
    'model_id',
    'status',
    'tp',
    'fp',
    'fn',
    'true_condition',
    'fallback',
]


class ReportDataset(pd.DataFrame):
    """
    Wrapper around pandas.DataFrame holding one StepReport per row.
    """
    @property
    def _constructor(self):
        return ReportDataset

    @property
    def logger(self):
        return logging.getLogger(self.__class__.__name__)

    @classmethod
    def from_reports(cls, records: Iterable[dict]) -> "ReportDataset":
        """
        Build the dataset from report dictionaries.

        :raises MalformedReport: if there are no reports or columns are missing
        """
        _records = list(records)
        if not _records:
            raise MalformedReport("The report stream is empty.", stage='evaluate')
        _frame = pd.DataFrame(_records)
        _missing = [column for column in ('condition', 'crf', 'psnr', 'compressed_bits', 'raw_bits')
                    if column not in _frame.columns]
        if _missing:
            raise MalformedReport(f"Reports lack the fields: {', '.join(_missing)}.", stage='evaluate')
        for column in REPORT_COLUMNS:
            if column not in _frame.columns:
                _frame[column] = None
        _frame['psnr'] = pd.to_numeric(_frame['psnr'].replace("Infinity", np.inf), errors='coerce')
        for column in ('crf', 'compressed_bits', 'raw_bits', 'accuracy', 'tp', 'fp', 'fn'):
            _frame[column] = pd.to_numeric(_frame[column], errors='coerce')
        if _frame[['crf', 'compressed_bits', 'raw_bits']].isna().any().any():
            raise MalformedReport("Reports carry non-numeric crf or sizes.", stage='evaluate')
        return cls(_frame[REPORT_COLUMNS])

    @classmethod
    def from_jsonl(cls, text: str) -> "ReportDataset":
        records = []
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedReport(f"Line {number} is not valid JSON: {exc}", stage='evaluate') from exc
        return cls.from_reports(records)

    @staticmethod
    def _group_summary(group: pd.DataFrame, fps: float) -> dict:
        _finite = group['psnr'][np.isfinite(group['psnr'])]
        _accuracy = group['accuracy'].dropna()
        _tp, _fp, _fn = (group[column].dropna().sum() for column in ('tp', 'fp', 'fn'))
        _precision = _tp / (_tp + _fp) if (_tp + _fp) else None
        _recall = _tp / (_tp + _fn) if (_tp + _fn) else None
        _f1 = None
        if _precision is not None and _recall is not None and (_precision + _recall) > 0:
            _f1 = 2 * _precision * _recall / (_precision + _recall)
        return {
            'frames': int(group.shape[0]),
            'mean_accuracy': None if _accuracy.empty else float(_accuracy.mean()),
            'recall': None if _recall is None else float(_recall),
            'precision': None if _precision is None else float(_precision),
            'f1': None if _f1 is None else float(_f1),
            'mean_psnr': "Infinity" if _finite.empty else float(_finite.mean()),
            'mean_bitrate_mbps': float(group['compressed_bits'].mean() * fps / 1e6),
            'raw_bitrate_mbps': float(group['raw_bits'].mean() * fps / 1e6),
            'reduction': float(group['raw_bits'].sum() / group['compressed_bits'].sum()),
            'total_bits': int(group['compressed_bits'].sum()),
        }

    def summarize(self, fps: float = 10.0, by: str = 'condition') -> dict:
        """
        Per-condition and overall summary: mean accuracy, recall, precision,
        F1, mean PSNR over finite values, mean bitrate and reduction factor.

        :param fps: frame rate used to convert bits per frame into Mbit/s
        :type fps: float
        :param by: column to group by, ``condition`` (active) or ``true_condition``
        :type by: str
        :return: summary dictionary
        :rtype: dict
        """
        if self.empty:
            raise MalformedReport("The report stream is empty.", stage='evaluate')
        _groups = {}
        for key, group in self.groupby(self[by].fillna("unknown"), sort=False):
            _groups[str(key)] = self._group_summary(group, fps)
        return {
            'overall': self._group_summary(self, fps),
            'by_' + by: _groups,
        }

    def accuracy_table(self) -> pd.DataFrame:
        """
        Mean accuracy per (condition, crf), sorted by condition order of
        appearance and crf.
        """
        _order = {condition: index for index, condition in enumerate(pd.unique(self['condition']))}
        table = (
            self.dropna(subset=['accuracy'])
            .groupby(['condition', 'crf'], sort=False)['accuracy']
            .agg(['mean', 'count'])
            .reset_index()
            .rename(columns={'mean': 'accuracy', 'count': 'frames'})
        )
        table['_order'] = table['condition'].map(_order)
        table['crf'] = table['crf'].astype(int)
        return pd.DataFrame(table.sort_values(['_order', 'crf']).drop(columns='_order').reset_index(drop=True))


def reports_to_jsonl(reports: Iterable[dict]) -> str:
    _lines: List[str] = []
    for report in reports:
        _lines.append(json.dumps(report, sort_keys=True, allow_nan=False, default=_json_default))
    return "\n".join(_lines) + ("\n" if _lines else "")


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        _value = float(value)
        return "Infinity" if math.isinf(_value) else _value
    raise TypeError(f"Object of type {value.__class__.__name__} is not JSON serialisable.")
