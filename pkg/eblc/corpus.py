"""
Synthetic corpora: annotated clear-weather scenes, weather schedules and
the labelled frame sets used to fit the condition classifier.

A corpus folder holds ``frames/`` (numbered P6 rasters), ``annotations/``
(one VOC document per frame) and ``manifest.json``.
"""
import os
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from eblc.utils.frame import Frame, rgb_to_hsl_array, save_raster, load_frames, frame_name
from eblc.utils.conditions import EnvCondition, CONDITIONS, Severity, DEFAULT_SEVERITIES
from eblc.utils.augment import synthesize
from eblc.utils.voc_parser import VOCParser
from eblc.utils.storage import atomic_write, read_json, write_json
from eblc.utils.exceptions import EBLCError, EmptySequence
from eblc.detectors.base import Annotation
from eblc.detectors.contrast import synthesize_scene

logger = logging.getLogger(__name__)

FRAMES_FOLDER = "frames"
ANNOTATIONS_FOLDER = "annotations"
MANIFEST = "manifest.json"

DEFAULT_WIDTH = 160
DEFAULT_HEIGHT = 120
DEFAULT_TARGETS = 3


@dataclass(frozen=True)
class CorpusItem:
    frame_id: str
    frame: Frame
    annotations: Tuple[Annotation, ...] = field(default_factory=tuple)


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def generate_corpus(
    seed: int,
    count: int,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    n_targets: int = DEFAULT_TARGETS,
) -> List[CorpusItem]:
    """
    Render ``count`` annotated clear-weather scenes. Scene ``i`` depends only
    on ``seed`` and ``i``, so a longer corpus extends a shorter one.

    :param seed: corpus seed
    :type seed: int
    :param count: number of frames
    :type count: int
    :param width: frame width
    :type width: int
    :param height: frame height
    :type height: int
    :param n_targets: pedestrians per scene
    :type n_targets: int
    :return: corpus items named ``000000``, ``000001``, ...
    :rtype: List[CorpusItem]
    """
    if count < 0:
        raise EBLCError(f"Frame count must be non-negative, got {count}.", stage='gen-corpus')
    items = []
    for index in range(count):
        _frame, _annotations = synthesize_scene(scene_seed(seed, index), n_targets, width, height)
        _id = frame_name(index)
        items.append(CorpusItem(
            frame_id=_id,
            frame=_frame,
            annotations=tuple(
                Annotation(box=a.box, class_label=a.class_label, frame_id=_id) for a in _annotations
            ),
        ))
    return items


def as_pairs(items: Sequence[CorpusItem]) -> List[Tuple[Frame, Tuple[Annotation, ...]]]:
    return [(item.frame, item.annotations) for item in items]


def parse_schedule(source: Union[str, list], total: Optional[int] = None) -> List[EnvCondition]:
    """
    Expand a weather schedule into one condition per frame.

    Two notations are accepted: a compact string ``"normal:150,medium_dark:150"``
    of consecutive segments, or a JSON list (or its text, or a path to it) of
    ``{"start": int, "stop": int, "condition": str}`` ranges with ``stop``
    exclusive. Ranges must tile ``[0, n)`` without gaps or overlaps.

    :param source: schedule in either notation
    :type source: Union[str, list]
    :param total: expected number of frames, checked when given
    :type total: Optional[int]
    :return: per-frame conditions
    :rtype: List[EnvCondition]
    """
    try:
        _schedule = _expand_schedule(source)
    except (KeyError, TypeError, ValueError) as exc:
        raise EBLCError(f"Invalid weather schedule: {exc}", stage='schedule') from exc
    if not _schedule:
        raise EmptySequence("The weather schedule is empty.", stage='schedule')
    if total is not None and len(_schedule) != total:
        raise EBLCError(f"Schedule covers {len(_schedule)} frames, the stream has {total}.", stage='schedule')
    return _schedule


def _expand_schedule(source: Union[str, list]) -> List[EnvCondition]:
    if isinstance(source, str) and not os.path.isfile(source) and not source.lstrip().startswith('['):
        _schedule = []
        for part in filter(None, (chunk.strip() for chunk in source.split(','))):
            name, _, length = part.rpartition(':')
            if not name or not length.isdigit():
                raise EBLCError(f'Schedule segment "{part}" is not in the form condition:frames.', stage='schedule')
            _schedule.extend([EnvCondition.parse(name)] * int(length))
    else:
        try:
            _ranges = read_json(source) if isinstance(source, str) else source
        except (json.JSONDecodeError, OSError) as exc:
            raise EBLCError(f"Cannot read schedule: {exc}", stage='schedule') from exc
        _schedule = []
        for entry in sorted(_ranges, key=lambda item: int(item['start'])):
            start, stop = int(entry['start']), int(entry['stop'])
            if start != len(_schedule) or stop <= start:
                raise EBLCError(
                    f"Schedule range [{start}, {stop}) leaves a gap or overlaps its predecessor.",
                    stage='schedule'
                )
            _schedule.extend([EnvCondition.parse(entry['condition'])] * (stop - start))
    return _schedule


def schedule_ranges(schedule: Sequence[EnvCondition]) -> List[dict]:
    """
    Collapse per-frame conditions into ``{"start", "stop", "condition"}`` ranges.
    """
    ranges: List[dict] = []
    for index, condition in enumerate(schedule):
        if ranges and ranges[-1]['condition'] == condition.value:
            ranges[-1]['stop'] = index + 1
        else:
            ranges.append({'start': index, 'stop': index + 1, 'condition': condition.value})
    return ranges


def generate_stream(
    items: Sequence[CorpusItem],
    schedule: Sequence[EnvCondition],
    severities: Optional[Dict[EnvCondition, Severity]] = None,
    seed: int = 0,
) -> List[CorpusItem]:
    """
    Build a weather stream: frame ``i`` is scene ``i mod len(items)`` under
    ``schedule[i]``. Rain streaks are drawn per frame index, so consecutive
    frames of the same scene differ.
    """
    if not items:
        raise EmptySequence("Cannot build a stream from an empty corpus.", stage='schedule')
    _severities = severities or DEFAULT_SEVERITIES
    stream = []
    for index, condition in enumerate(schedule):
        base = items[index % len(items)]
        _id = frame_name(index)
        stream.append(CorpusItem(
            frame_id=_id,
            frame=synthesize(base.frame, _severities[condition].with_seed(seed), frame_index=index),
            annotations=tuple(
                Annotation(box=a.box, class_label=a.class_label, frame_id=_id) for a in base.annotations
            ),
        ))
    return stream


def labelled_corpus(
    seed: int,
    per_class: int,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    severities: Optional[Dict[EnvCondition, Severity]] = None,
    n_targets: int = DEFAULT_TARGETS,
) -> List[Tuple[Frame, EnvCondition]]:
    """
    ``per_class`` frames of every condition, each class rendered from its own
    scenes. Used to fit and to test the condition classifier.

    :return: (frame, true condition) pairs, grouped by condition
    :rtype: List[Tuple[Frame, EnvCondition]]
    """
    _severities = severities or DEFAULT_SEVERITIES
    labelled = []
    for condition in CONDITIONS:
        _scenes = generate_corpus(scene_seed(seed, condition.index), per_class, width, height, n_targets)
        _severity = _severities[condition].with_seed(seed)
        labelled.extend(
            (synthesize(item.frame, _severity, frame_index=index), condition)
            for index, item in enumerate(_scenes)
        )
    return labelled


def save_corpus(
    folder: str,
    items: Sequence[CorpusItem],
    schedule: Optional[Sequence[EnvCondition]] = None,
    seed: Optional[int] = None,
    config_hash: Optional[str] = None,
) -> str:
    """
    Write frames, VOC annotations and the manifest into ``folder``.

    :return: path of the manifest
    :rtype: str
    """
    _frames = os.path.join(folder, FRAMES_FOLDER)
    _annotations = os.path.join(folder, ANNOTATIONS_FOLDER)
    os.makedirs(_frames, exist_ok=True)
    os.makedirs(_annotations, exist_ok=True)
    parser = VOCParser()
    for number, item in enumerate(items, start=1):
        save_raster(item.frame, os.path.join(_frames, f"{item.frame_id}.ppm"))
        atomic_write(
            os.path.join(_annotations, f"{item.frame_id}.xml"),
            parser.write(item.annotations, item.frame_id, item.frame.width, item.frame.height)
        )
        if number % 100 == 0:
            logger.info("INFO: %s (%d/%d): frames written.", folder, number, len(items))
    manifest = {
        'frames': len(items),
        'seed': seed,
        'config_hash': config_hash,
        'schedule': None if schedule is None else schedule_ranges(schedule),
    }
    _path = os.path.join(folder, MANIFEST)
    write_json(_path, manifest)
    return _path


def load_annotations(folder: str, frame_ids: Sequence[str]) -> List[Tuple[Annotation, ...]]:
    """
    Read ``<frame_id>.xml`` for every frame; frames without a document have
    no targets.
    """
    parser = VOCParser()
    annotations = []
    for frame_id in frame_ids:
        _path = os.path.join(folder, f"{frame_id}.xml")
        if os.path.isfile(_path):
            with open(_path, 'rb') as file:
                annotations.append(tuple(parser.parse(file.read(), frame_id=frame_id)))
        else:
            annotations.append(tuple())
    return annotations


def load_corpus(folder: str) -> Tuple[List[CorpusItem], Optional[List[EnvCondition]]]:
    """
    Load a corpus folder written by :func:`save_corpus`. A bare directory of
    rasters is accepted too; it then has no annotations and no schedule.

    :return: the items and the stored schedule, if any
    :rtype: Tuple[List[CorpusItem], Optional[List[EnvCondition]]]
    """
    _frames = os.path.join(folder, FRAMES_FOLDER)
    if not os.path.isdir(_frames):
        _frames = folder
    pairs = load_frames(_frames)
    if not pairs:
        raise EmptySequence(f'Folder "{_frames}" holds no rasters.', stage='corpus')
    _ids = [frame_id for frame_id, _ in pairs]
    annotations = load_annotations(os.path.join(folder, ANNOTATIONS_FOLDER), _ids)
    items = [
        CorpusItem(frame_id=frame_id, frame=frame, annotations=truths)
        for (frame_id, frame), truths in zip(pairs, annotations)
    ]
    schedule = None
    _manifest = os.path.join(folder, MANIFEST)
    if os.path.isfile(_manifest):
        _ranges = read_json(_manifest).get('schedule')
        if _ranges:
            schedule = parse_schedule(_ranges, total=len(items))
    return items, schedule


def print_summary(summary: dict, logger: logging.Logger) -> None:
    logger.info("Corpus summary:")
    for key, value in summary.items():
        logger.info("    %s: %s", key, value)


def create_summary(
    items: Sequence[CorpusItem],
    schedule: Optional[Sequence[EnvCondition]] = None,
    verbose: bool = False,
) -> Dict[str, str]:
    """
    Create a summary of a corpus: frame and target counts, frames per
    condition and the mean HSL lightness.

    :param items: corpus items
    :type items: Sequence[CorpusItem]
    :param schedule: per-frame conditions; all Normal when omitted
    :type schedule: Optional[Sequence[EnvCondition]]
    :param verbose: log the summary
    :type verbose: bool
    :return: summary with string values
    :rtype: Dict[str, str]
    """
    _conditions = Counter(schedule if schedule is not None else [EnvCondition.NORMAL] * len(items))
    _lightness = [float(rgb_to_hsl_array(item.frame.data)[2].mean()) for item in items]
    summary = {
        "frames": len(items),
        "targets": sum(len(item.annotations) for item in items),
        "mean_lightness": round(float(np.mean(_lightness)), 4) if _lightness else 0.0,
    }
    for condition in CONDITIONS:
        summary[f"frames_{condition.value}"] = _conditions.get(condition, 0)
    if verbose:
        print_summary(summary, logging.getLogger(__name__))
    return {key: str(value) for key, value in summary.items()}
