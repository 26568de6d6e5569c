"""SemanticKITTI on-disk formats, label remapping, and the official split.

Point clouds are flat little-endian float32 quadruples (x, y, z, remission)
in ``.bin`` files.  Labels are one little-endian uint32 per point in
``.label`` files: the low 16 bits carry the semantic id, the high 16 bits
the instance id.  The dataset's sparse raw semantic ids are remapped to a
dense 0..19 training range (0 = unlabeled/ignored) through a table shipped
with the package; moving-object ids collapse onto their static classes and
unknown ids map to 0.
"""

import json
import os
from dataclasses import dataclass, field
from importlib.resources import files

import numpy as np

from .errors import InputError, MalformedFileError

_REMAP = json.loads(
    files("rangeseg").joinpath("data/semantic_kitti_remap.json").read_text())

NUM_CLASSES = _REMAP["num_classes"]
CLASS_NAMES = tuple(_REMAP["class_names"])

RAW_TO_TRAIN = {int(k): int(v) for k, v in _REMAP["raw_to_train"].items()}
TRAIN_TO_RAW = {int(k): int(v) for k, v in _REMAP["train_to_raw"].items()}


@dataclass(frozen=True)
class ClassRemap:
    """Bidirectional raw-id / train-id mapping plus the class name row."""

    raw_to_train: dict
    train_to_raw: dict
    class_names: tuple

    # raw ids fit in 16 bits on disk, so a full-width table covers every input
    _forward_lut: np.ndarray = field(init=False, repr=False, compare=False)
    _inverse_lut: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        forward = np.zeros(1 << 16, np.int32)
        for raw, train in self.raw_to_train.items():
            if not 0 <= raw < (1 << 16):
                raise InputError(f"raw id {raw} does not fit in 16 bits")
            if not 0 <= train < NUM_CLASSES:
                raise InputError(f"train id {train} out of range")
            forward[raw] = train
        inverse = np.zeros(NUM_CLASSES, np.uint32)
        for train, raw in self.train_to_raw.items():
            inverse[train] = raw
        object.__setattr__(self, "_forward_lut", forward)
        object.__setattr__(self, "_inverse_lut", inverse)

    def to_train(self, semantic):
        semantic = np.asarray(semantic)
        if semantic.size and (semantic.min() < 0
                              or semantic.max() >= (1 << 16)):
            raise InputError("raw semantic ids must fit in 16 bits")
        return self._forward_lut[semantic]

    def to_raw(self, train_ids):
        train_ids = np.asarray(train_ids)
        if train_ids.size and (train_ids.min() < 0
                               or train_ids.max() >= NUM_CLASSES):
            raise InputError(f"train ids must lie in [0, {NUM_CLASSES - 1}]")
        return self._inverse_lut[train_ids]


DEFAULT_REMAP = ClassRemap(raw_to_train=RAW_TO_TRAIN,
                           train_to_raw=TRAIN_TO_RAW,
                           class_names=CLASS_NAMES[1:])


@dataclass(frozen=True)
class SequenceSplit:
    train: tuple
    valid: tuple
    test: tuple


def official_split():
    """The benchmark's sequence split, as zero-padded id strings."""
    split = _REMAP["split"]
    return SequenceSplit(
        train=tuple(f"{s:02d}" for s in split["train"]),
        valid=tuple(f"{s:02d}" for s in split["valid"]),
        test=tuple(f"{s:02d}" for s in split["test"]),
    )


def _read_words(path, item_bytes, dtype, what):
    try:
        size = os.path.getsize(path)
        raw = np.fromfile(path, dtype=dtype)
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc}") from exc
    if size % item_bytes != 0:
        raise MalformedFileError(
            f"{path}: byte length {size} is not a multiple of {item_bytes}")
    return raw


def read_point_cloud(path):
    """Read a .bin scan into an (N, 4) float32 array of x, y, z, remission."""
    raw = _read_words(path, 16, "<f4", "point cloud")
    points = raw.reshape(-1, 4)
    if not np.all(np.isfinite(points)):
        raise MalformedFileError(f"{path}: NaN or Inf coordinate values")
    return points


def raw_to_train(semantic):
    """Map raw semantic ids to dense train ids; unknown ids become 0."""
    return DEFAULT_REMAP.to_train(semantic)


def train_to_raw(train_ids):
    """Map dense train ids back to raw semantic ids."""
    return DEFAULT_REMAP.to_raw(train_ids)


def read_labels(path, remap=DEFAULT_REMAP):
    """Read a .label file; returns (semantic, instance) int32 arrays.

    Semantic ids come back remapped to train ids; pass ``remap=False`` to
    get the raw on-disk ids instead.
    """
    raw = _read_words(path, 4, "<u4", "labels")
    semantic = (raw & 0xFFFF).astype(np.int64)
    instance = (raw >> 16).astype(np.int32)
    if remap:
        semantic = remap.to_train(semantic)
    return semantic.astype(np.int32), instance


def write_labels(path, train_ids, remap=DEFAULT_REMAP):
    """Write train ids as a .label file of raw semantic ids (instance 0)."""
    remap.to_raw(train_ids).astype("<u4").tofile(path)


def read_frame(bin_path, label_path, remap=DEFAULT_REMAP):
    """Read a paired scan and label file, enforcing equal lengths."""
    points = read_point_cloud(bin_path)
    semantic, instance = read_labels(label_path, remap)
    if len(points) != len(semantic):
        raise InputError(
            f"{bin_path} has {len(points)} points but {label_path} "
            f"has {len(semantic)} labels")
    return points, semantic, instance


def iter_relative_files(root, suffix):
    """Paths ending in suffix under root, relative to it, sorted."""
    out = []
    for dirpath, _dirnames, filenames in os.walk(root):
        for name in filenames:
            if name.endswith(suffix):
                out.append(os.path.relpath(os.path.join(dirpath, name), root))
    return sorted(out)
