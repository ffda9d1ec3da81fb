"""Signal datasets: labeled/unlabeled assignment and the ``SSCSR1`` binary format.

Layout (little-endian)::

    b"SSCSR1"  u8 version  u32 num_classes  u32 sample_len
    u32 n_labeled  u32 n_unlabeled  u32 n_val  u32 n_test
    records, partition by partition: i32 label (-1 when unlabeled),
    then sample_len * 2 float32 interleaved I, Q
"""
from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateInputError, FormatError, ShapeError

MAGIC = b"SSCSR1"
VERSION = 1
_HEADER = struct.Struct("<6sBII4I")
PARTITIONS = ("labeled", "unlabeled", "val", "test")


@dataclass
class SignalDataset:
    """Labeled set S, unlabeled set U and the held-out splits.

    Samples are complex64 arrays of shape ``(n, sample_len)``; labels are int32.
    """

    labeled_x: np.ndarray
    labeled_y: np.ndarray
    unlabeled_x: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int

    def __post_init__(self):
        for name in ("labeled_x", "unlabeled_x", "val_x", "test_x"):
            arr = np.asarray(getattr(self, name))
            if arr.ndim != 2:
                raise ShapeError(f"{name} must be 2-D (n, sample_len), got shape {arr.shape}")
            setattr(self, name, arr.astype(np.complex64, copy=False))
        for name in ("labeled_y", "val_y", "test_y"):
            setattr(self, name, np.asarray(getattr(self, name)).astype(np.int32, copy=False))
        self.num_classes = int(self.num_classes)
        lengths = {getattr(self, n).shape[1] for n in ("labeled_x", "unlabeled_x", "val_x", "test_x")}
        if len(lengths) != 1:
            raise ShapeError(f"all partitions must share one sample length, got {sorted(lengths)}")
        for x, y in ((self.labeled_x, self.labeled_y), (self.val_x, self.val_y), (self.test_x, self.test_y)):
            if len(x) != len(y):
                raise ShapeError("sample and label counts differ")
            if y.size and (y.min() < 0 or y.max() >= self.num_classes):
                raise ShapeError(f"labels must lie in [0, {self.num_classes})")

    @property
    def sample_len(self):
        return self.labeled_x.shape[1]

    def counts(self):
        return {
            "labeled": len(self.labeled_x),
            "unlabeled": len(self.unlabeled_x),
            "val": len(self.val_x),
            "test": len(self.test_x),
        }

    def class_counts(self, partition):
        y = getattr(self, f"{partition}_y")
        return np.bincount(y, minlength=self.num_classes)

    def equals(self, other):
        return (
            self.num_classes == other.num_classes
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("labeled_x", "labeled_y", "unlabeled_x", "val_x", "val_y", "test_x", "test_y")
            )
        )


@dataclass(frozen=True)
class DataCondition:
    """``M + N``: labeled and unlabeled training samples per class."""

    m_labeled_per_class: int
    n_unlabeled_per_class: int

    def __post_init__(self):
        if self.m_labeled_per_class < 1:
            raise ConfigError("M must be >= 1")
        if self.n_unlabeled_per_class < 0:
            raise ConfigError("N must be >= 0")

    @classmethod
    def parse(cls, text):
        m = re.fullmatch(r"\s*(\d+)\s*\+\s*(\d+)\s*", str(text))
        if not m:
            raise ConfigError(f"data condition must look like 'M + N', got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    def __str__(self):
        return f"{self.m_labeled_per_class}+{self.n_unlabeled_per_class}"


def assign_condition(dataset, condition, seed):
    """Keep M labels and strip N labels per class from the labeled (train) split.

    Val and test are carried over untouched; surplus training samples are dropped.
    """
    M, N = condition.m_labeled_per_class, condition.n_unlabeled_per_class
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xC0DE,)))
    keep_l, keep_u = [], []
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labeled_y == c)
        if idx.size < M + N:
            raise ConfigError(f"class {c} has {idx.size} training samples, condition {condition} needs {M + N}")
        chosen = rng.permutation(idx)
        keep_l.append(np.sort(chosen[:M]))
        keep_u.append(np.sort(chosen[M:M + N]))
    li = np.concatenate(keep_l)
    ui = np.concatenate(keep_u)
    return SignalDataset(
        labeled_x=dataset.labeled_x[li],
        labeled_y=dataset.labeled_y[li],
        unlabeled_x=np.concatenate([dataset.unlabeled_x, dataset.labeled_x[ui]]),
        val_x=dataset.val_x,
        val_y=dataset.val_y,
        test_x=dataset.test_x,
        test_y=dataset.test_y,
        num_classes=dataset.num_classes,
    )


def encode_dataset(dataset):
    """Serialize to bytes in the ``SSCSR1`` layout."""
    L = dataset.sample_len
    c = dataset.counts()
    chunks = [_HEADER.pack(MAGIC, VERSION, dataset.num_classes, L, *(c[p] for p in PARTITIONS))]
    rec = np.dtype([("label", "<i4"), ("iq", "<f4", (2 * L,))])
    for part in PARTITIONS:
        x = getattr(dataset, f"{part}_x")
        labels = np.full(len(x), -1, dtype=np.int32) if part == "unlabeled" else getattr(dataset, f"{part}_y")
        body = np.empty(len(x), dtype=rec)
        body["label"] = labels
        body["iq"] = np.ascontiguousarray(x, dtype=np.complex64).view(np.float32).reshape(len(x), 2 * L)
        chunks.append(body.tobytes())
    return b"".join(chunks)


def decode_dataset(blob):
    """Parse ``SSCSR1`` bytes; raises :class:`FormatError` with the failing offset."""
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic, expected b'SSCSR1'", 0)
    if len(blob) < _HEADER.size:
        raise FormatError("truncated header", len(blob))
    _, version, num_classes, L, *counts = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", len(MAGIC))
    if num_classes < 2 or L < 1:
        raise FormatError(f"invalid header: num_classes={num_classes} sample_len={L}", len(MAGIC) + 1)

    rec = np.dtype([("label", "<i4"), ("iq", "<f4", (2 * L,))])
    offset = _HEADER.size
    parts = {}
    for part, n in zip(PARTITIONS, counts):
        need = n * rec.itemsize
        if len(blob) - offset < need:
            complete = (len(blob) - offset) // rec.itemsize
            raise FormatError(
                f"truncated {part} partition: header promises {n} records, found {complete} complete",
                offset + complete * rec.itemsize,
            )
        body = np.frombuffer(blob, dtype=rec, count=n, offset=offset)
        labels = body["label"].astype(np.int32)
        bad = np.flatnonzero((labels != -1) if part == "unlabeled" else ((labels < 0) | (labels >= num_classes)))
        if bad.size:
            raise FormatError(f"invalid label {labels[bad[0]]} in {part} partition", offset + int(bad[0]) * rec.itemsize)
        x = body["iq"].astype(np.float32).reshape(n, L, 2).view(np.complex64).reshape(n, L)
        parts[part] = (x, labels)
        offset += need
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after the last record", offset)
    return SignalDataset(
        labeled_x=parts["labeled"][0],
        labeled_y=parts["labeled"][1],
        unlabeled_x=parts["unlabeled"][0],
        val_x=parts["val"][0],
        val_y=parts["val"][1],
        test_x=parts["test"][0],
        test_y=parts["test"][1],
        num_classes=num_classes,
    )


def manifest_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_dataset(dataset, path, manifest=None):
    """Write the binary dataset and, when given, a JSON provenance sidecar."""
    path = Path(path)
    path.write_bytes(encode_dataset(dataset))
    if manifest is not None:
        manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_dataset(path):
    return decode_dataset(Path(path).read_bytes())


def read_manifest(path):
    p = manifest_path(path)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))


def to_network_input(x):
    """Complex ``(B, L)`` samples -> real ``(B, 2, L)`` with I then Q channels."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"expected (batch, length) complex samples, got shape {x.shape}")
    if x.shape[0] == 0:
        raise DegenerateInputError("empty batch")
    return np.stack([x.real, x.imag], axis=1)
