"""
Binary dataset file.

Layout (little-endian)::

    "MMDS"  u32 version (=1)
    u32 N, u32 H, u32 W, u32 C, u32 class_count
    f32 images[N*H*W*C] (NHWC order)
    u16 labels[N]
    optional poison block:
    "PIDX"  u32 count, u32 indices[count], u16 intended[count]
"""

from pathlib import Path

import numpy as np

from ..data import Dataset
from ..errors import ArtifactFormatError, ArtifactMissingError
from .binary import BinaryReader, BinaryWriter

DATASET_MAGIC = b"MMDS"
POISON_MAGIC = b"PIDX"
DATASET_VERSION = 1
MAX_CLASSES = 2**16


def encode_dataset(dataset: Dataset) -> bytes:
    if dataset.class_count > MAX_CLASSES:
        raise ArtifactFormatError("dataset files hold at most 65536 classes")
    w = BinaryWriter()
    w.magic(DATASET_MAGIC)
    w.u32(DATASET_VERSION)
    w.u32(len(dataset))
    for dim in dataset.images.shape[1:]:
        w.u32(dim)
    w.u32(dataset.class_count)
    w.array(dataset.images, "<f4")
    w.array(dataset.labels, "<u2")
    if dataset.poison_indices is not None and dataset.intended is not None:
        w.magic(POISON_MAGIC)
        w.u32(len(dataset.poison_indices))
        w.array(dataset.poison_indices, "<u4")
        w.array(dataset.intended, "<u2")
    return w.getvalue()


def decode_dataset(data: bytes) -> Dataset:
    r = BinaryReader(data, "dataset file")
    r.magic(DATASET_MAGIC)
    version = r.u32()
    if version != DATASET_VERSION:
        raise ArtifactFormatError(f"unsupported dataset version {version}")
    n, h, w, c, class_count = (r.u32() for _ in range(5))
    images = r.array("<f4", (n, h, w, c)).astype(np.float32)
    labels = r.array("<u2", (n,)).astype(np.int64)
    poison = intended = None
    if r.remaining:
        r.magic(POISON_MAGIC)
        count = r.u32()
        poison = r.array("<u4", (count,)).astype(np.int64)
        intended = r.array("<u2", (count,)).astype(np.int64)
    r.expect_end()
    try:
        return Dataset(images, labels, class_count, poison, intended)
    except ValueError as exc:
        raise ArtifactFormatError(f"dataset file holds invalid data: {exc}") from exc


def save_dataset(path: Path, dataset: Dataset) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_dataset(dataset))
    return path


def load_dataset(path: Path) -> Dataset:
    if not path.exists():
        raise ArtifactMissingError(f"dataset file not found: {path}")
    return decode_dataset(path.read_bytes())
