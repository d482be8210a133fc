"""MNIST ingestion from IDX files, batching and class-balanced sampling."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, ContractError, DataError, FormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
DATA_DIR_ENV = "SPIKEAE_DATA_DIR"

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    # the MNIST test split serves as the validation set
    "validation": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    images: np.ndarray  # (M, 1, 28, 28) float32 in [0, 1]
    labels: np.ndarray  # (M,) int64
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ConsistencyError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def head(self, n):
        """The first ``n`` items (all of them when n is None or too large)."""
        if n is None or n >= len(self):
            return self
        return Dataset(self.images[:n], self.labels[:n], self.split)


def _read(path):
    path = Path(path)
    if not path.exists():
        gz = path.with_name(path.name + ".gz")
        if gz.exists():
            path = gz
        else:
            raise DataError(f"missing data file {path}")
    raw = path.read_bytes()
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def _parse_idx(raw, magic, ndim, what):
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{what}: truncated IDX header", offset=len(raw))
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}", offset=0)
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise FormatError(f"{what}: truncated payload, expected {need} bytes, got {len(raw)}", offset=len(raw))
    if len(raw) > need:
        raise FormatError(f"{what}: {len(raw) - need} trailing bytes", offset=need)
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, split="train"):
    images = _parse_idx(_read(images_path), IMAGE_MAGIC, 3, str(images_path))
    labels = _parse_idx(_read(labels_path), LABEL_MAGIC, 1, str(labels_path))
    if len(images) != len(labels):
        raise ConsistencyError(f"{len(images)} images but {len(labels)} labels")
    x = (images.astype(np.float32) / np.float32(255.0))[:, None]
    return Dataset(x, labels.astype(np.int64), split)


def resolve_data_dir(data_dir=None):
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    if data_dir:
        return Path(data_dir)
    raise DataError(f"no data directory given (config data_dir or ${DATA_DIR_ENV})")


def load_mnist(data_dir, split):
    if split not in SPLIT_FILES:
        raise DataError(f"unknown split {split!r}; expected one of {sorted(SPLIT_FILES)}")
    root = Path(data_dir)
    img, lab = SPLIT_FILES[split]
    return load_idx(root / img, root / lab, split)


def batches(dataset, batch_size=64, rng=None):
    """Yield index arrays for one epoch; shuffled when ``rng`` is given.

    The last batch may be short.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    if n == 0:
        raise ContractError("cannot batch an empty dataset")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def class_balanced_sample(dataset, per_class=10, rng=None):
    """Indices of ``per_class`` items for each digit, grouped by class."""
    picked = []
    for digit in range(10):
        pool = np.flatnonzero(dataset.labels == digit)
        if len(pool) < per_class:
            raise ContractError(f"class {digit} has {len(pool)} items, need {per_class}")
        chosen = rng.choice(pool, size=per_class, replace=False) if rng is not None else pool[:per_class]
        picked.append(np.sort(chosen))
    return np.concatenate(picked)
