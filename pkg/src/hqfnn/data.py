"""IDX dataset ingestion and batching.

The IDX container is big-endian: images carry magic 2051 and dimensions
(count, rows, cols), labels carry magic 2049 and a count. Files ending in
.gz are decompressed transparently. Pixels are scaled to [0, 1] and then
standardized by the dataset's own mean/std.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Malformed IDX file: bad magic, bad dimensions or truncated data."""


class DatasetConsistencyError(ValueError):
    """Image and label files that do not describe the same dataset."""


@dataclass
class Dataset:
    images: np.ndarray  # (N, 1, 28, 28) standardized float64
    labels: np.ndarray  # (N,) int64
    name: str
    mean: float
    std: float

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_file(path: str | Path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse_images(blob: bytes, path) -> np.ndarray:
    if len(blob) < 16:
        raise IdxFormatError(f"{path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">4i", blob[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"{path}: bad image magic {magic}, expected {IMAGE_MAGIC}")
    if (rows, cols) != (28, 28):
        raise IdxFormatError(f"{path}: expected 28x28 images, got {rows}x{cols}")
    expected = count * rows * cols
    if len(blob) - 16 != expected:
        raise IdxFormatError(f"{path}: expected {expected} pixel bytes, found {len(blob) - 16}")
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=16)
    return pixels.reshape(count, 1, rows, cols).astype(np.float64)


def _parse_labels(blob: bytes, path) -> np.ndarray:
    if len(blob) < 8:
        raise IdxFormatError(f"{path}: truncated IDX header")
    magic, count = struct.unpack(">2i", blob[:8])
    if magic != LABEL_MAGIC:
        raise IdxFormatError(f"{path}: bad label magic {magic}, expected {LABEL_MAGIC}")
    if len(blob) - 8 != count:
        raise IdxFormatError(f"{path}: expected {count} label bytes, found {len(blob) - 8}")
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx(images_path: str | Path, labels_path: str | Path, name: str = "dataset") -> Dataset:
    """Parse an image/label IDX pair into a standardized Dataset.

    Pixels go through [0, 1] scaling and then (x - mean) / std with the
    statistics of this data; a zero std (constant images) is clamped to 1.
    """
    images = _parse_images(_read_file(images_path), images_path) / 255.0
    labels = _parse_labels(_read_file(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DatasetConsistencyError(
            f"{images.shape[0]} images but {labels.shape[0]} labels")
    mean = float(images.mean()) if images.size else 0.0
    std = float(images.std()) if images.size else 0.0
    if std < 1e-12:
        std = 1.0
    return Dataset(images=(images - mean) / std, labels=labels,
                   name=name, mean=mean, std=std)


def take_subset(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Seeded random subset without replacement (n >= len keeps everything)."""
    if n >= len(dataset):
        return dataset
    idx = np.sort(np.random.default_rng(seed).choice(len(dataset), size=n, replace=False))
    return Dataset(images=dataset.images[idx], labels=dataset.labels[idx],
                   name=dataset.name, mean=dataset.mean, std=dataset.std)


def split_train_val(images: np.ndarray, labels: np.ndarray, val_fraction: float, seed: int):
    """Seeded holdout split; the validation part is at least one sample."""
    n = images.shape[0]
    n_val = max(1, int(round(n * val_fraction)))
    order = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    return (images[train_idx], labels[train_idx]), (images[val_idx], labels[val_idx])


def make_batches(images: np.ndarray, labels: np.ndarray, batch_size: int,
                 seed: int = 0, shuffle: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split into batches of batch_size (final short batch kept). With
    shuffle, the order is a seeded permutation, reproducible per seed."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = images.shape[0]
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    return [(images[order[s:s + batch_size]], labels[order[s:s + batch_size]])
            for s in range(0, n, batch_size)]
