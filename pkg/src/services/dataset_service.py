from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import DataError
from src.utils.numkit import Rng

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

IRIS_FEATURES = 4
IRIS_CLASSES = 3

PathLike = Union[str, Path]


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    class_count: int
    name: str = "dataset"
    class_names: List[str] = field(default_factory=list)
    feature_stats: Optional[FeatureStats] = None

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def _idx_header(raw: bytes, path: PathLike, magic: int, n_dims: int) -> Tuple[int, ...]:
    header_len = 4 * (1 + n_dims)
    if len(raw) < header_len:
        raise DataError(f"{path}: truncated IDX header ({len(raw)} bytes)")
    found, *dims = struct.unpack(f">{1 + n_dims}I", raw[:header_len])
    if found != magic:
        raise DataError(f"{path}: bad magic number {found} (expected {magic})")
    expected = header_len + int(np.prod(dims))
    if len(raw) != expected:
        kind = "truncated" if len(raw) < expected else "has trailing bytes"
        raise DataError(f"{path}: file {kind}: {len(raw)} bytes, header implies {expected}")
    return tuple(dims)


def read_idx_images(path: PathLike) -> np.ndarray:
    """
    IDX image file (big endian):
    i32 magic 2051 | i32 count | i32 rows | i32 cols | u8 pixels, row-wise
    """
    raw = _read_bytes(path)
    count, rows, cols = _idx_header(raw, path, IDX_IMAGES_MAGIC, 3)
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)


def read_idx_labels(path: PathLike) -> np.ndarray:
    """IDX label file (big endian): i32 magic 2049 | i32 count | u8 labels."""
    raw = _read_bytes(path)
    (count,) = _idx_header(raw, path, IDX_LABELS_MAGIC, 1)
    return np.frombuffer(raw, dtype=np.uint8, offset=8).reshape(count)


def load_mnist(images_path: PathLike, labels_path: PathLike) -> Dataset:
    """Pixels scaled to [0, 1] by /255; no centering."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{images_path} holds {images.shape[0]} images but {labels_path} holds {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label {int(labels.max())} outside 0-9")

    X = images.astype(np.float64) / 255.0
    log.info(f"Loaded {X.shape[0]} MNIST samples, {X.shape[1]} features")
    return Dataset(X=X, y=labels.astype(np.int64), class_count=10, name="mnist", class_names=[str(d) for d in range(10)])


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False


def load_iris(path: PathLike, max_classes: int = IRIS_CLASSES) -> Dataset:
    """
    Iris CSV: four numeric fields and a species string per row. A header is
    detected by a non-numeric first field. Species map to class ids in order of
    first appearance. Features are kept raw.
    """
    try:
        df = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True, skipinitialspace=True)
    except FileNotFoundError as e:
        raise DataError(f"Iris file not found: {path}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"Cannot parse Iris file {path}: {e}") from e

    first_line = 1
    if len(df) and not _is_number(str(df.iloc[0, 0]).strip()):
        df = df.iloc[1:]
        first_line = 2
    if df.shape[1] != IRIS_FEATURES + 1:
        raise DataError(f"{path}: expected {IRIS_FEATURES + 1} fields per row, got {df.shape[1]}")

    features = []
    labels: List[str] = []
    for offset, row in enumerate(df.itertuples(index=False)):
        fields = [str(v).strip() if isinstance(v, str) else "" for v in row]
        if not all(_is_number(v) for v in fields[:IRIS_FEATURES]) or not fields[IRIS_FEATURES]:
            raise DataError(f"{path}: malformed row {first_line + offset}: {','.join(fields)}")
        features.append([float(v) for v in fields[:IRIS_FEATURES]])
        labels.append(fields[IRIS_FEATURES])

    class_names = list(dict.fromkeys(labels))
    if len(class_names) > max_classes:
        raise DataError(f"{path}: unknown label '{class_names[max_classes]}' (expected at most {max_classes} species)")
    index = {name: i for i, name in enumerate(class_names)}

    X = np.asarray(features, dtype=np.float64).reshape(-1, IRIS_FEATURES)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    y = np.asarray([index[name] for name in labels], dtype=np.int64)
    log.info(f"Loaded {X.shape[0]} Iris samples, classes {class_names}")
    return Dataset(X=X, y=y, class_count=max(len(class_names), 1), name="iris", class_names=class_names)


def take(ds: Dataset, index: np.ndarray) -> Dataset:
    return replace(ds, X=ds.X[index], y=ds.y[index])


def head(ds: Dataset, n: int) -> Dataset:
    """First n samples."""
    return take(ds, np.arange(min(n, ds.n_samples)))


def standardize(train: Dataset, test: Dataset) -> Tuple[Dataset, Dataset, FeatureStats]:
    """z-score both splits with train statistics; zero-variance features keep std = 1."""
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    stats = FeatureStats(mean=mean, std=std)
    scaled = [replace(ds, X=(ds.X - mean) / std, feature_stats=stats) for ds in (train, test)]
    return scaled[0], scaled[1], stats


def stratified_split(ds: Dataset, test_fraction: float, seed: int, scale: bool = True) -> Tuple[Dataset, Dataset]:
    """
    Per-class seeded split; each class contributes round(test_fraction * n_c)
    test samples (at least one, leaving at least one for training).
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = Rng(seed)
    train_idx, test_idx = [], []
    for c in range(ds.class_count):
        idx = np.flatnonzero(ds.y == c)
        if idx.size < 2:
            raise DataError(f"class {c} has {idx.size} sample(s); a split needs at least 2")
        n_test = min(max(int(round(test_fraction * idx.size)), 1), idx.size - 1)
        perm = rng.permutation(idx.size)
        test_idx.append(idx[perm[:n_test]])
        train_idx.append(idx[perm[n_test:]])

    train = take(ds, np.sort(np.concatenate(train_idx)))
    test = take(ds, np.sort(np.concatenate(test_idx)))
    if scale:
        train, test, _ = standardize(train, test)
    log.info(f"Split {ds.name}: {train.n_samples} train / {test.n_samples} test (seed {seed})")
    return train, test


def batches(ds: Dataset, batch_size: int, shuffle: bool = False, rng: Optional[Rng] = None) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Every sample exactly once; the last block may be short."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if shuffle:
        if rng is None:
            raise ValueError("shuffling needs an rng")
        order = rng.permutation(ds.n_samples)
    else:
        order = np.arange(ds.n_samples)
    for start in range(0, ds.n_samples, batch_size):
        idx = order[start:start + batch_size]
        yield ds.X[idx], ds.y[idx]


def prepare_dataset(config) -> Tuple[Dataset, Dataset]:
    """
    Train / test datasets for a RunConfig.

    Iris: load, stratified split, z-score. MNIST: official train / test files,
    optional first-n training subset, pixels /255 only.
    """
    if config.dataset == "iris":
        full = load_iris(config.iris_path)
        train, test = stratified_split(full, config.test_fraction, config.seed)
    elif config.dataset == "mnist":
        base = Path(config.mnist_dir)
        train = load_mnist(base / MNIST_FILES["train_images"], base / MNIST_FILES["train_labels"])
        test = load_mnist(base / MNIST_FILES["test_images"], base / MNIST_FILES["test_labels"])
    else:
        raise ValueError(f"Unknown dataset: {config.dataset}")

    if config.train_subset:
        train = head(train, config.train_subset)
        log.info(f"Using the first {train.n_samples} training samples")
    return train, test
