"""Datasets: the 16 two-input gates, Iris (CSV) and MNIST (IDX)."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

GATE_INPUTS = ((0, 0), (0, 1), (1, 0), (1, 1))

# outputs listed for inputs (0,0), (0,1), (1,0), (1,1) with x = (A, B)
_GATE_TABLE = {
    "FALSE": (0, 0, 0, 0),
    "AND": (0, 0, 0, 1),
    "A_AND_NOT_B": (0, 0, 1, 0),
    "A": (0, 0, 1, 1),
    "NOT_A_AND_B": (0, 1, 0, 0),
    "B": (0, 1, 0, 1),
    "XOR": (0, 1, 1, 0),
    "OR": (0, 1, 1, 1),
    "NOR": (1, 0, 0, 0),
    "XNOR": (1, 0, 0, 1),
    "NOT_B": (1, 0, 1, 0),
    "A_OR_NOT_B": (1, 0, 1, 1),
    "NOT_A": (1, 1, 0, 0),
    "NOT_A_OR_B": (1, 1, 0, 1),
    "NAND": (1, 1, 1, 0),
    "TRUE": (1, 1, 1, 1),
}
GATE_NAMES = tuple(_GATE_TABLE)
NOT_LINEARLY_SEPARABLE = ("XOR", "XNOR")

IRIS_CLASSES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")
IRIS_COLUMNS = ("sepal_length", "sepal_width", "petal_length", "petal_width", "class")

MNIST_IMAGE_MAGIC = 0x00000803
MNIST_LABEL_MAGIC = 0x00000801
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DataFormatError(ValueError):
    """Input file does not have the expected layout."""


class MagicMismatchError(DataFormatError):
    pass


class TruncatedPayloadError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


@dataclass(frozen=True)
class GateSpec:
    name: str
    targets: tuple[int, int, int, int]

    def __post_init__(self) -> None:
        if len(self.targets) != 4 or any(t not in (0, 1) for t in self.targets):
            raise ValueError(f"gate {self.name}: need four 0/1 targets, got {self.targets}")

    @classmethod
    def named(cls, name: str) -> GateSpec:
        key = name.upper()
        if key not in _GATE_TABLE:
            raise ValueError(f"unknown gate {name!r}; expected one of {', '.join(GATE_NAMES)}")
        return cls(key, _GATE_TABLE[key])

    @property
    def truth_table(self) -> list[tuple[tuple[int, int], int]]:
        return list(zip(GATE_INPUTS, self.targets))

    @property
    def inputs(self) -> np.ndarray:
        return np.array(GATE_INPUTS, dtype=np.float64)

    @property
    def target_array(self) -> np.ndarray:
        return np.array(self.targets, dtype=np.float64)


def all_gates() -> list[GateSpec]:
    return [GateSpec(n, t) for n, t in _GATE_TABLE.items()]


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) int
    n_classes: int
    class_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"features {x.shape} and labels {y.shape} disagree")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, idx) -> LabeledDataset:
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx], self.labels[idx], self.n_classes, self.class_names)

    def head(self, n: int | None) -> LabeledDataset:
        return self if n is None or n >= len(self) else self.subset(np.arange(n))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def min_max_normalize(x: np.ndarray) -> np.ndarray:
    """Per-column rescale to [0, 1]; constant columns map to 0."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    return (x - lo) / np.where(span > 0, span, 1.0)


def split(data: LabeledDataset, fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified split: ``round(fraction * n_c)`` examples of each class go to the first part."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    first, second = [], []
    for c in range(data.n_classes):
        idx = np.flatnonzero(data.labels == c)
        idx = idx[rng.permutation(idx.size)]
        k = int(round(fraction * idx.size))
        first.append(idx[:k])
        second.append(idx[k:])
    a = np.sort(np.concatenate(first))
    b = np.sort(np.concatenate(second))
    return data.subset(a), data.subset(b)


def default_iris_path() -> Path:
    return Path(str(resources.files("oscneuron") / "data" / "iris.csv"))


def load_iris(path: str | Path | None = None) -> LabeledDataset:
    """Read Iris from CSV and min-max normalize each feature.

    A header row naming the columns is optional; blank lines are skipped.
    """
    path = default_iris_path() if path is None else Path(path)
    rows, labels = [], []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if line_no == 1 and row[0].strip() == IRIS_COLUMNS[0]:
                continue
            if len(row) != 5:
                raise DataFormatError(f"{path}:{line_no}: expected 5 fields, got {len(row)}")
            try:
                feats = [float(c) for c in row[:4]]
            except ValueError:
                raise DataFormatError(f"{path}:{line_no}: non-numeric feature in {row[:4]}") from None
            name = row[4].strip()
            if name not in IRIS_CLASSES:
                raise DataFormatError(f"{path}:{line_no}: unknown class {name!r}")
            rows.append(feats)
            labels.append(IRIS_CLASSES.index(name))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return LabeledDataset(min_max_normalize(np.array(rows)), np.array(labels), 3, IRIS_CLASSES)


def _read_idx(path: Path, magic: int, n_dims: int) -> tuple[tuple[int, ...], np.ndarray]:
    raw = path.read_bytes()
    head = 4 + 4 * n_dims
    if len(raw) < 4:
        raise TruncatedPayloadError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise MagicMismatchError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < head:
        raise TruncatedPayloadError(f"{path}: header cut short")
    dims = struct.unpack(f">{n_dims}I", raw[4:head])
    need = int(np.prod(dims, dtype=np.int64))
    if len(raw) - head < need:
        raise TruncatedPayloadError(f"{path}: payload has {len(raw) - head} bytes, header promises {need}")
    return dims, np.frombuffer(raw, dtype=np.uint8, count=need, offset=head)


def load_mnist_idx(images_path: str | Path, labels_path: str | Path) -> LabeledDataset:
    """Images scaled to [0, 1] by /255 and flattened to 784 columns."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    dims, pix = _read_idx(images_path, MNIST_IMAGE_MAGIC, 3)
    (n_lab,), lab = _read_idx(labels_path, MNIST_LABEL_MAGIC, 1)
    if dims[0] != n_lab:
        raise CountMismatchError(f"{images_path} has {dims[0]} images but {labels_path} has {n_lab} labels")
    if lab.size and lab.max() > 9:
        raise DataFormatError(f"{labels_path}: label {int(lab.max())} out of range 0..9")
    x = pix.reshape(dims[0], dims[1] * dims[2]).astype(np.float64) / 255.0
    return LabeledDataset(x, lab.astype(np.int64), 10, tuple(str(d) for d in range(10)))


def load_mnist_dir(directory: str | Path, part: str) -> LabeledDataset:
    """``part`` is ``"train"`` or ``"test"``; files use the standard MNIST names."""
    images, labels = MNIST_FILES[part]
    d = Path(directory)
    for name in (images, labels):
        if not (d / name).is_file():
            raise FileNotFoundError(f"missing MNIST file {d / name}")
    return load_mnist_idx(d / images, d / labels)
