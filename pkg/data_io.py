"""Dataset parsing, standardization, split plans and synthetic generators.

Every random draw goes through ``numpy.random.default_rng(seed)`` (PCG64),
so a split plan is reproducible from its seeds.
"""
import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from errors import DataFormatError

logger = logging.getLogger(__name__)

NOISE_LEVEL = 1e-12
NOISE_SEED = 0
FOLD_SEED = 0
SPLIT_SEEDS = (1, 2, 3, 4, 5)
TRAIN_FRACTION = 0.8
UNROLL_FRACTION = 0.75
MAX_FOLDS = 9

LIBSVM_SUFFIXES = {".libsvm", ".svm", ".txt"}
CSV_SUFFIXES = {".csv"}


@dataclass(frozen=True)
class Dataset:
    name: str
    F: np.ndarray
    labels: np.ndarray
    source: Optional[str] = None
    fmt: Optional[str] = None

    def __post_init__(self):
        if self.F.ndim != 2:
            raise DataFormatError(f"feature matrix must be 2-D, got shape {self.F.shape}")
        if self.labels.shape != (self.F.shape[0],):
            raise DataFormatError(f"{self.labels.size} labels for {self.F.shape[0]} samples")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise DataFormatError("labels must be -1 or +1")

    @property
    def n_samples(self) -> int:
        return self.F.shape[0]

    @property
    def n_features(self) -> int:
        return self.F.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        return Dataset(name=self.name, F=self.F[indices], labels=self.labels[indices],
                       source=self.source, fmt=self.fmt)


def map_labels(raw: Sequence[float]) -> np.ndarray:
    """Two distinct raw values map to -1 (smaller) and +1 (larger)"""
    raw = np.asarray(raw, dtype=float)
    values = np.unique(raw)
    if values.size > 2:
        raise DataFormatError(f"expected a binary label set, got {values.size} distinct labels")
    if values.size == 1:
        return np.where(raw > 0, 1, -1)
    return np.where(raw == values[1], 1, -1)


def parse_libsvm(text: str, name: str = "libsvm") -> Dataset:
    """Sparse ``label idx:val ...`` lines, 1-based feature indices"""
    raw_labels, rows, cols, values = [], [], [], []
    n_features = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        head, *features = line.split()
        try:
            raw_labels.append(float(head))
        except ValueError:
            raise DataFormatError(f"label {head!r} is not numeric", line=lineno) from None
        row = len(raw_labels) - 1
        for token in features:
            idx, sep, val = token.partition(":")
            try:
                idx, val = int(idx), float(val)
            except ValueError:
                raise DataFormatError(f"malformed feature {token!r}", line=lineno) from None
            if not sep or idx < 1:
                raise DataFormatError(f"malformed feature {token!r}", line=lineno)
            rows.append(row)
            cols.append(idx - 1)
            values.append(val)
            n_features = max(n_features, idx)

    if not raw_labels:
        raise DataFormatError("no samples found")
    F = sparse.csr_matrix((values, (rows, cols)), shape=(len(raw_labels), max(n_features, 1))).toarray()
    return Dataset(name=name, F=F, labels=map_labels(raw_labels), fmt="libsvm")


def parse_csv(text: str, label_column: Union[int, str] = -1, header: bool = False, name: str = "csv") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    columns: Optional[List[str]] = None
    records: List[Tuple[int, List[str]]] = []
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        if header and columns is None:
            columns = [cell.strip() for cell in row]
            continue
        records.append((reader.line_num, row))

    if not records:
        raise DataFormatError("no samples found")
    width = len(columns) if columns is not None else len(records[0][1])

    if isinstance(label_column, str):
        if columns is None or label_column not in columns:
            raise DataFormatError(f"label column {label_column!r} not found")
        label_idx = columns.index(label_column)
    else:
        label_idx = label_column + width if label_column < 0 else label_column
        if not 0 <= label_idx < width:
            raise DataFormatError(f"label column {label_column} out of range for {width} columns")

    table = np.empty((len(records), width))
    for r, (lineno, row) in enumerate(records):
        if len(row) != width:
            raise DataFormatError(f"expected {width} cells, got {len(row)}", line=lineno)
        for c, cell in enumerate(row):
            try:
                table[r, c] = float(cell)
            except ValueError:
                raise DataFormatError(f"non-numeric cell {cell!r} in column {c}", line=lineno) from None

    F = np.delete(table, label_idx, axis=1)
    return Dataset(name=name, F=F, labels=map_labels(table[:, label_idx]), fmt="csv")


def load_dataset(path, fmt: Optional[str] = None, label_column: Union[int, str] = -1,
                 header: bool = False) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    if fmt is None:
        suffix = path.suffix.lower()
        if suffix in CSV_SUFFIXES:
            fmt = "csv"
        elif suffix in LIBSVM_SUFFIXES or not suffix:
            fmt = "libsvm"
        else:
            raise DataFormatError(f"cannot infer the format of {path}; pass fmt explicitly")

    text = path.read_text()
    if fmt == "libsvm":
        dataset = parse_libsvm(text, name=path.stem)
    elif fmt == "csv":
        dataset = parse_csv(text, label_column=label_column, header=header, name=path.stem)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")

    logger.info(f"Loaded {dataset.n_samples} samples with {dataset.n_features} features from {path}")
    return Dataset(name=dataset.name, F=dataset.F, labels=dataset.labels, source=str(path), fmt=fmt)


def standardize(F, noise: float = NOISE_LEVEL, seed: int = NOISE_SEED) -> np.ndarray:
    """Noise, then zero-mean / unit-std columns, then unit-length rows"""
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] < 2:
        raise ValueError("standardize needs an N x K matrix with N >= 2")
    if noise > 0:
        F = F + np.random.default_rng(seed).uniform(-noise, noise, size=F.shape)

    mean = F.mean(axis=0)
    std = F.std(axis=0)
    std = np.where(std <= 1e-10 * (1.0 + np.abs(mean)), 1.0, std)
    F = (F - mean) / std

    norms = np.linalg.norm(F, axis=1, keepdims=True)
    return np.divide(F, norms, out=np.zeros_like(F), where=norms > 0)


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    seed: int
    train: np.ndarray
    test: np.ndarray
    unroll_train: Optional[np.ndarray] = None
    unroll_test: Optional[np.ndarray] = None

    def to_dict(self) -> Dict:
        data = {"fold": self.fold, "seed": self.seed, "train": self.train.tolist(), "test": self.test.tolist()}
        if self.unroll_train is not None:
            data["unroll_train"] = self.unroll_train.tolist()
            data["unroll_test"] = self.unroll_test.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "FoldSplit":
        def arr(key):
            return np.array(data[key], dtype=int) if data.get(key) is not None else None
        return cls(fold=int(data["fold"]), seed=int(data["seed"]), train=arr("train"), test=arr("test"),
                   unroll_train=arr("unroll_train"), unroll_test=arr("unroll_test"))


@dataclass(frozen=True)
class SplitPlan:
    n: int
    K: int
    fold_seed: int
    split_seeds: Tuple[int, ...]
    folds: List[np.ndarray]
    splits: List[FoldSplit] = field(default_factory=list)
    dataset: Optional[str] = None

    def for_fold(self, fold: int) -> List[FoldSplit]:
        return [s for s in self.splits if s.fold == fold]

    def to_dict(self) -> Dict:
        return {
            "n": self.n,
            "K": self.K,
            "fold_seed": self.fold_seed,
            "split_seeds": list(self.split_seeds),
            "folds": [f.tolist() for f in self.folds],
            "splits": [s.to_dict() for s in self.splits],
            "dataset": self.dataset,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SplitPlan":
        return cls(n=int(data["n"]), K=int(data["K"]), fold_seed=int(data["fold_seed"]),
                   split_seeds=tuple(int(s) for s in data["split_seeds"]),
                   folds=[np.array(f, dtype=int) for f in data["folds"]],
                   splits=[FoldSplit.from_dict(s) for s in data["splits"]],
                   dataset=data.get("dataset"))


def shuffle_cut(indices: np.ndarray, fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Shuffle with seed and cut, keeping both sides non-empty"""
    shuffled = np.random.default_rng(seed).permutation(indices)
    k = min(max(int(round(fraction * indices.size)), 1), indices.size - 1)
    return np.sort(shuffled[:k]), np.sort(shuffled[k:])


def make_splits(dataset: Dataset, K: int, split_seeds: Sequence[int] = SPLIT_SEEDS, fold_seed: int = FOLD_SEED,
                train_fraction: float = TRAIN_FRACTION, unroll_fraction: Optional[float] = None) -> SplitPlan:
    """K folds of the dataset from fold_seed, then one train/test cut per fold and split seed.

    With ``unroll_fraction`` the train part is cut again into unroll-train
    and unroll-test, reusing the split seed.
    """
    n = dataset.n_samples
    if not 2 <= K <= MAX_FOLDS:
        raise ValueError(f"K must be between 2 and {MAX_FOLDS}, got {K}")
    if n < 2 * K:
        raise ValueError(f"{n} samples are too few for {K} folds")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")

    permutation = np.random.default_rng(fold_seed).permutation(n)
    folds = [np.sort(f) for f in np.array_split(permutation, K)]
    splits = []
    for fold, members in enumerate(folds):
        for seed in split_seeds:
            train, test = shuffle_cut(members, train_fraction, seed)
            unroll_train = unroll_test = None
            if unroll_fraction is not None:
                if train.size < 2:
                    raise ValueError(f"fold {fold} train part is too small for an unroll split")
                unroll_train, unroll_test = shuffle_cut(train, unroll_fraction, seed)
            splits.append(FoldSplit(fold=fold, seed=int(seed), train=train, test=test,
                                    unroll_train=unroll_train, unroll_test=unroll_test))
    return SplitPlan(n=n, K=K, fold_seed=fold_seed, split_seeds=tuple(int(s) for s in split_seeds),
                     folds=folds, splits=splits, dataset=dataset.name)


def make_two_cluster(n: int = 10, m: int = 4, separation: float = 6.0, seed: int = 0,
                     k: int = 2) -> Tuple[Dataset, np.ndarray]:
    """Two unit-variance Gaussian clusters along the first axis.

    Returns the dataset and m labeled indices holding both classes.
    """
    if n < 2 or not 2 <= m <= n:
        raise ValueError(f"need n >= 2 and 2 <= m <= n, got n={n}, m={m}")
    rng = np.random.default_rng(seed)
    labels = np.where(np.arange(n) < (n + 1) // 2, 1, -1)
    labels = rng.permutation(labels)
    F = rng.standard_normal((n, k))
    F[:, 0] += labels * separation / 2.0

    positive = rng.permutation(np.flatnonzero(labels == 1))
    negative = rng.permutation(np.flatnonzero(labels == -1))
    n_pos = min((m + 1) // 2, positive.size)
    n_neg = min(m - n_pos, negative.size)
    n_pos = m - n_neg
    labeled = np.sort(np.concatenate([positive[:n_pos], negative[:n_neg]]))
    return Dataset(name=f"two-cluster-{seed}", F=F, labels=labels), labeled


def make_sonar_like(n: int = 60, k: int = 14, seed: int = 0, shift: float = 0.6) -> Dataset:
    """Overlapping classes with correlated features"""
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.where(np.arange(n) < n // 2, 1, -1))
    mixing = rng.standard_normal((k, k)) / np.sqrt(k) + np.eye(k)
    direction = rng.standard_normal(k)
    direction /= np.linalg.norm(direction)
    F = rng.standard_normal((n, k)) @ mixing + np.outer(labels * shift, direction) * np.sqrt(k)
    return Dataset(name=f"sonar-like-{seed}", F=F, labels=labels)
