"""Datasets, ingestion (CSV, IDX), standardisation, splitting and column restriction.

Feature indices are 0-based everywhere in code. Reports and the CLI print
them 1-based.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

FeatureSet = tuple  # ordered tuple of distinct 0-based feature indices


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset construction."""


@dataclass(frozen=True)
class Dataset:
    """J x P features with J x Q targets.

    Arrays are copied to float64 and flagged read-only so a dataset can be
    shared between worker threads.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: Optional[tuple] = None
    true_support: Optional[frozenset] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        T = np.array(self.targets, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if T.ndim == 1:
            T = T.reshape(-1, 1)
        if X.ndim != 2 or T.ndim != 2:
            raise DataError("features and targets must be 2-D")
        if X.shape[0] != T.shape[0]:
            raise DataError(f"row mismatch: {X.shape[0]} feature rows vs {T.shape[0]} target rows")
        if X.shape[0] < 1 or T.shape[1] < 1:
            raise DataError("dataset needs J >= 1 and Q >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(T))):
            raise DataError("non-finite entries in dataset")
        X.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", T)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != X.shape[1]:
                raise DataError(f"{len(names)} feature names for {X.shape[1]} columns")
            object.__setattr__(self, "feature_names", names)
        if self.true_support is not None:
            sup = frozenset(int(i) for i in self.true_support)
            if any(i < 0 or i >= X.shape[1] for i in sup):
                raise DataError(f"true_support {sorted(sup)} outside 0..{X.shape[1] - 1}")
            object.__setattr__(self, "true_support", sup)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]

    def take(self, rows) -> "Dataset":
        """Row subset, keeping column metadata."""
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, features=self.features[rows], targets=self.targets[rows])


@dataclass(frozen=True)
class DataSplit:
    train: Dataset
    validation: Dataset
    test: Optional[Dataset] = None
    indices: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        parts = [self.train, self.validation] + ([self.test] if self.test is not None else [])
        if len({p.n_features for p in parts}) != 1 or len({p.n_targets for p in parts}) != 1:
            raise DataError("split parts disagree on P or Q")


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask of zero-variance columns

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        scale = np.where(self.constant, 1.0, self.std)
        out = (X - self.mean) / scale
        out[:, self.constant] = 0.0
        return out

    def invert(self, Z: np.ndarray) -> np.ndarray:
        scale = np.where(self.constant, 1.0, self.std)
        return np.asarray(Z, dtype=np.float64) * scale + self.mean


def _fit_scaling(M: np.ndarray) -> ScalingParams:
    mean = M.mean(axis=0)
    std = M.std(axis=0, ddof=1) if M.shape[0] > 1 else np.zeros(M.shape[1])
    # relative test so columns like [5, 5, 5] with rounding noise stay constant
    constant = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    return ScalingParams(mean=mean, std=std, constant=constant)


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def load_csv(path, target_columns=-1, has_header: bool = True) -> Dataset:
    """Read a numeric CSV; ``target_columns`` are names or 0-based positions.

    Negative positions count from the end, so the default takes the last
    column as the single target.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path} has a header but no data rows")
    width = len(header) if header else len(rows[0])
    values = np.empty((len(rows), width))
    for r, row in enumerate(rows):
        line = r + (2 if has_header else 1)
        if len(row) != width:
            raise DataError(f"{path}: line {line} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            col = header[c] if header else str(c)
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {r + 1}, column {col}") from None
            if not math.isfinite(values[r, c]):
                raise DataError(f"{path}: non-finite cell at row {r + 1}, column {col}")

    if isinstance(target_columns, (str, int)):
        target_columns = [target_columns]
    tcols = []
    for spec in target_columns:
        if isinstance(spec, str) and not spec.lstrip("-").isdigit():
            if header is None or spec not in header:
                raise DataError(f"target column {spec!r} not found in {path}")
            tcols.append(header.index(spec))
        else:
            idx = int(spec)
            if not -width <= idx < width:
                raise DataError(f"target column {idx} out of range for {width} columns")
            tcols.append(idx % width)
    fcols = [c for c in range(width) if c not in tcols]
    if not fcols:
        raise DataError("no feature columns left after removing targets")
    names = tuple(header[c] for c in fcols) if header else None
    return Dataset(values[:, fcols], values[:, tcols], feature_names=names,
                   meta={"source": str(path)})


IDX_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}


def read_idx(path) -> np.ndarray:
    """Parse an IDX file (optionally gzipped) into an array of its stored shape."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[0] != 0 or raw[1] != 0 or raw[2] not in IDX_DTYPES:
        raise DataError(f"{path}: bad IDX magic number")
    ndim = raw[3]
    if ndim < 1:
        raise DataError(f"{path}: bad IDX magic number (zero dimensions)")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dtype = np.dtype(IDX_DTYPES[raw[2]])
    body = raw[4 + 4 * ndim:]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(body) < expected:
        raise DataError(f"{path}: truncated, {len(body)} bytes for shape {dims}")
    return np.frombuffer(body[:expected], dtype=dtype).reshape(dims)


def load_idx(images_path, labels_path, limit: Optional[int] = None,
             n_classes: Optional[int] = None) -> Dataset:
    """MNIST-style IDX3 images + IDX1 labels -> flattened [0, 1] pixels, one-hot targets."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise DataError(f"{images_path}: expected 3-D image array, got {images.ndim}-D")
    if labels.ndim != 1:
        raise DataError(f"{labels_path}: expected 1-D label array, got {labels.ndim}-D")
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    rows, cols = images.shape[1:]
    X = images.reshape(images.shape[0], rows * cols).astype(np.float64) / 255.0
    labels = labels.astype(np.int64)
    Q = n_classes or int(labels.max()) + 1
    return Dataset(X, one_hot(labels, Q), meta={"grid": (rows, cols), "source": str(images_path)})


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError(f"labels outside 0..{n_classes - 1}")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def standardize(data: Dataset, params: Optional[ScalingParams] = None,
                targets: bool = False):
    """Zero-mean / unit-std features (and optionally targets).

    With ``params`` given, those statistics are applied instead of fitting
    new ones. Returns ``(dataset, feature_params)`` or, with ``targets=True``,
    ``(dataset, feature_params, target_params)``; ``params`` may then be a
    ``(feature_params, target_params)`` pair.
    """
    tparams = None
    if targets and isinstance(params, tuple):
        params, tparams = params
    if params is None:
        if data.n_samples < 2:
            raise DataError("standardize needs at least two samples")
        params = _fit_scaling(data.features)
    T = data.targets
    if targets:
        if tparams is None:
            tparams = _fit_scaling(T)
        T = tparams.apply(T)
    out = replace(data, features=params.apply(data.features), targets=T)
    return (out, params, tparams) if targets else (out, params)


def split(data: Dataset, fractions: Sequence[float], seed: int) -> DataSplit:
    """Shuffle under ``seed`` and cut into (train, validation, test).

    Part sizes are floor(fraction * J); leftover rows go to train.
    """
    fr = [float(f) for f in fractions]
    if len(fr) == 2:
        fr.append(0.0)
    if len(fr) != 3 or any(f < 0 for f in fr) or fr[0] <= 0 or fr[1] <= 0:
        raise DataError(f"fractions must be (train>0, validation>0, test>=0), got {fractions}")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {sum(fr)}")
    J = data.n_samples
    n_val = int(math.floor(fr[1] * J + 1e-9))
    n_test = int(math.floor(fr[2] * J + 1e-9))
    n_train = J - n_val - n_test
    for name, f, n in (("train", fr[0], n_train), ("validation", fr[1], n_val),
                       ("test", fr[2], n_test)):
        if f > 0 and n < 1:
            raise DataError(f"{name} part would be empty for J={J}")
    perm = np.random.default_rng(seed).permutation(J)
    tr, va, te = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    return DataSplit(train=data.take(tr), validation=data.take(va),
                     test=data.take(te) if n_test else None,
                     indices={"train": tr, "validation": va, "test": te})


def restrict(data: Dataset, features: Sequence[int]) -> Dataset:
    """Keep only ``features`` columns, in the given order (x^S)."""
    idx = np.asarray(list(features), dtype=np.intp)
    P = data.n_features
    if idx.size and (idx.min() < 0 or idx.max() >= P):
        raise DataError(f"feature index out of range 0..{P - 1}: {list(features)}")
    names = tuple(data.feature_names[i] for i in idx) if data.feature_names else None
    return Dataset(data.features[:, idx], data.targets, feature_names=names,
                   meta=data.meta)
