"""Tabular classification datasets: loading, irrelevant-variable injection, splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from contingency.rng import SeedLike, as_generator

ALPHA_RANGE = (1.0, 20.0)

ColumnRef = Union[int, str]


class DatasetError(ValueError):
    """Raised for unreadable or invalid dataset input."""


@dataclass(frozen=True)
class RawDataset:
    """Numeric feature matrix with densely encoded class labels.

    ``class_names`` maps label index -> raw label value as read from the file.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    column_names: Optional[tuple[str, ...]] = None
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n, nv = features.shape
        # sources need n >= 2 (load_csv); split sides may hold a single row
        if n < 1 or nv < 1:
            raise DatasetError(f"need n >= 1 and nv >= 1, got n={n}, nv={nv}")
        if labels.shape != (n,):
            raise DatasetError("labels must have one entry per row")
        if not np.all(np.isfinite(features)):
            raise DatasetError("features contain non-finite values")
        if self.n_classes < 1 or labels.min() < 0 or labels.max() >= self.n_classes:
            raise DatasetError("labels must lie in [0, n_classes)")
        if self.column_names is not None and len(self.column_names) != nv:
            raise DatasetError("column_names length does not match nv")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        if self.column_names is not None:
            object.__setattr__(self, "column_names", tuple(self.column_names))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def nv(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: np.ndarray) -> "RawDataset":
        """Rows ``rows`` of this dataset; ``n_classes`` is kept even if a class disappears."""
        rows = np.asarray(rows, dtype=np.int64)
        return replace(self, features=self.features[rows], labels=self.labels[rows])


@dataclass(frozen=True)
class IrrelevantColumnSpec:
    alpha: np.ndarray  # one upper bound per injected column

    @property
    def count(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class SplitPair:
    train: RawDataset
    test: RawDataset
    train_fraction: float
    seed: int
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)


def _is_number(cell: str) -> bool:
    try:
        return math.isfinite(float(cell))
    except ValueError:
        return False


def _resolve(ref: ColumnRef, header: Optional[list[str]], width: int) -> int:
    if isinstance(ref, str) and not ref.lstrip("-").isdigit():
        if header is None or ref not in header:
            raise DatasetError(f"column {ref!r} not found in header")
        return header.index(ref)
    idx = int(ref)
    if not -width <= idx < width:
        raise DatasetError(f"column index {idx} out of range for {width} columns")
    return idx % width


def load_csv(
    path: Union[str, Path],
    label_col: ColumnRef = -1,
    drop_cols: Sequence[ColumnRef] = (),
) -> RawDataset:
    """Read a comma-separated file into a :class:`RawDataset`.

    A header row is assumed when any non-label cell of the first row is not
    numeric. Labels are re-encoded to ``0..n_classes-1`` in sorted order of
    their raw values (numerically when all raw labels are numbers).
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in r] for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path} is empty")
    width = len(rows[0])

    first = rows[0]
    named_label = isinstance(label_col, str) and not label_col.lstrip("-").isdigit()
    label_idx_guess = None if named_label else int(label_col) % width
    has_header = named_label or any(
        not _is_number(c) for j, c in enumerate(first) if j != label_idx_guess
    )
    header = first if has_header else None
    body = rows[1:] if has_header else rows

    label_idx = _resolve(label_col, header, width)
    drop = {_resolve(c, header, width) for c in drop_cols}
    if label_idx in drop:
        raise DatasetError("label column cannot be dropped")
    keep = [j for j in range(width) if j != label_idx and j not in drop]
    if not keep:
        raise DatasetError("no feature columns left")
    if len(body) < 2:
        raise DatasetError(f"{path}: need at least 2 data rows, got {len(body)}")

    feats = np.empty((len(body), len(keep)))
    raw_labels = []
    for i, r in enumerate(body):
        if len(r) != width:
            raise DatasetError(f"{path}: row {i + 1 + has_header} has {len(r)} cells, expected {width}")
        for k, j in enumerate(keep):
            cell = r[j]
            if cell == "" or not _is_number(cell):
                raise DatasetError(f"{path}: non-numeric or missing feature cell {cell!r} at row {i + 1 + has_header}, column {j}")
            feats[i, k] = float(cell)
        if r[label_idx] == "":
            raise DatasetError(f"{path}: missing label at row {i + 1 + has_header}")
        raw_labels.append(r[label_idx])

    distinct = set(raw_labels)
    if all(_is_number(v) for v in distinct):
        classes = sorted(distinct, key=float)
    else:
        classes = sorted(distinct)
    index = {v: k for k, v in enumerate(classes)}
    labels = np.array([index[v] for v in raw_labels])
    names = tuple(header[j] for j in keep) if header else None
    return RawDataset(feats, labels, len(classes), column_names=names, class_names=tuple(classes))


def draw_irrelevant_columns(n: int, count: int, seed: SeedLike) -> tuple[IrrelevantColumnSpec, np.ndarray]:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = as_generator(seed)
    alpha = rng.uniform(*ALPHA_RANGE, size=count)
    values = rng.random((n, count)) * alpha
    return IrrelevantColumnSpec(alpha), values


def inject_irrelevant_variables(d: RawDataset, count: int, seed: SeedLike) -> RawDataset:
    """Append ``count`` columns of ``Unif(0, alpha_j)`` noise, ``alpha_j ~ Unif(1, 20)``."""
    _, noise = draw_irrelevant_columns(d.n, count, seed)
    names = None
    if d.column_names is not None:
        names = d.column_names + tuple(f"irrelevant_{j + 1}" for j in range(count))
    return replace(d, features=np.hstack([d.features, noise]), column_names=names)


def train_test_split(d: RawDataset, train_fraction: float, seed: SeedLike) -> SplitPair:
    """Unstratified random partition with ``floor(train_fraction * n)`` training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = math.floor(train_fraction * d.n)
    if n_train < 1 or d.n - n_train < 1:
        raise ValueError(f"degenerate split: {n_train} train / {d.n - n_train} test rows")
    seed_value = seed if isinstance(seed, int) else -1
    perm = as_generator(seed).permutation(d.n)
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    return SplitPair(d.subset(tr), d.subset(te), train_fraction, seed_value, tr, te)


def minmax_fit(d: RawDataset) -> tuple[np.ndarray, np.ndarray]:
    lo = d.features.min(axis=0)
    span = d.features.max(axis=0) - lo
    span[span == 0] = 1.0
    return lo, span


def minmax_apply(d: RawDataset, lo: np.ndarray, span: np.ndarray) -> RawDataset:
    return replace(d, features=(d.features - lo) / span)
