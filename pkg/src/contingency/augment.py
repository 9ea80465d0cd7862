"""Contingency-training dataset construction.

A training set is enlarged with copies of its samples in which each value
is independently replaced by a missing value with probability ``prob``.
Missing values are written as zero and every sample is followed by a
presence mask (1 = present, 0 = missing), so a classifier sees ``2 * nv``
inputs. Settings are written ``<r_a>A/<r_i>I/<prob>``: ``r_a`` is the size of
the artificial part relative to the initial set, ``r_i`` the fraction of
the initial set kept alongside it.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Protocol, Union

import numpy as np

from contingency.data import RawDataset
from contingency.rng import SeedLike, as_generator

SPEC_PATTERN = re.compile(r"^([0-9]+(\.[0-9]+)?)A/([0-9]+(\.[0-9]+)?)I/([0-9]+(\.[0-9]+)?)$")


class SpecError(ValueError):
    """Malformed or out-of-range augmentation setting."""


@dataclass(frozen=True)
class AugmentationSpec:
    r_a: float
    r_i: float
    prob: float

    def __post_init__(self):
        if not self.r_a >= 0:
            raise SpecError(f"r_a must be >= 0, got {self.r_a}")
        if not 0 <= self.r_i <= 1:
            raise SpecError(f"r_i must be in [0, 1], got {self.r_i}")
        if not 0 <= self.prob <= 1:
            raise SpecError(f"prob must be in [0, 1], got {self.prob}")
        if self.r_a + self.r_i <= 0:
            raise SpecError("r_a + r_i must be > 0 (empty training set)")

    def __str__(self):
        return format_spec(self)


def _fmt(x: float) -> str:
    return np.format_float_positional(float(x), trim="-")


def parse_spec(text: str) -> AugmentationSpec:
    m = SPEC_PATTERN.match(text)
    if m is None:
        raise SpecError(f"malformed setting {text!r}; expected e.g. '10A/0I/0.1'")
    return AugmentationSpec(float(m.group(1)), float(m.group(3)), float(m.group(5)))


def format_spec(spec: AugmentationSpec) -> str:
    return f"{_fmt(spec.r_a)}A/{_fmt(spec.r_i)}I/{_fmt(spec.prob)}"


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class MaskedSample:
    values: np.ndarray
    mask: np.ndarray
    label: int

    def encoded(self) -> np.ndarray:
        return np.concatenate([self.values, self.mask])


@dataclass(frozen=True)
class EncodedDataset:
    """Masked rows stored column-wise.

    ``source`` holds, per row, the index of the originating sample in the
    dataset that was encoded, and ``artificial`` marks corrupted rows.
    """

    values: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    n_classes: int
    source: Optional[np.ndarray] = None
    artificial: Optional[np.ndarray] = None

    @property
    def nv(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        """Classifier input matrix, values followed by mask: ``(rows, 2 * nv)``."""
        return np.hstack([self.values, self.mask.astype(np.float64)])

    @property
    def rows(self) -> Iterator[MaskedSample]:
        for v, m, y in zip(self.values, self.mask, self.labels):
            yield MaskedSample(v, m, int(y))

    def to_csv(self, path: Union[str, Path]) -> None:
        nv = self.nv
        header = [f"v_{j + 1}" for j in range(nv)] + [f"m_{j + 1}" for j in range(nv)] + ["label"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for v, m, y in zip(self.values, self.mask, self.labels):
                w.writerow([repr(float(x)) for x in v] + [int(b) for b in m] + [int(y)])


def corrupt_sample(s: np.ndarray, prob: float, rng: SeedLike, label: int = -1) -> MaskedSample:
    """Mask every position of ``s`` independently with probability ``prob``."""
    if not 0 <= prob <= 1:
        raise SpecError(f"prob must be in [0, 1], got {prob}")
    s = np.asarray(s, dtype=np.float64)
    present = as_generator(rng).random(s.shape[0]) >= prob
    return MaskedSample(np.where(present, s, 0.0), present.astype(np.uint8), label)


class StoppingCriterion(Protocol):
    """Decides how many artificial samples to generate.

    Only a fixed target count is implemented; a criterion driven by the
    classifier's learning error would plug in here.
    """

    def target_count(self, n: int, spec: AugmentationSpec) -> int: ...


class ConstantCount:
    def target_count(self, n: int, spec: AugmentationSpec) -> int:
        return round_half_up(spec.r_a * n)


def select_sources(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count // n`` full passes over ``0..n-1``, then the remainder without replacement."""
    k, extra = divmod(count, n)
    passes = np.tile(np.arange(n), k)
    tail = np.sort(rng.choice(n, size=extra, replace=False)) if extra else np.empty(0, np.int64)
    return np.concatenate([passes, tail]).astype(np.int64)


def build_contingency_dataset(
    d: RawDataset,
    spec: AugmentationSpec,
    rng: SeedLike,
    criterion: StoppingCriterion = ConstantCount(),
) -> EncodedDataset:
    """Artificial corrupted copies followed by the retained original samples.

    Row ``i`` of the artificial block is exactly what ``corrupt_sample``
    would produce for its source row, drawing from the same generator in
    row order.
    """
    rng = as_generator(rng)
    n, nv = d.n, d.nv
    n_art = criterion.target_count(n, spec)
    n_keep = round_half_up(spec.r_i * n)

    src = select_sources(n, n_art, rng)
    present = rng.random((n_art, nv)) >= spec.prob
    art_values = np.where(present, d.features[src], 0.0)

    if n_keep == n:
        kept = np.arange(n)
    else:
        kept = np.sort(rng.choice(n, size=n_keep, replace=False))

    values = np.vstack([art_values, d.features[kept]])
    mask = np.vstack([present.astype(np.uint8), np.ones((n_keep, nv), np.uint8)])
    source = np.concatenate([src, kept])
    labels = d.labels[source]
    artificial = np.concatenate([np.ones(n_art, bool), np.zeros(n_keep, bool)])
    return EncodedDataset(values, mask, labels, d.n_classes, source, artificial)


def encode_plain(d: RawDataset) -> EncodedDataset:
    """All-ones mask encoding; an original zero still counts as present."""
    return EncodedDataset(
        d.features.copy(),
        np.ones(d.features.shape, np.uint8),
        d.labels.copy(),
        d.n_classes,
        np.arange(d.n),
        np.zeros(d.n, bool),
    )
