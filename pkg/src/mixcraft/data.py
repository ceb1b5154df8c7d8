"""Observation storage, CSV ingestion and the stratified train/test split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassTooSmall, DimensionMismatch, ParseError, RaggedRows


def round_half_up(x: float) -> int:
    """round() uses banker's rounding; splits and bin rules need half-up."""
    return int(math.floor(x + 0.5))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x d matrix of finite real observations."""

    values: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DimensionMismatch(f"need an n x d matrix with n, d >= 1, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParseError("dataset contains non-finite values")
        object.__setattr__(self, "values", _freeze(a.copy()))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Dataset plus per-row class/cluster ids forming a contiguous range 1..s."""

    data: Dataset
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int)
        if lab.ndim != 1 or lab.shape[0] != self.data.n:
            raise DimensionMismatch(
                f"need {self.data.n} labels, got shape {lab.shape}"
            )
        uniq = np.unique(lab)
        if uniq[0] != 1 or uniq[-1] != len(uniq):
            raise ParseError(
                f"labels must form a contiguous range 1..s, got values {uniq.tolist()}"
            )
        object.__setattr__(self, "labels", _freeze(lab.copy()))

    @property
    def s(self) -> int:
        return int(self.labels.max())


@dataclass(frozen=True, eq=False)
class SplitResult:
    """Stratified partition: train chunks plus a held-out test set."""

    train: list[LabeledDataset]
    test: Dataset
    test_labels: np.ndarray
    p: float


def load_csv(path, has_header: bool = False, name: str | None = None) -> Dataset:
    """Read a rectangular numeric CSV ('.' decimals, ',' separators)."""
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if has_header and i == 0:
                continue
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise RaggedRows(
                    f"row {i} has {len(row)} fields, expected {width}", row=i
                )
            parsed = []
            for j, cell in enumerate(row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"cannot parse {cell!r} at row {i}, column {j}", row=i, col=j
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ParseError("file holds no data rows")
    import os

    return Dataset(np.array(rows), name=name or os.path.splitext(os.path.basename(str(path)))[0])


def extract_class_column(data: Dataset, class_col: int) -> LabeledDataset:
    """Pull a label column out of a raw matrix, keeping the rest as features.

    ``class_col`` is zero-based.  Labels must be positive integers.
    """
    if not 0 <= class_col < data.d:
        raise DimensionMismatch(f"class column {class_col} outside 0..{data.d - 1}")
    if data.d < 2:
        raise DimensionMismatch("need at least one feature column besides the labels")
    raw = data.values[:, class_col]
    lab = raw.astype(int)
    if np.any(lab != raw) or np.any(lab < 1):
        raise ParseError("class column must hold positive integers")
    feats = np.delete(data.values, class_col, axis=1)
    return LabeledDataset(Dataset(feats, name=data.name), lab)


def split(data: LabeledDataset, p: float, rng: np.random.Generator) -> SplitResult:
    """Stratified split: each class contributes round-half-up(p * n_s) rows to train.

    Row selection within a class uses a seeded shuffle, so a fixed generator
    state reproduces the split exactly.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"train fraction must lie in (0, 1), got {p}")
    train_idx: list[np.ndarray] = []
    test_idx: list[np.ndarray] = []
    for label in range(1, data.s + 1):
        members = np.flatnonzero(data.labels == label)
        if members.size < 2:
            raise ClassTooSmall(label, members.size)
        order = rng.permutation(members.size)
        cut = round_half_up(p * members.size)
        if cut == 0 or cut == members.size:
            side = "train" if cut == 0 else "test"
            raise ValueError(
                f"p={p} leaves class {label} with no {side} rows ({members.size} members)"
            )
        train_idx.append(members[order[:cut]])
        test_idx.append(members[order[cut:]])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    train = LabeledDataset(
        Dataset(data.data.values[tr], name=data.data.name + "_train"),
        data.labels[tr],
    )
    test = Dataset(data.data.values[te], name=data.data.name + "_test")
    return SplitResult(train=[train], test=test, test_labels=data.labels[te].copy(), p=p)


def save_csv(path, values: np.ndarray, header: list[str] | None = None) -> None:
    """Write a numeric matrix as CSV with full round-trip float precision."""
    arr = np.atleast_2d(np.asarray(values))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header is not None:
            writer.writerow(header)
        for row in arr:
            writer.writerow([_format_cell(x) for x in row])


def _format_cell(x) -> str:
    f = float(x)
    if f.is_integer() and abs(f) < 1e15:
        return str(int(f))
    return repr(f)
