"""Binary record datasets: loading, validation, writing, Poisson subsampling.

A record is a {0,1} vector of length m marking which items of a fixed
universe an individual holds.  The record is the unit of privacy.
Datasets are immutable after construction and safe for concurrent reads.

Two on-disk formats are supported:

* ``sparse-items``: first line ``m=<int>``, then one record per line as
  whitespace-separated, strictly increasing item indices in ``[0, m)``.
* ``dense-csv``: no header, one record per line of comma-separated
  numbers in ``[0, 255]``; a cell becomes 1 when it exceeds the
  binarization threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

SPARSE_ITEMS = "sparse-items"
DENSE_CSV = "dense-csv"
FORMATS = (SPARSE_ITEMS, DENSE_CSV)

DEFAULT_BINARIZE_THRESHOLD = 127


@dataclass(frozen=True)
class BinaryDataset:
    """m-dimensional binary records, one row per individual.

    ``records`` has shape (n, m) with entries in {0, 1}.  ``labels``,
    when present, are evaluation-only class ids; training code never
    reads them.  Construct through :func:`make_dataset` or a loader so
    the invariants are checked.
    """

    m: int
    records: np.ndarray
    labels: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.records.shape[0])


@dataclass(frozen=True)
class Batch:
    """A Poisson-subsampled view of a dataset."""

    indices: np.ndarray
    records: np.ndarray

    def __len__(self) -> int:
        return int(self.records.shape[0])


def make_dataset(
    records: np.ndarray,
    labels: np.ndarray | None = None,
    *,
    allow_empty: bool = False,
) -> BinaryDataset:
    """Validate and freeze a (n, m) 0/1 array into a BinaryDataset.

    ``allow_empty`` admits all-zero rows; loaders keep it off, while
    sampled synthetic data may legitimately contain the zero vector.
    """
    arr = np.asarray(records)
    if arr.ndim != 2:
        raise DataError(f"records must be 2-D, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise DataError("records must have at least one column")
    if not np.isin(arr, (0, 1)).all():
        raise DataError("records must contain only 0/1 entries")
    arr = arr.astype(np.uint8, copy=True)
    if not allow_empty and not arr.any(axis=1).all():
        first = int(np.flatnonzero(~arr.any(axis=1))[0])
        raise DataError(f"record {first} is empty (all zeros)")
    lab = None
    if labels is not None:
        lab = np.asarray(labels, dtype=np.int64).copy()
        if lab.ndim != 1 or lab.shape[0] != arr.shape[0]:
            raise DataError(
                f"labels length {lab.shape} does not match {arr.shape[0]} records"
            )
        lab.flags.writeable = False
    arr.flags.writeable = False
    return BinaryDataset(m=int(arr.shape[1]), records=arr, labels=lab)


def load_records(
    path,
    fmt: str = SPARSE_ITEMS,
    *,
    binarize_threshold: int = DEFAULT_BINARIZE_THRESHOLD,
    allow_empty: bool = False,
) -> BinaryDataset:
    """Load a dataset from disk, reporting malformed lines by number."""
    if fmt not in FORMATS:
        raise DataError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if fmt == SPARSE_ITEMS:
        return _parse_sparse(lines, allow_empty)
    return _parse_dense(lines, binarize_threshold, allow_empty)


def _parse_sparse(lines: list[str], allow_empty: bool) -> BinaryDataset:
    if not lines or not lines[0].startswith("m="):
        raise DataError("line 1: expected header 'm=<int>'")
    try:
        m = int(lines[0][2:])
    except ValueError:
        raise DataError(f"line 1: malformed header {lines[0]!r}") from None
    if m < 1:
        raise DataError(f"line 1: declared dimension must be >= 1, got {m}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        row = np.zeros(m, dtype=np.uint8)
        if not tokens:
            if not allow_empty:
                raise DataError(f"line {lineno}: empty record")
            rows.append(row)
            continue
        try:
            idx = np.array([int(t) for t in tokens], dtype=np.int64)
        except ValueError:
            raise DataError(f"line {lineno}: malformed item index") from None
        if (idx < 0).any() or (idx >= m).any():
            bad = int(idx[(idx < 0) | (idx >= m)][0])
            raise DataError(f"line {lineno}: item index {bad} out of range [0, {m})")
        if idx.size > 1 and not (np.diff(idx) > 0).all():
            raise DataError(f"line {lineno}: item indices must be strictly increasing")
        row[idx] = 1
        rows.append(row)
    if not rows:
        raise DataError("dataset contains no records")
    return make_dataset(np.stack(rows), allow_empty=allow_empty)


def _parse_dense(lines: list[str], threshold: int, allow_empty: bool) -> BinaryDataset:
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise DataError(f"line {lineno}: empty record")
        cells = line.split(",")
        try:
            vals = np.array([float(c) for c in cells], dtype=np.float64)
        except ValueError:
            raise DataError(f"line {lineno}: malformed cell") from None
        if width is None:
            width = vals.size
        elif vals.size != width:
            raise DataError(
                f"line {lineno}: expected {width} columns, got {vals.size}"
            )
        if (vals < 0).any() or (vals > 255).any():
            raise DataError(f"line {lineno}: cell value outside [0, 255]")
        rows.append((vals > threshold).astype(np.uint8))
    if not rows:
        raise DataError("dataset contains no records")
    return make_dataset(np.stack(rows), allow_empty=allow_empty)


def write_records(dataset: BinaryDataset, path) -> None:
    """Write in sparse-items format; loading the result round-trips."""
    out = [f"m={dataset.m}"]
    for row in dataset.records:
        out.append(" ".join(str(int(i)) for i in np.flatnonzero(row)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def load_labels(path) -> np.ndarray:
    """One integer class id per line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            raise DataError(f"line {lineno}: empty label")
        try:
            out.append(int(line.strip()))
        except ValueError:
            raise DataError(f"line {lineno}: malformed label {line.strip()!r}") from None
    if not out:
        raise DataError("labels file contains no entries")
    return np.array(out, dtype=np.int64)


def with_labels(dataset: BinaryDataset, labels: np.ndarray) -> BinaryDataset:
    """Attach evaluation labels to an existing dataset."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape[0] != len(dataset):
        raise DataError(
            f"labels length {lab.shape[0]} does not match {len(dataset)} records"
        )
    return replace(dataset, labels=lab)


def subset(dataset: BinaryDataset, indices: np.ndarray) -> BinaryDataset:
    """Dataset restricted to the given record indices (labels follow)."""
    recs = dataset.records[indices]
    lab = dataset.labels[indices] if dataset.labels is not None else None
    return BinaryDataset(m=dataset.m, records=recs, labels=lab)


def sample_batch(dataset: BinaryDataset, q: float, rng: np.random.Generator) -> Batch:
    """Poisson subsample: include each record independently with probability q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"sampling probability must be in [0, 1], got {q}")
    mask = rng.random(len(dataset)) < q
    idx = np.flatnonzero(mask)
    return Batch(indices=idx, records=dataset.records[idx])
