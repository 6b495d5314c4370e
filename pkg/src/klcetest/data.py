"""Audit datasets: (features, label, score) rows plus CSV ingestion."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterator, Sequence

import numpy as np


class AuditError(ValueError):
    """Base class for dataset problems the CLI reports as usage errors."""


class SchemaError(AuditError):
    """A required column is missing from the input."""


class ValidationError(AuditError):
    """A record violates the label/score/feature constraints."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class SizeError(AuditError):
    """Too few records for the pairwise statistics."""


@dataclass(frozen=True)
class AuditRecord:
    x: tuple[float, ...]
    y: int
    fhat: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AuditDataset:
    """Immutable column-oriented test sample.

    Attributes:
        x: (n, d_x) audit features.
        y: (n,) labels in {0, 1}, stored as float64.
        fhat: (n,) model scores in [0, 1].
        feature_names: names of the d_x feature columns.
    """

    x: np.ndarray
    y: np.ndarray
    fhat: np.ndarray
    feature_names: tuple[str, ...]

    def __init__(self, x, y, fhat, feature_names: Sequence[str] | None = None,
                 *, min_size: int = 2):
        x = np.array(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        y = np.array(y, dtype=np.float64).ravel()
        fhat = np.array(fhat, dtype=np.float64).ravel()
        if x.ndim != 2 or x.shape[0] != y.shape[0] or fhat.shape[0] != y.shape[0]:
            raise ValidationError(
                f"shape mismatch: x {x.shape}, y {y.shape}, fhat {fhat.shape}")
        if feature_names is None:
            feature_names = [f"x{i + 1}" for i in range(x.shape[1])]
        feature_names = tuple(str(f) for f in feature_names)
        if len(feature_names) != x.shape[1]:
            raise ValidationError(
                f"{len(feature_names)} feature names for {x.shape[1]} columns")
        if y.shape[0] < min_size:
            raise SizeError(f"need at least {min_size} records, got {y.shape[0]}")
        for arr, label in ((fhat, "score"), (y, "label")):
            if not np.all(np.isfinite(arr)):
                row = int(np.flatnonzero(~np.isfinite(arr))[0]) + 1
                raise ValidationError(f"non-finite {label} in row {row}", row)
        bad = np.flatnonzero((fhat < 0.0) | (fhat > 1.0))
        if bad.size:
            row = int(bad[0]) + 1
            raise ValidationError(
                f"score {fhat[bad[0]]!r} outside [0, 1] in row {row}", row)
        bad = np.flatnonzero((y != 0.0) & (y != 1.0))
        if bad.size:
            row = int(bad[0]) + 1
            raise ValidationError(f"label {y[bad[0]]!r} not in {{0, 1}} in row {row}", row)
        bad_rows = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
        if bad_rows.size:
            row = int(bad_rows[0]) + 1
            raise ValidationError(f"non-finite feature in row {row}", row)
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "fhat", _readonly(fhat))
        object.__setattr__(self, "feature_names", feature_names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d_x(self) -> int:
        return self.x.shape[1]

    @property
    def residuals(self) -> np.ndarray:
        """e_i = y_i - fhat_i, always in [-1, 1]."""
        return self.y - self.fhat

    @property
    def records(self) -> Iterator[AuditRecord]:
        for xi, yi, fi in zip(self.x, self.y, self.fhat):
            yield AuditRecord(tuple(float(v) for v in xi), int(yi), float(fi))

    @classmethod
    def from_records(cls, records: Sequence[AuditRecord],
                     feature_names: Sequence[str] | None = None) -> "AuditDataset":
        records = list(records)
        if not records:
            raise SizeError("need at least 2 records, got 0")
        widths = {len(r.x) for r in records}
        if len(widths) != 1:
            raise ValidationError(f"inconsistent feature dimensions {sorted(widths)}")
        return cls([r.x for r in records], [r.y for r in records],
                   [r.fhat for r in records], feature_names)

    def with_scores(self, fhat) -> "AuditDataset":
        """Same labels and features, new scores."""
        return AuditDataset(self.x, self.y, fhat, self.feature_names)

    def with_features(self, x) -> "AuditDataset":
        return AuditDataset(x, self.y, self.fhat, self.feature_names)

    def equals(self, other: "AuditDataset") -> bool:
        return (self.feature_names == other.feature_names
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y)
                and np.array_equal(self.fhat, other.fhat))


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, io.TextIOBase) or hasattr(source, "encoding"):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(
            f"cannot parse {column}={text!r} as a number in row {row}", row) from None


def load_dataset(source, label: str = "y", score: str = "p",
                 features: Sequence[str] | None = None) -> AuditDataset:
    """Read a header-row CSV into an :class:`AuditDataset`.

    Args:
        source: path, raw bytes, or a text/binary stream.
        label: name of the 0/1 label column.
        score: name of the predicted-probability column.
        features: feature columns; defaults to every other column in file order.

    Raises:
        SchemaError: a named column is absent or no feature columns remain.
        ValidationError: a value is unparsable or out of range (1-based data row).
        SizeError: fewer than two data rows.
    """
    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty input: no header row") from None
        for col in (label, score):
            if col not in header:
                raise SchemaError(f"missing column {col!r}")
        if features is None:
            features = [h for h in header if h not in (label, score)]
        else:
            features = list(features)
            for col in features:
                if col not in header:
                    raise SchemaError(f"missing column {col!r}")
        if not features:
            raise SchemaError("no feature columns")
        li, si = header.index(label), header.index(score)
        fi = [header.index(f) for f in features]
        xs, ys, ps = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"row {row_no} has {len(row)} fields, expected {len(header)}", row_no)
            y = _parse_float(row[li], label, row_no)
            p = _parse_float(row[si], score, row_no)
            if y not in (0.0, 1.0):
                raise ValidationError(f"label {row[li]!r} not in {{0, 1}} in row {row_no}",
                                      row_no)
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"score {row[si]!r} outside [0, 1] in row {row_no}",
                                      row_no)
            x = [_parse_float(row[i], header[i], row_no) for i in fi]
            if not all(math.isfinite(v) for v in x):
                raise ValidationError(f"non-finite feature in row {row_no}", row_no)
            xs.append(x)
            ys.append(y)
            ps.append(p)
    finally:
        if owned:
            stream.close()
    if len(ys) < 2:
        raise SizeError(f"need at least 2 records, got {len(ys)}")
    return AuditDataset(np.array(xs, dtype=np.float64).reshape(len(ys), len(fi)),
                        ys, ps, features)


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset(d: AuditDataset, dest, label: str = "y", score: str = "p") -> None:
    """Write ``d`` as CSV; floats use 17 significant digits so values round-trip."""
    owned = isinstance(dest, (str, os.PathLike))
    stream = open(dest, "w", newline="", encoding="utf-8") if owned else dest
    try:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow([label, score, *d.feature_names])
        for xi, yi, pi in zip(d.x, d.y, d.fhat):
            writer.writerow([int(yi), format_float(pi), *(format_float(v) for v in xi)])
    finally:
        if owned:
            stream.close()


def dataset_to_csv(d: AuditDataset, label: str = "y", score: str = "p") -> str:
    buf = io.StringIO()
    write_dataset(d, buf, label, score)
    return buf.getvalue()


def standardize_features(d: AuditDataset) -> AuditDataset:
    """Center each feature and scale by its sample (n-1) standard deviation.

    Zero-variance columns become all zeros instead of raising.
    """
    x = d.x
    mean = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    centered = x - mean
    scaled = np.zeros_like(centered)
    # all-equal columns can still produce sd ~ 1e-17 from rounding in the mean
    live = (np.ptp(x, axis=0) > 0) & (sd > 0)
    scaled[:, live] = centered[:, live] / sd[live]
    return d.with_features(scaled)
