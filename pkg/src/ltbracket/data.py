"""Combined experimental/observational dataset: ingestion, validation, stratification.

A dataset holds one row per unit with columns

    group      'E' (experimental) or 'O' (observational)
    treatment  0/1
    y1         short-term outcome, always observed
    y2         long-term outcome, NaN when unobserved (allowed only for group E)

plus any number of categorical subgroup label columns.  Storage is columnar
(read-only numpy arrays) so that resampling and simulation stay cheap.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import IO, Iterator, Mapping

import numpy as np

from .errors import DataError

GROUPS = ("E", "O")
CELLS = (("E", 0), ("E", 1), ("O", 0), ("O", 1))


@dataclass(frozen=True)
class ObservationRow:
    group: str
    treatment: int
    y1: float
    y2: float | None = None
    subgroup_labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"unknown group {self.group!r}")
        if self.treatment not in (0, 1):
            raise DataError(f"treatment must be 0 or 1, got {self.treatment!r}")
        if not math.isfinite(self.y1):
            raise DataError("y1 must be finite")
        if self.y2 is None:
            if self.group == "O":
                raise DataError("observational row missing long-term outcome")
        elif not math.isfinite(self.y2):
            raise DataError("y2 must be finite when present")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class CombinedDataset:
    """Immutable columnar dataset of experimental and observational units."""

    def __init__(self, group, treatment, y1, y2=None, labels=None, provenance: str = ""):
        group = np.asarray(group, dtype="<U1")
        n = group.shape[0]
        treatment = np.asarray(treatment)
        y1 = np.asarray(y1, dtype=float)
        y2 = np.full(n, np.nan) if y2 is None else np.asarray(y2, dtype=float)
        for name, col in (("treatment", treatment), ("y1", y1), ("y2", y2)):
            if col.shape != (n,):
                raise DataError(f"column {name} has shape {col.shape}, expected ({n},)")
        bad = ~np.isin(group, GROUPS)
        if bad.any():
            raise DataError(f"unknown group token {group[bad][0]!r}")
        if n and not np.isin(treatment, (0, 1)).all():
            raise DataError("treatment must be 0 or 1")
        if not np.isfinite(y1).all():
            raise DataError("y1 must be finite on every row")
        if np.isinf(y2).any():
            raise DataError("y2 must be finite when present")

        self._labels = {}
        for key, col in (labels or {}).items():
            col = np.asarray(col, dtype=str)
            if col.shape != (n,):
                raise DataError(f"label column {key!r} has wrong length")
            self._labels[str(key)] = _frozen(col.copy())
        self.group = _frozen(group.copy())
        self.treatment = _frozen(treatment.astype(np.int8))
        self.y1 = _frozen(y1.copy())
        self.y2 = _frozen(y2.copy())
        self.provenance = provenance
        self._masks: dict[tuple[str, int], np.ndarray] = {}

    @classmethod
    def from_rows(cls, rows, provenance: str = "") -> "CombinedDataset":
        rows = list(rows)
        names: list[str] = []
        for r in rows:
            for k in r.subgroup_labels:
                if k not in names:
                    names.append(k)
        labels = {}
        for k in names:
            missing = [i for i, r in enumerate(rows) if k not in r.subgroup_labels]
            if missing:
                raise DataError(f"label {k!r} missing on row {missing[0]}")
            labels[k] = [str(r.subgroup_labels[k]) for r in rows]
        return cls(
            [r.group for r in rows],
            np.array([r.treatment for r in rows], dtype=np.int8),
            [r.y1 for r in rows],
            [np.nan if r.y2 is None else r.y2 for r in rows],
            labels,
            provenance,
        )

    def __len__(self) -> int:
        return self.group.shape[0]

    def __repr__(self) -> str:
        counts = {f"{g}{w}": int(self.cell(g, w).sum()) for g, w in CELLS}
        return f"CombinedDataset(n={len(self)}, cells={counts}, provenance={self.provenance!r})"

    @property
    def labels(self) -> Mapping[str, np.ndarray]:
        return dict(self._labels)

    @property
    def label_names(self) -> tuple[str, ...]:
        return tuple(self._labels)

    def cell(self, group: str, treatment: int) -> np.ndarray:
        """Boolean mask of rows in cell (group, treatment)."""
        key = (group, int(treatment))
        mask = self._masks.get(key)
        if mask is None:
            mask = _frozen((self.group == group) & (self.treatment == treatment))
            self._masks[key] = mask
        return mask

    def rows(self) -> Iterator[ObservationRow]:
        for i in range(len(self)):
            y2 = self.y2[i]
            yield ObservationRow(
                str(self.group[i]),
                int(self.treatment[i]),
                float(self.y1[i]),
                None if np.isnan(y2) else float(y2),
                {k: str(v[i]) for k, v in self._labels.items()},
            )

    def take(self, index, labels: bool = True) -> "CombinedDataset":
        """New dataset made of the rows at ``index`` (repeats allowed).

        Columns are already validated, so the copy skips the constructor checks.
        ``labels=False`` drops subgroup labels, which resampling loops never need.
        """
        index = np.asarray(index)
        new = object.__new__(CombinedDataset)
        new.group = _frozen(self.group[index])
        new.treatment = _frozen(self.treatment[index])
        new.y1 = _frozen(self.y1[index])
        new.y2 = _frozen(self.y2[index])
        new._labels = {k: _frozen(v[index]) for k, v in self._labels.items()} if labels else {}
        new.provenance = self.provenance
        new._masks = {}
        return new

    def replace(self, **columns) -> "CombinedDataset":
        """Copy with some of group/treatment/y1/y2/labels/provenance swapped out."""
        kw = dict(
            group=self.group,
            treatment=self.treatment,
            y1=self.y1,
            y2=self.y2,
            labels=self._labels,
            provenance=self.provenance,
        )
        unknown = set(columns) - set(kw)
        if unknown:
            raise TypeError(f"unknown columns {sorted(unknown)}")
        kw.update(columns)
        return CombinedDataset(**kw)

    def equals(self, other: "CombinedDataset") -> bool:
        """Row-for-row equality (NaN y2 compare equal)."""
        if len(self) != len(other) or self.label_names != other.label_names:
            return False
        return (
            np.array_equal(self.group, other.group)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.y1, other.y1)
            and np.array_equal(self.y2, other.y2, equal_nan=True)
            and all(np.array_equal(self._labels[k], other._labels[k]) for k in self._labels)
        )

    def has_experimental_y2(self) -> bool:
        e = self.group == "E"
        return bool(e.any()) and not np.isnan(self.y2[e]).any()


@dataclass(frozen=True)
class Schema:
    """Column names and group token aliases used by :func:`load_csv`."""

    group: str = "g"
    treatment: str = "w"
    y1: str = "y1"
    y2: str = "y2"
    group_aliases: Mapping[str, str] = field(
        default_factory=lambda: {"e": "E", "o": "O"}
    )

    def parse_group(self, token: str) -> str:
        g = self.group_aliases.get(token.strip().lower())
        if g not in GROUPS:
            raise DataError(f"unknown group token {token!r}")
        return g


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8-sig"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline=""), False


def _parse_float(token: str, what: str, line: int) -> float:
    try:
        x = float(token)
    except ValueError:
        raise DataError(f"line {line}: cannot parse {what} value {token!r}") from None
    if not math.isfinite(x):
        raise DataError(f"line {line}: {what} must be finite, got {token!r}")
    return x


def load_csv(source, schema: Schema | None = None, provenance: str | None = None) -> CombinedDataset:
    """Read a dataset from a UTF-8 CSV file, path, or byte string.

    Empty ``y2`` cells become missing values.  Every column other than the four
    schema columns is kept as a categorical subgroup label.
    """
    schema = schema or Schema()
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("line 1: empty file, expected a header") from None
        pos = {name: i for i, name in enumerate(header)}
        for col in (schema.group, schema.treatment, schema.y1):
            if col not in pos:
                raise DataError(f"line 1: required column {col!r} not in header")
        core = {schema.group, schema.treatment, schema.y1, schema.y2}
        label_cols = [h for h in header if h not in core]

        group, treat, y1, y2 = [], [], [], []
        labels: dict[str, list[str]] = {k: [] for k in label_cols}
        for fields in reader:
            line = reader.line_num
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise DataError(
                    f"line {line}: expected {len(header)} fields, got {len(fields)}"
                )
            try:
                g = schema.parse_group(fields[pos[schema.group]])
            except DataError as exc:
                raise DataError(f"line {line}: {exc}") from None
            w = _parse_float(fields[pos[schema.treatment]], "treatment", line)
            if w not in (0.0, 1.0):
                raise DataError(f"line {line}: treatment must be 0 or 1")
            v1 = _parse_float(fields[pos[schema.y1]], "y1", line)
            raw2 = fields[pos[schema.y2]].strip() if schema.y2 in pos else ""
            if raw2:
                v2 = _parse_float(raw2, "y2", line)
            elif g == "O":
                raise DataError(f"line {line}: observational row missing long-term outcome")
            else:
                v2 = math.nan
            group.append(g)
            treat.append(int(w))
            y1.append(v1)
            y2.append(v2)
            for k in label_cols:
                labels[k].append(fields[pos[k]].strip())
    except csv.Error as exc:
        raise DataError(f"line {reader.line_num}: malformed CSV ({exc})") from None
    finally:
        if owned:
            fh.close()
        else:
            try:
                fh.detach()
            except (AttributeError, io.UnsupportedOperation, ValueError):
                pass

    if provenance is None:
        provenance = str(source) if isinstance(source, (str, os.PathLike)) else "csv"
    return CombinedDataset(
        group, np.array(treat, dtype=np.int8), y1, y2, labels, provenance
    )


def to_csv(d: CombinedDataset, schema: Schema | None = None) -> str:
    """Serialize with the schema's column names; floats are written round-trip exact."""
    schema = schema or Schema()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([schema.group, schema.treatment, schema.y1, schema.y2, *d.label_names])
    for r in d.rows():
        writer.writerow(
            [
                r.group,
                r.treatment,
                repr(r.y1),
                "" if r.y2 is None else repr(r.y2),
                *(r.subgroup_labels[k] for k in d.label_names),
            ]
        )
    return buf.getvalue()


@dataclass(frozen=True)
class ValidationReport:
    cell_counts: Mapping[tuple[str, int], int]
    missing_y2_in_O: int
    overlap_ok: bool
    messages: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "cell_counts": {f"{g},{w}": n for (g, w), n in self.cell_counts.items()},
            "missing_y2_in_O": self.missing_y2_in_O,
            "overlap_ok": self.overlap_ok,
            "messages": list(self.messages),
        }


def validate(d: CombinedDataset) -> ValidationReport:
    """Cell counts, missing long-term outcomes in O, and the sample overlap check."""
    counts = {(g, w): int(d.cell(g, w).sum()) for g, w in CELLS}
    missing = int(np.isnan(d.y2[d.group == "O"]).sum())
    messages = []
    for (g, w), n in counts.items():
        if n == 0:
            messages.append(f"cell (G={g}, W={w}) is empty")
    if missing:
        messages.append(f"{missing} observational rows lack y2")
    control = d.y1[d.cell("O", 0)]
    if control.size and np.unique(control).size < 2:
        messages.append("fewer than 2 distinct y1 values in (G=O, W=0); control regression ill-posed")
    overlap_ok = all(n >= 1 for n in counts.values()) and missing == 0
    return ValidationReport(counts, missing, overlap_ok, tuple(messages))


def parse_predicate(text: str | None) -> dict[str, str]:
    """Parse ``'k=v,k2=v2'`` into a predicate mapping; empty text means no filter."""
    if not text or not text.strip():
        return {}
    out = {}
    for term in text.split(","):
        key, sep, value = term.partition("=")
        if not sep or not key.strip():
            raise DataError(f"malformed subgroup term {term!r}, expected key=value")
        out[key.strip()] = value.strip()
    return out


def filter_subgroup(d: CombinedDataset, predicate: Mapping[str, str]) -> CombinedDataset:
    """Rows satisfying every ``label == value`` term, in original order."""
    keep = np.ones(len(d), dtype=bool)
    for key, value in predicate.items():
        if key not in d.label_names:
            raise DataError(f"unknown subgroup label {key!r}")
        keep &= d.labels[key] == str(value)
    if keep.all():
        return d
    return d.take(np.flatnonzero(keep))
