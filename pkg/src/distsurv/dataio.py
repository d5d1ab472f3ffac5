"""Long-format dataset model, CSV ingestion, and case-study operationalization.

Datasets are per-subject time series of a continuous outcome on an integer
time grid starting at 1.  Storage is a dense subjects x times matrix with
NaN for missing; the record view (subject, time, value) is derived from it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple

import numpy as np

from .errors import (
    DuplicateObservation,
    EmptyFile,
    MalformedRow,
    UnknownColumn,
)

_MISSING_MARKERS = {"", "na", "nan"}


class Record(NamedTuple):
    subject_id: str
    time_index: int
    value: float


@dataclass(frozen=True)
class DatasetMeta:
    units: str | None = None
    cutpoint_hint: float | None = None
    n_missing_input: int = 0
    n_dropped_late_entry: int = 0
    n_dropped_baseline: int = 0
    n_trimmed_records: int = 0
    late_entry_allowed: bool = False


@dataclass(frozen=True)
class SchemaOptions:
    """Column locations, by header name or 0-based position."""

    subject: str | int = "subject"
    time: str | int = "time"
    value: str | int = "value"


@dataclass(frozen=True, eq=False)
class LongDataset:
    """Per-subject time series with missingness.

    values has one row per subject and one column per time index 1..n_times;
    NaN marks a missing observation.  (subject, time) pairs are unique by
    construction.
    """

    subject_ids: tuple[str, ...]
    values: np.ndarray
    meta: DatasetMeta = field(default_factory=DatasetMeta)

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.subject_ids):
            raise ValueError("values must be (n_subjects, n_times)")
        if len(set(self.subject_ids)) != len(self.subject_ids):
            raise ValueError("subject ids must be unique")

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def records(self) -> list[Record]:
        out = []
        for i, sid in enumerate(self.subject_ids):
            row = self.values[i]
            for t in np.flatnonzero(~np.isnan(row)):
                out.append(Record(sid, int(t) + 1, float(row[t])))
        return out

    @classmethod
    def from_records(cls, records: Iterable[tuple], meta: DatasetMeta | None = None
                     ) -> "LongDataset":
        recs = [Record(str(s), int(t), float(v)) for s, t, v in records]
        if not recs:
            raise EmptyFile("no records")
        if min(r.time_index for r in recs) < 1:
            raise ValueError("time indices must be >= 1")
        subjects = list(dict.fromkeys(r.subject_id for r in recs))
        idx = {s: i for i, s in enumerate(subjects)}
        n_times = max(r.time_index for r in recs)
        mat = np.full((len(subjects), n_times), np.nan)
        for r in recs:
            i, j = idx[r.subject_id], r.time_index - 1
            if not np.isnan(mat[i, j]):
                raise DuplicateObservation(
                    f"duplicate observation ({r.subject_id}, {r.time_index})"
                )
            mat[i, j] = r.value
        return cls(tuple(subjects), mat, meta or DatasetMeta())

    @classmethod
    def from_matrix(cls, values: np.ndarray, subject_ids: Iterable[str] | None = None,
                    meta: DatasetMeta | None = None) -> "LongDataset":
        values = np.asarray(values, dtype=float)
        if subject_ids is None:
            width = len(str(max(values.shape[0], 1)))
            subject_ids = tuple(f"s{i + 1:0{width}d}" for i in range(values.shape[0]))
        return cls(tuple(subject_ids), values, meta or DatasetMeta())


def _resolve_column(header: list[str], spec: str | int, role: str) -> int:
    if isinstance(spec, int):
        if not 0 <= spec < len(header):
            raise UnknownColumn(f"{role} column position {spec} out of range")
        return spec
    try:
        return header.index(spec)
    except ValueError:
        raise UnknownColumn(
            f"{role} column {spec!r} not found in header {header}"
        ) from None


def load_long_csv(path, schema: SchemaOptions | None = None) -> LongDataset:
    """Load a long-format CSV with columns subject, time, value.

    Leading lines starting with '#' are skipped (output files from this
    package embed their config that way).  Empty values and the markers
    NA / NaN (case-insensitive) count as missing and produce no record.
    Non-numeric values, non-integer or non-positive times, and duplicate
    (subject, time) pairs are errors naming the offending row.
    """
    schema = schema or SchemaOptions()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        lineno = 0
        for row in reader:
            lineno += 1
            if row and row[0].lstrip().startswith("#"):
                continue
            header = [c.strip() for c in row]
            break
        if header is None:
            raise EmptyFile(f"{path}: no header row")
        i_s = _resolve_column(header, schema.subject, "subject")
        i_t = _resolve_column(header, schema.time, "time")
        i_v = _resolve_column(header, schema.value, "value")

        records: list[Record] = []
        seen: set[tuple[str, int]] = set()
        n_missing = 0
        for row in reader:
            lineno += 1
            if not row or (row[0].lstrip().startswith("#")):
                continue
            if len(row) <= max(i_s, i_t, i_v):
                raise MalformedRow(f"row {lineno}: expected at least "
                                   f"{max(i_s, i_t, i_v) + 1} fields, got {len(row)}")
            subject = row[i_s].strip()
            if not subject:
                raise MalformedRow(f"row {lineno}: empty subject id")
            try:
                time_index = int(row[i_t].strip())
            except ValueError:
                raise MalformedRow(
                    f"row {lineno}: time {row[i_t]!r} is not an integer"
                ) from None
            if time_index < 1:
                raise MalformedRow(f"row {lineno}: time index {time_index} < 1")
            raw = row[i_v].strip()
            if raw.casefold() in _MISSING_MARKERS:
                n_missing += 1
                continue
            try:
                value = float(raw)
            except ValueError:
                raise MalformedRow(
                    f"row {lineno}: value {raw!r} is not numeric"
                ) from None
            if not np.isfinite(value):
                raise MalformedRow(f"row {lineno}: value {raw!r} is not finite")
            key = (subject, time_index)
            if key in seen:
                raise DuplicateObservation(
                    f"row {lineno}: duplicate observation {key}"
                )
            seen.add(key)
            records.append(Record(subject, time_index, value))

    if not records:
        raise EmptyFile(f"{path}: no data records")
    return LongDataset.from_records(records, DatasetMeta(n_missing_input=n_missing))


def write_long_csv(data: LongDataset, path, sig_digits: int = 6) -> None:
    """Write a dataset back out in the subject,time,value schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "time", "value"])
        for rec in data.records:
            writer.writerow([rec.subject_id, rec.time_index,
                             format_sig(rec.value, sig_digits)])


def format_sig(x: float, sig_digits: int = 6) -> str:
    return f"{x:.{sig_digits}g}"


def operationalize(data: LongDataset, cutpoint: float,
                   baseline_exclusion: bool = False,
                   allow_late_entry: bool = False) -> LongDataset:
    """Apply the case-study censoring and exclusion rules.

    Each subject keeps only the maximal uninterrupted prefix of their
    observation times (censoring at the first gap; no interval censoring).
    Subjects whose first observation is after time 1 are dropped unless
    allow_late_entry, in which case their prefix starts at entry.  With
    baseline_exclusion, subjects whose baseline (first retained) value
    exceeds the cutpoint are dropped.  Drop and trim counts land in the
    returned dataset's meta.  The operation is idempotent.
    """
    obs = ~np.isnan(data.values)
    keep_rows = []
    trimmed = np.full_like(data.values, np.nan)
    n_late = n_baseline = n_trim = 0
    for i in range(data.n_subjects):
        times = np.flatnonzero(obs[i])
        if times.size == 0:
            continue
        entry = int(times[0])
        if entry != 0 and not allow_late_entry:
            n_late += 1
            continue
        run = entry
        while run < data.n_times and obs[i, run]:
            run += 1
        n_trim += int(times.size - (run - entry))
        if baseline_exclusion and data.values[i, entry] > cutpoint:
            n_baseline += 1
            continue
        trimmed[i, entry:run] = data.values[i, entry:run]
        keep_rows.append(i)

    meta = replace(
        data.meta,
        cutpoint_hint=cutpoint,
        n_dropped_late_entry=data.meta.n_dropped_late_entry + n_late,
        n_dropped_baseline=data.meta.n_dropped_baseline + n_baseline,
        n_trimmed_records=data.meta.n_trimmed_records + n_trim,
        late_entry_allowed=allow_late_entry,
    )
    keep = np.array(keep_rows, dtype=int)
    mat = trimmed[keep] if keep.size else np.empty((0, data.n_times))
    max_t = int(np.max(np.flatnonzero(np.any(~np.isnan(mat), axis=0)))) + 1 \
        if mat.size and np.any(~np.isnan(mat)) else 0
    return LongDataset(
        tuple(data.subject_ids[i] for i in keep_rows),
        mat[:, :max_t] if max_t else mat[:, :0],
        meta,
    )
