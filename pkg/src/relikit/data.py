"""Long-format binary ratings: loading, validation and design matrices.

A :class:`RatingsTable` holds one row per observed (subject, rater, time)
cell. External ids are strings; internally every factor is mapped to a dense
0-based integer index in order of first appearance, so runs are
deterministic for a given file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DuplicateCell, InputError, MissingColumn, NonBinaryOutcome

DEFAULT_SCHEMA = {"subject": "subject", "rater": "rater", "time": "time", "y": "y"}


def _dense_index(ids):
    levels = {}
    index = np.empty(len(ids), dtype=np.intp)
    for n, key in enumerate(ids):
        index[n] = levels.setdefault(key, len(levels))
    return tuple(levels), index


@dataclass(frozen=True)
class RatingsTable:
    """Immutable three-level binary ratings table.

    Attributes
    ----------
    subject, rater, time : ndarray of int
        Dense 0-based indices, one entry per record.
    y : ndarray of int8
        Binary outcomes.
    covariates : ndarray, shape (n_obs, p)
        Extra per-record covariates (``p`` may be zero).
    subject_ids, rater_ids, time_ids : tuple of str
        External ids; ``subject_ids[i]`` is the id of dense index ``i``.
    covariate_names : tuple of str
    """

    subject: np.ndarray
    rater: np.ndarray
    time: np.ndarray
    y: np.ndarray
    covariates: np.ndarray
    subject_ids: tuple
    rater_ids: tuple
    time_ids: tuple
    covariate_names: tuple = ()

    def __post_init__(self):
        n = len(self.y)
        for name in ("subject", "rater", "time"):
            arr = getattr(self, name)
            if len(arr) != n:
                raise InputError(f"{name} index has length {len(arr)}, expected {n}")
        if self.covariates.shape != (n, len(self.covariate_names)):
            raise InputError("covariate matrix does not match covariate names")
        bad = np.flatnonzero((self.y != 0) & (self.y != 1))
        if bad.size:
            raise NonBinaryOutcome(int(bad[0]) + 1, int(self.y[bad[0]]))
        if self.I < 2:
            raise InputError("at least two subjects are required")
        if self.J < 1 or self.K < 1:
            raise InputError("at least one rater and one time point are required")
        keys = (self.subject * self.J + self.rater) * self.K + self.time
        uniq, first, counts = np.unique(keys, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = uniq[counts > 1][0]
            i, rem = divmod(int(dup), self.J * self.K)
            j, k = divmod(rem, self.K)
            raise DuplicateCell(i + 1, j + 1, k + 1)
        for arr in (self.subject, self.rater, self.time, self.y, self.covariates):
            arr.setflags(write=False)

    @classmethod
    def from_records(cls, subjects, raters, times, y, covariates=None, covariate_names=()):
        """Build a table from parallel sequences of ids and outcomes."""
        subject_ids, subject = _dense_index([str(s) for s in subjects])
        rater_ids, rater = _dense_index([str(r) for r in raters])
        time_ids, time = _dense_index([str(t) for t in times])
        y = np.asarray(y)
        if y.dtype.kind == "f" and np.any(y != np.round(y)):
            bad = int(np.flatnonzero(y != np.round(y))[0])
            raise NonBinaryOutcome(bad + 1, float(y[bad]))
        y = y.astype(np.int64)
        bad = np.flatnonzero((y != 0) & (y != 1))
        if bad.size:
            raise NonBinaryOutcome(int(bad[0]) + 1, int(y[bad[0]]))
        if covariates is None:
            covariates = np.zeros((len(y), len(covariate_names)))
        covariates = np.asarray(covariates, dtype=float).reshape(len(y), -1)
        return cls(
            subject=subject,
            rater=rater,
            time=time,
            y=y.astype(np.int8),
            covariates=covariates,
            subject_ids=subject_ids,
            rater_ids=rater_ids,
            time_ids=time_ids,
            covariate_names=tuple(covariate_names),
        )

    @classmethod
    def from_array(cls, Y, mask=None):
        """Build a complete (or masked) table from an ``(I, J, K)`` 0/1 array.

        Ids are the 1-based positions rendered as strings.
        """
        Y = np.asarray(Y)
        I, J, K = Y.shape
        i, j, k = np.meshgrid(np.arange(I), np.arange(J), np.arange(K), indexing="ij")
        keep = np.ones(Y.shape, bool) if mask is None else np.asarray(mask, bool)
        ids = [str(n + 1) for n in range(max(I, J, K))]
        return cls(
            subject=i[keep].astype(np.intp),
            rater=j[keep].astype(np.intp),
            time=k[keep].astype(np.intp),
            y=Y[keep].astype(np.int8),
            covariates=np.zeros((int(keep.sum()), 0)),
            subject_ids=tuple(ids[:I]),
            rater_ids=tuple(ids[:J]),
            time_ids=tuple(ids[:K]),
        )

    @property
    def I(self):
        return len(self.subject_ids)

    @property
    def J(self):
        return len(self.rater_ids)

    @property
    def K(self):
        return len(self.time_ids)

    @property
    def n_obs(self):
        return len(self.y)

    @property
    def p(self):
        return self.covariates.shape[1]

    def to_array(self, fill=np.nan):
        """Return an ``(I, J, K)`` float array with ``fill`` in missing cells."""
        out = np.full((self.I, self.J, self.K), fill, dtype=float)
        out[self.subject, self.rater, self.time] = self.y
        return out

    def records(self):
        """Yield ``(subject_id, rater_id, time_id, y, covariates)`` tuples in row order."""
        for n in range(self.n_obs):
            yield (
                self.subject_ids[self.subject[n]],
                self.rater_ids[self.rater[n]],
                self.time_ids[self.time[n]],
                int(self.y[n]),
                tuple(float(c) for c in self.covariates[n]),
            )


@dataclass(frozen=True)
class DesignSummary:
    I: int
    J: int
    K: int
    n_obs: int
    is_complete_block: bool
    missing_cells: list = field(default_factory=list)


def load_csv(path, schema: Mapping[str, str] | None = None, covariates: Sequence[str] | None = None):
    """Read a long-format CSV file into a :class:`RatingsTable`.

    Parameters
    ----------
    path : path-like
        Comma-separated UTF-8 file with a header row.
    schema : mapping, optional
        Maps the logical names ``subject``, ``rater``, ``time`` and ``y`` to
        column names in the file. Missing keys fall back to the defaults.
    covariates : sequence of str, optional
        Covariate columns to keep. By default every unmapped column is a
        covariate and must parse as a number.
    """
    cols = dict(DEFAULT_SCHEMA)
    cols.update(schema or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    for logical in ("subject", "rater", "time", "y"):
        if cols[logical] not in header:
            raise MissingColumn(cols[logical])
    pos = {name: header.index(name) for name in header}
    mapped = {cols[k] for k in ("subject", "rater", "time", "y")}
    if covariates is None:
        covariates = [h for h in header if h not in mapped]
    for name in covariates:
        if name not in pos:
            raise MissingColumn(name)

    subjects, raters, times, ys = [], [], [], []
    X = np.zeros((len(rows), len(covariates)))
    for n, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise InputError(f"data row {n} has {len(row)} fields, expected {len(header)}")
        raw = row[pos[cols["y"]]].strip()
        try:
            value = float(raw)
        except ValueError:
            raise NonBinaryOutcome(n, raw) from None
        if value not in (0.0, 1.0):
            raise NonBinaryOutcome(n, raw)
        ys.append(int(value))
        subjects.append(row[pos[cols["subject"]]].strip())
        raters.append(row[pos[cols["rater"]]].strip())
        times.append(row[pos[cols["time"]]].strip())
        for c, name in enumerate(covariates):
            try:
                X[n - 1, c] = float(row[pos[name]])
            except ValueError:
                raise InputError(f"data row {n}: covariate {name!r} is not numeric") from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    return RatingsTable.from_records(subjects, raters, times, ys, X, covariates)


def write_csv(table: RatingsTable, path, schema: Mapping[str, str] | None = None):
    """Write ``table`` in the format read by :func:`load_csv`."""
    cols = dict(DEFAULT_SCHEMA)
    cols.update(schema or {})
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([cols["subject"], cols["rater"], cols["time"], cols["y"], *table.covariate_names])
        for s, r, t, y, x in table.records():
            writer.writerow([s, r, t, y, *(repr(v) for v in x)])
    return path


def validate(table: RatingsTable) -> DesignSummary:
    """Report the design shape; incomplete designs are described, never rejected.

    ``missing_cells`` holds 1-based ``(i, j, k)`` tuples in lexicographic order.
    """
    observed = np.zeros((table.I, table.J, table.K), dtype=bool)
    observed[table.subject, table.rater, table.time] = True
    missing = [tuple(int(v) + 1 for v in cell) for cell in np.argwhere(~observed)]
    return DesignSummary(
        I=table.I,
        J=table.J,
        K=table.K,
        n_obs=table.n_obs,
        is_complete_block=table.n_obs == table.I * table.J * table.K,
        missing_cells=missing,
    )


def design_matrix(table: RatingsTable, intercept: bool = True, time_coding: str = "none"):
    """Fixed-effects design matrix.

    Columns are, in order: an all-ones intercept (if requested), ``K - 1``
    time indicators for times 2..K when ``time_coding="reference"``, then the
    table's covariates.
    """
    if time_coding not in ("none", "reference"):
        raise ValueError(f"unknown time_coding {time_coding!r}")
    blocks = []
    if intercept:
        blocks.append(np.ones((table.n_obs, 1)))
    if time_coding == "reference" and table.K > 1:
        blocks.append((table.time[:, None] == np.arange(1, table.K)[None, :]).astype(float))
    blocks.append(table.covariates)
    return np.hstack(blocks) if blocks else np.zeros((table.n_obs, 0))


def design_column_names(table: RatingsTable, intercept: bool = True, time_coding: str = "none"):
    names = ["(intercept)"] if intercept else []
    if time_coding == "reference":
        names += [f"time[{t}]" for t in table.time_ids[1:]]
    return names + list(table.covariate_names)


