"""Right-censored survival datasets and their CSV representation."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Raised when survival data cannot be parsed or fails validation."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SurvivalDataset:
    """Observed times, event indicators and covariates for ``n`` subjects.

    Parameters
    ----------
    ids : sequence of str
        Unique subject identifiers.
    time : array_like, shape (n,)
        Observed follow-up time ``min(T*, C)``.
    event : array_like, shape (n,)
        1 if the event was observed, 0 if right-censored.
    covariates : array_like, shape (n, d)
        Covariate matrix, ``d >= 1``.
    covariate_names : sequence of str, optional
        Column names; defaults to ``x1 ... xd``.
    """

    ids: tuple
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = field(default=())

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        time = np.asarray(self.time, dtype=float).ravel()
        event = np.asarray(self.event).ravel()
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None]
        n = len(ids)
        if time.shape != (n,) or event.shape != (n,) or cov.shape[0] != n:
            raise DataError("ids, time, event and covariates must have the same length")
        if cov.ndim != 2 or cov.shape[1] < 1:
            raise DataError("covariates must be an (n, d) matrix with d >= 1")
        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise DataError("observed times must be finite and non-negative")
        if not np.all(np.isin(event, (0, 1))):
            raise DataError("event indicators must be 0 or 1")
        if not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")
        if len(set(ids)) != n:
            raise DataError("subject ids must be unique")
        names = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise DataError("covariate_names does not match covariate dimension")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "time", _frozen(time))
        object.__setattr__(self, "event", _frozen(event.astype(np.int64)))
        object.__setattr__(self, "covariates", _frozen(cov))
        object.__setattr__(self, "covariate_names", names)

    @classmethod
    def from_arrays(cls, time, event, covariates=None, ids=None, covariate_names=()):
        """Build a dataset, filling in default ids and a dummy covariate if needed."""
        time = np.asarray(time, dtype=float)
        n = time.shape[0]
        if covariates is None:
            covariates = np.zeros((n, 1))
        if ids is None:
            ids = [str(i) for i in range(n)]
        return cls(tuple(ids), time, event, covariates, tuple(covariate_names))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def subset(self, index) -> "SurvivalDataset":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return SurvivalDataset(
            tuple(self.ids[i] for i in index),
            self.time[index],
            self.event[index],
            self.covariates[index],
            self.covariate_names,
        )

    def to_csv(self, path) -> None:
        """Write ``id,time,event,<covariates...>`` with a header row."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "time", "event", *self.covariate_names])
            for i in range(self.n):
                w.writerow([self.ids[i], repr(float(self.time[i])), int(self.event[i]),
                            *(repr(float(v)) for v in self.covariates[i])])


DEFAULT_SCHEMA = {"id": "id", "time": "time", "event": "event"}


def load_dataset(path, schema: Mapping | None = None) -> SurvivalDataset:
    """Read a survival dataset from a CSV file with a header row.

    ``schema`` maps roles to column names: ``time``, ``event``, ``covariates``
    (list) and optionally ``id``. Without an explicit covariate list every
    column not used for another role is a covariate. Row numbers in error
    messages are 1-based data rows (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)

    def col(name, role):
        if name not in header:
            raise DataError(f"{path}: column {name!r} for role {role!r} not found")
        return header.index(name)

    t_col = col(schema["time"], "time")
    e_col = col(schema["event"], "event")
    id_col = header.index(schema["id"]) if schema.get("id") in header else None
    used = {t_col, e_col} | ({id_col} if id_col is not None else set())
    cov_names: Sequence[str] = schema.get("covariates") or [h for k, h in enumerate(header) if k not in used]
    if not cov_names:
        raise DataError(f"{path}: no covariate columns")
    c_cols = [col(c, "covariate") for c in cov_names]

    missing, bad = [], []
    times, events, covs, ids = [], [], [], []
    for r, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        cells = [row[k].strip() for k in (t_col, e_col, *c_cols)]
        if any(c == "" for c in cells):
            missing.append(r)
            continue
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            raise DataError(f"{path}: unparseable numeric cell in row {r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}: non-finite value in row {r}")
        if vals[1] not in (0.0, 1.0):
            bad.append(r)
            continue
        if vals[0] < 0:
            raise DataError(f"{path}: negative time in row {r}")
        times.append(vals[0])
        events.append(int(vals[1]))
        covs.append(vals[2:])
        ids.append(row[id_col].strip() if id_col is not None else str(r))
    if missing:
        raise DataError(f"{path}: missing values in rows {missing}")
    if bad:
        raise DataError(f"{path}: event value not in {{0,1}} in rows {bad}")
    if not times:
        raise DataError(f"{path}: no data rows")
    dup = sorted(k for k, c in Counter(ids).items() if c > 1)
    if dup:
        raise DataError(f"{path}: duplicate ids {dup[:10]}")
    return SurvivalDataset(tuple(ids), np.array(times), np.array(events), np.array(covs), tuple(cov_names))
