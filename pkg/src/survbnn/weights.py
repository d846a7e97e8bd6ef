"""Censoring-weight providers for IPCW estimators.

A weight ``W_i(u) = 1 / G(u- | stratum of i)`` is attached to every subject at
every distinct event time, where ``G`` is the reverse Kaplan-Meier estimate of
the censoring survival function. Subjects sharing a stratum share a weight
row, so tables are stored as a stratum index plus one row per stratum.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DataError, SurvivalDataset
from .estimators import reverse_kaplan_meier

DEFAULT_G_FLOOR = 0.05


@dataclass(frozen=True)
class WeightTable:
    """Per-subject inverse censoring probabilities at each event time.

    Attributes
    ----------
    event_times : ndarray, shape (K,)
    stratum : ndarray of int, shape (n,)
        Row of ``stratum_weights`` used by each subject.
    stratum_weights : ndarray, shape (S, K)
    """

    event_times: np.ndarray
    stratum: np.ndarray
    stratum_weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.stratum_weights, dtype=float)
        if w.ndim != 2 or w.shape[1] != len(self.event_times):
            raise ValueError("stratum_weights must be (S, K)")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be strictly positive and finite")
        for name in ("event_times", "stratum", "stratum_weights"):
            a = np.array(getattr(self, name), copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return self.stratum.size

    @property
    def weights(self) -> np.ndarray:
        """Dense ``(n, K)`` matrix; entry ``(i, k)`` is ``W_i(event_times[k])``."""
        return self.stratum_weights[self.stratum]

    def columns_for(self, times) -> np.ndarray:
        """Column index of each time; every time must be in ``event_times``."""
        times = np.asarray(times, dtype=float)
        col = np.searchsorted(self.event_times, times)
        ok = (col < self.event_times.size) & (
            self.event_times[np.minimum(col, self.event_times.size - 1)] == times)
        if not np.all(ok):
            raise ValueError("weight table does not cover all event times of the data")
        return col

    def subset(self, index) -> "WeightTable":
        """Rows for a subset of subjects (weights are not recomputed)."""
        return WeightTable(self.event_times, self.stratum[np.asarray(index)], self.stratum_weights)


def _reverse_km_weights(time, event, u, g_floor):
    g = reverse_kaplan_meier(time, event).left_limit(u)
    if g_floor is None or g_floor <= 0:
        if np.any(g <= 0):
            raise ValueError("censoring survival reaches 0 before the last event time; set a floor")
        return 1.0 / g
    return 1.0 / np.maximum(g, g_floor)


def _strata_codes(data: SurvivalDataset, spec) -> np.ndarray:
    """Integer stratum code per subject from a strata spec.

    ``spec`` is a covariate name, a ``{"column": name, "bins": q}`` mapping
    (quantile bins of a continuous covariate), or a list of those; lists form
    the cross-classification.
    """
    if isinstance(spec, (str, dict)):
        spec = [spec]
    keys = []
    for item in spec:
        if isinstance(item, str):
            item = {"column": item}
        name = item["column"]
        if name not in data.covariate_names:
            raise ValueError(f"unknown strata column {name!r}")
        x = data.covariates[:, data.covariate_names.index(name)]
        bins = item.get("bins")
        if bins:
            edges = np.quantile(x, np.linspace(0, 1, int(bins) + 1)[1:-1])
            x = np.searchsorted(edges, x, side="right")
        keys.append(x)
    _, codes = np.unique(np.column_stack(keys), axis=0, return_inverse=True)
    return codes.ravel()


def censoring_weights(data: SurvivalDataset, provider="marginal_reverse_km", *,
                      strata=None, path=None, g_floor=DEFAULT_G_FLOOR) -> WeightTable:
    """Build the IPCW weight table for ``data``.

    Parameters
    ----------
    provider : {"unit", "marginal_reverse_km", "stratified_reverse_km", "external"}
    strata : str, dict or list, optional
        Strata spec for the stratified provider (see ``_strata_codes``).
    path : path-like, optional
        CSV with columns ``id,time,weight`` for the external provider.
    g_floor : float or None
        Lower bound applied to ``G`` (caps weights at ``1 / g_floor``).
        ``None`` disables the floor.
    """
    u = np.unique(data.time[data.event == 1])
    n = data.n
    if provider == "unit":
        return WeightTable(u, np.zeros(n, dtype=int), np.ones((1, u.size)))
    if provider == "marginal_reverse_km":
        w = _reverse_km_weights(data.time, data.event, u, g_floor)
        return WeightTable(u, np.zeros(n, dtype=int), w[None, :])
    if provider == "stratified_reverse_km":
        if strata is None:
            raise ValueError("stratified provider needs a strata spec")
        codes = _strata_codes(data, strata)
        counts = np.bincount(codes)
        if np.any(counts < 2):
            raise ValueError("every stratum needs at least 2 subjects")
        rows = np.vstack([
            _reverse_km_weights(data.time[codes == s], data.event[codes == s], u, g_floor)
            for s in range(counts.size)
        ])
        return WeightTable(u, codes, rows)
    if provider == "external":
        if path is None:
            raise ValueError("external provider needs a weight file path")
        return _read_weight_file(data, u, path)
    raise ValueError(f"unknown censoring weight provider {provider!r}")


def _read_weight_file(data: SurvivalDataset, u, path) -> WeightTable:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such weight file: {path}")
    pos = {sid: k for k, sid in enumerate(data.ids)}
    w = np.full((data.n, u.size), np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        for r, rec in enumerate(csv.DictReader(fh), start=1):
            try:
                i = pos[rec["id"].strip()]
                t = float(rec["time"])
                val = float(rec["weight"])
            except KeyError:
                raise DataError(f"{path}: row {r} has an unknown id or missing column") from None
            except (TypeError, ValueError):
                raise DataError(f"{path}: unparseable value in row {r}") from None
            k = np.searchsorted(u, t)
            if k < u.size and u[k] == t:
                w[i, k] = val
    if np.isnan(w).any():
        missing = int(np.isnan(w).sum())
        raise DataError(f"{path}: {missing} (subject, event time) pairs have no weight")
    return WeightTable(u, np.arange(data.n), w)


def write_weight_file(data: SurvivalDataset, table: WeightTable, path) -> None:
    """Export a weight table in the external-provider CSV format."""
    dense = table.weights
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id", "time", "weight"])
        for i, sid in enumerate(data.ids):
            for k, t in enumerate(table.event_times):
                out.writerow([sid, repr(float(t)), repr(float(dense[i, k]))])
