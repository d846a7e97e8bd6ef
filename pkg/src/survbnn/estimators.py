"""Nonparametric survival estimators: Kaplan-Meier, (IPCW) Nelson-Aalen and
quantile-based time grids.

Tie convention throughout: at a shared time, events happen before censorings,
so a subject censored at ``u`` is still at risk for an event at ``u``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset

QUANTILE_TOL = 1e-10


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous piecewise-constant function.

    The value is ``initial_value`` on ``[0, knots[0])`` and ``values[k]`` on
    ``[knots[k], knots[k + 1])``.
    """

    knots: np.ndarray
    values: np.ndarray
    initial_value: float
    kind: str

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if self.kind not in ("survival", "hazard"):
            raise ValueError(f"unknown step function kind {self.kind!r}")
        knots.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        return padded[idx + 1]

    def left_limit(self, t):
        """Value just before ``t``, i.e. ``F(t-)``."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="left") - 1
        padded = np.concatenate(([self.initial_value], self.values))
        return padded[idx + 1]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing positive evaluation times."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ValueError("time grid is empty")
        if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
            raise ValueError("time grid points must be positive and finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("time grid must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)


def _event_table(time, event):
    """Distinct event times with event counts and risk-set sizes."""
    order = np.sort(time)
    ev_times, d = np.unique(time[event == 1], return_counts=True)
    at_risk = order.size - np.searchsorted(order, ev_times, side="left")
    return ev_times, d, at_risk


def kaplan_meier(data: SurvivalDataset) -> StepFunction:
    """Product-limit estimate of the survival function."""
    if data.n < 1:
        raise ValueError("empty dataset")
    u, d, y = _event_table(data.time, data.event)
    return StepFunction(u, np.cumprod(1.0 - d / y), 1.0, "survival")


def nelson_aalen(data: SurvivalDataset) -> StepFunction:
    """Unweighted Nelson-Aalen cumulative hazard estimate."""
    if data.n < 1:
        raise ValueError("empty dataset")
    u, d, y = _event_table(data.time, data.event)
    return StepFunction(u, np.cumsum(d / y), 0.0, "hazard")


def reverse_kaplan_meier(time, event) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function ``G``.

    Censorings are the "events"; subjects with an event at the same time have
    already left the risk set, consistent with the events-first convention.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    order = np.sort(time)
    c_times, c = np.unique(time[event == 0], return_counts=True)
    at_risk = order.size - np.searchsorted(order, c_times, side="left")
    ev_sorted = np.sort(time[event == 1])
    tied_events = (np.searchsorted(ev_sorted, c_times, side="right")
                   - np.searchsorted(ev_sorted, c_times, side="left"))
    return StepFunction(c_times, np.cumprod(1.0 - c / (at_risk - tied_events)), 1.0, "survival")


def _weighted_increments(data: SurvivalDataset, weights):
    """Weighted event mass and weighted risk-set size at each event time.

    Returns ``(u, dN_w, Y_w, col)`` where ``col`` maps each distinct event
    time of ``data`` to its column in the weight table.
    """
    u = np.unique(data.time[data.event == 1])
    col = weights.columns_for(u)
    n_strata = weights.stratum_weights.shape[0]
    w = weights.stratum_weights[:, col]  # (S, K)
    y_w = np.zeros(u.size)
    dn_w = np.zeros(u.size)
    for s in range(n_strata):
        member = weights.stratum == s
        if not member.any():
            continue
        t_s = np.sort(data.time[member])
        at_risk = t_s.size - np.searchsorted(t_s, u, side="left")
        ev_s = np.sort(data.time[member & (data.event == 1)])
        deaths = np.searchsorted(ev_s, u, side="right") - np.searchsorted(ev_s, u, side="left")
        y_w += at_risk * w[s]
        dn_w += deaths * w[s]
    return u, dn_w, y_w, col


def ipcw_nelson_aalen(data: SurvivalDataset, weights) -> StepFunction:
    """Inverse-probability-of-censoring weighted Nelson-Aalen estimate.

    ``Lambda(t) = sum_{u <= t} sum_{i: T_i = u, d_i = 1} W_i(u) / sum_j Y_j(u) W_j(u)``
    """
    if weights.n != data.n:
        raise ValueError("weight table and dataset have different numbers of subjects")
    u, dn_w, y_w, _ = _weighted_increments(data, weights)
    if np.any(y_w <= 0):
        raise ValueError("zero weighted risk set at an event time")
    return StepFunction(u, np.cumsum(dn_w / y_w), 0.0, "hazard")


def ipcw_survival(hazard: StepFunction) -> StepFunction:
    """``exp(-Lambda(t))`` for a cumulative hazard step function."""
    if hazard.kind != "hazard":
        raise ValueError("expected a hazard-kind step function")
    return StepFunction(hazard.knots, np.exp(-hazard.values), 1.0, "survival")


def survival_quantiles(surv: StepFunction, probs) -> TimeGrid:
    """Times at which the survival curve first reaches ``1 - p``.

    For each ``p`` the smallest knot ``t`` with ``S(t) <= 1 - p`` is returned.
    Probabilities the curve never reaches are dropped with a warning, as are
    probabilities that land on an already-used knot.
    """
    if surv.kind != "survival":
        raise ValueError("expected a survival-kind step function")
    probs = np.asarray(probs, dtype=float).ravel()
    if probs.size == 0 or np.any((probs <= 0) | (probs >= 1)) or np.any(np.diff(probs) <= 0):
        raise ValueError("probs must be strictly increasing values in (0, 1)")
    hit = surv.values[None, :] <= (1.0 - probs[:, None]) + QUANTILE_TOL
    attainable = hit.any(axis=1)
    if not attainable.any():
        raise ValueError("no requested quantile is attainable from this survival curve")
    if not attainable.all():
        warnings.warn(
            f"dropping unattainable survival quantiles {probs[~attainable].tolist()}",
            RuntimeWarning, stacklevel=2)
    times = surv.knots[np.argmax(hit[attainable], axis=1)]
    uniq = np.unique(times)
    if uniq.size < times.size:
        warnings.warn("several quantiles share a knot; keeping distinct times only",
                      RuntimeWarning, stacklevel=2)
    return TimeGrid(uniq)


DECILES = np.round(np.arange(1, 10) / 10.0, 10)


def decile_grid(data: SurvivalDataset) -> TimeGrid:
    """10th to 90th percentile times of the Kaplan-Meier curve."""
    return survival_quantiles(kaplan_meier(data), DECILES)
