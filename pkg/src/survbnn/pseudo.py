"""Jackknife pseudo survival probabilities.

For subject ``i`` at time ``t`` the pseudo value is
``n * S(t) - (n - 1) * S^{-i}(t)`` where ``S^{-i}`` is the estimate with
subject ``i`` removed. All leave-one-out curves are obtained from a single
pass over the event times: removing a subject only changes the risk-set
sizes before its own time and the event mass at its own time, so each
deletion is a prefix (shared within a weight stratum), a single correction
term, and a suffix taken from the full-data curve.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset
from .estimators import TimeGrid
from .weights import WeightTable, censoring_weights


@dataclass(frozen=True)
class PseudoValueMatrix:
    """``values[i, j]`` is the pseudo survival probability of subject i at ``grid[j]``.

    Entries are left unclipped and may fall outside [0, 1].
    """

    subject_ids: tuple
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != (len(self.subject_ids), len(self.grid)):
            raise ValueError("pseudo value matrix has the wrong shape")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))

    def to_csv(self, path, mode="w") -> None:
        """Write long format rows ``id,time,pseudo_value``."""
        with open(path, mode, newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            if mode == "w":
                out.writerow(["id", "time", "pseudo_value"])
            for i, sid in enumerate(self.subject_ids):
                for j, t in enumerate(self.grid.points):
                    out.writerow([sid, repr(float(t)), repr(float(self.values[i, j]))])


def read_pseudo_csv(path):
    """Read a long-format pseudo-value CSV back into ``(ids, grid, values)``."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append((rec["id"], float(rec["time"]), float(rec["pseudo_value"])))
    ids = list(dict.fromkeys(r[0] for r in rows))
    times = np.unique([r[1] for r in rows])
    pos = {sid: k for k, sid in enumerate(ids)}
    vals = np.full((len(ids), times.size), np.nan)
    for sid, t, v in rows:
        vals[pos[sid], np.searchsorted(times, t)] = v
    if np.isnan(vals).any():
        raise ValueError(f"{path}: pseudo-value table is not rectangular")
    return PseudoValueMatrix(tuple(ids), TimeGrid(times), vals)


def _loo_curves(time, event, stratum, w, grid, estimator):
    """Full-sample and leave-one-out weighted survival estimates on ``grid``.

    Parameters
    ----------
    time, event, stratum : (n,) arrays
    w : (S, K) weights of each stratum at the K distinct event times
    estimator : {"exp", "product_limit"}
        ``exp(-Lambda)`` or the product ``prod(1 - dLambda)``.

    Returns
    -------
    full : (m,) ; loo : (n, m)
    """
    n = time.size
    u = np.unique(time[event == 1])
    K = u.size
    if K == 0:
        return np.ones(len(grid)), np.ones((n, len(grid)))
    t_sorted = np.sort(time)
    n_risk = n - np.searchsorted(t_sorted, u, side="left")

    dn = np.zeros(K)
    y = np.zeros(K)
    for s in range(w.shape[0]):
        member = stratum == s
        if not member.any():
            continue
        ts = np.sort(time[member])
        es = np.sort(time[member & (event == 1)])
        y += (ts.size - np.searchsorted(ts, u, side="left")) * w[s]
        dn += (np.searchsorted(es, u, side="right") - np.searchsorted(es, u, side="left")) * w[s]
    if np.any(y <= 0):
        raise ValueError("zero weighted risk set at an event time")

    grid = np.asarray(grid, dtype=float)
    k_t = np.searchsorted(u, grid, side="right") - 1          # last event time <= t
    p = np.searchsorted(u, time, side="left")                 # event times strictly before T_i
    is_ev_time = (p < K) & (u[np.minimum(p, K - 1)] == time)  # T_i coincides with an event time
    s_i = stratum
    w_own = w[s_i, np.minimum(p, K - 1)]

    # leave-one-out increment at the subject's own time; zero if it was alone at risk
    own_dn = dn[np.minimum(p, K - 1)] - event * w_own
    own_y = y[np.minimum(p, K - 1)] - w_own
    alone = n_risk[np.minimum(p, K - 1)] == 1
    with np.errstate(divide="ignore", invalid="ignore"):
        own_inc = np.where(alone | ~is_ev_time, 0.0, own_dn / own_y)
        # increments with one subject of stratum s removed from the risk set
        shrunk = np.where(y[None, :] - w > 0, dn[None, :] / (y[None, :] - w), 0.0)
    full_inc = dn / y

    k_before = np.minimum(k_t[None, :], p[:, None] - 1)       # (n, m)
    after = k_t[None, :] >= p[:, None]
    rows = s_i[:, None]

    if estimator == "exp":
        H = np.concatenate(([0.0], np.cumsum(full_inc)))      # H[k + 1] = Lambda(u_k)
        C = np.concatenate((np.zeros((w.shape[0], 1)), np.cumsum(shrunk, axis=1)), axis=1)
        prefix = C[rows, k_before + 1]
        start = np.where(is_ev_time, p, p - 1)[:, None]       # last index not in the suffix
        suffix = H[k_t[None, :] + 1] - H[start + 1]
        own = np.where(is_ev_time, own_inc, 0.0)[:, None]
        lam = prefix + np.where(after, own + suffix, 0.0)
        return np.exp(-H[k_t + 1]), np.exp(-lam)
    if estimator == "product_limit":
        factor = 1.0 - full_inc
        P = np.concatenate(([1.0], np.cumprod(factor)))
        C = np.concatenate((np.ones((w.shape[0], 1)), np.cumprod(1.0 - shrunk, axis=1)), axis=1)
        prefix = C[rows, k_before + 1]
        start = np.where(is_ev_time, p, p - 1)[:, None]
        k_full = np.broadcast_to(k_t[None, :], prefix.shape)
        # products over (start, k] as ratios of cumulative products, tracking
        # exact zero factors separately so that 0/0 never occurs
        zero = factor <= 0
        Z = np.concatenate(([0], np.cumsum(zero)))
        Pnz = np.concatenate(([1.0], np.cumprod(np.where(zero, 1.0, factor))))
        hit_zero = Z[k_full + 1] > Z[start + 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(k_full <= start, 1.0, Pnz[k_full + 1] / Pnz[start + 1])
        suffix = np.where(hit_zero, 0.0, ratio)
        own = np.where(is_ev_time, 1.0 - own_inc, 1.0)[:, None]
        surv = prefix * np.where(after, own * suffix, 1.0)
        return P[k_t + 1], surv
    raise ValueError(f"unknown estimator {estimator!r}")


def _pseudo_from_curves(full, loo):
    n = loo.shape[0]
    return n * full[None, :] - (n - 1) * loo


def jackknife_pseudo(data: SurvivalDataset, grid: TimeGrid, estimator="kaplan_meier") -> PseudoValueMatrix:
    """Unweighted jackknife pseudo survival probabilities.

    ``estimator`` selects the survival estimate being jackknifed:
    ``"kaplan_meier"`` (default) or ``"nelson_aalen"`` for ``exp(-NA)``.
    """
    if data.n < 2:
        raise ValueError("jackknife pseudo values need at least 2 subjects")
    kind = {"kaplan_meier": "product_limit", "nelson_aalen": "exp"}.get(estimator)
    if kind is None:
        raise ValueError(f"unknown estimator {estimator!r}")
    K = np.unique(data.time[data.event == 1]).size
    full, loo = _loo_curves(data.time, data.event, np.zeros(data.n, dtype=int),
                            np.ones((1, K)), grid.points, kind)
    values = _pseudo_from_curves(full, loo)
    if kind == "product_limit":
        # with nobody censored by time t the product telescopes to #{T > t} / n
        # and the jackknife to the indicator; use that exactly
        clean = ~np.any((data.event == 0)[:, None] & (data.time[:, None] <= grid.points[None, :]), axis=0)
        values[:, clean] = data.time[:, None] > grid.points[None, clean]
    return PseudoValueMatrix(data.ids, grid, values)


def ipcw_pseudo(data: SurvivalDataset, grid: TimeGrid, weights: WeightTable,
                estimator="exp") -> PseudoValueMatrix:
    """IPCW jackknife pseudo values with the full-data weights held fixed.

    ``estimator="exp"`` jackknifes ``exp(-Lambda_W)``; ``"product_limit"``
    jackknifes the weighted product-limit curve ``prod(1 - dLambda_W)``.
    """
    if data.n < 2:
        raise ValueError("jackknife pseudo values need at least 2 subjects")
    if weights.n != data.n:
        raise ValueError("weight table and dataset have different numbers of subjects")
    u = np.unique(data.time[data.event == 1])
    w = weights.stratum_weights[:, weights.columns_for(u)]
    full, loo = _loo_curves(data.time, data.event, weights.stratum, w, grid.points, estimator)
    return PseudoValueMatrix(data.ids, grid, _pseudo_from_curves(full, loo))


def conditional_ipcw_pseudo(data: SurvivalDataset, grid: TimeGrid, weights: WeightTable,
                            estimator="exp") -> list:
    """Pseudo values for conditional survival over consecutive grid intervals.

    For the interval starting at ``grid[j]`` the sample is restricted to the
    risk set ``R_j = {i : T_i >= grid[j]}`` and the jackknife is taken of the
    conditional survival ``P(T > grid[j + 1] | T >= grid[j])`` on that subsample,
    with multiplier ``|R_j|``. Intervals whose risk set has fewer than two
    subjects are dropped with a warning.

    Returns
    -------
    list of PseudoValueMatrix
        One single-column matrix per retained interval, indexed by the
        subjects in ``R_j`` and evaluated at ``grid[j + 1]``.
    """
    pts = grid.points
    if pts.size < 2:
        raise ValueError("conditional pseudo values need a grid of length >= 2")
    out = []
    for j in range(pts.size - 1):
        idx = np.flatnonzero(data.time >= pts[j])
        if idx.size < 2:
            warnings.warn(f"dropping interval ({pts[j]}, {pts[j + 1]}]: risk set has "
                          f"{idx.size} subject(s)", RuntimeWarning, stacklevel=2)
            continue
        sub = data.subset(idx)
        out.append(ipcw_pseudo(sub, TimeGrid([pts[j + 1]]), weights.subset(idx), estimator))
    return out


def pseudo_values(data: SurvivalDataset, grid: TimeGrid, method="plain", *, provider=None,
                  strata=None, weight_path=None, g_floor=0.05):
    """Dispatch to the plain, IPCW or conditional pseudo-value routine."""
    if method == "plain":
        return jackknife_pseudo(data, grid)
    weights = censoring_weights(data, provider or "marginal_reverse_km", strata=strata,
                                path=weight_path, g_floor=g_floor)
    if method == "ipcw":
        return ipcw_pseudo(data, grid, weights)
    if method == "conditional":
        return conditional_ipcw_pseudo(data, grid, weights)
    raise ValueError(f"unknown pseudo-value method {method!r}")
