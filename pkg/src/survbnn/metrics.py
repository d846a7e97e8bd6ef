"""Bias, root mean squared error and interval coverage over replicates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReplicateSums:
    """Per-time-point sufficient statistics of one replicate."""

    count: np.ndarray      # (m,) subjects evaluated
    sum_err: np.ndarray    # (m,) sum of (estimate - truth)
    sum_sq: np.ndarray     # (m,) sum of squared errors
    covered: np.ndarray    # (m,) number of intervals containing the truth
    widths: np.ndarray     # (n, m) interval widths
    times: np.ndarray      # (m,) evaluation times of this replicate


def evaluate_replicate(pred, truth) -> ReplicateSums:
    """Accumulate errors of a posterior prediction against true survival values.

    ``pred`` needs ``mean``, ``lower95``, ``upper95`` (n, m) and ``grid``;
    ``truth`` is the (n, m) matrix of true survival probabilities.
    """
    truth = np.asarray(truth, dtype=float)
    mean = np.asarray(pred.mean, dtype=float)
    if truth.shape != mean.shape:
        raise ValueError(f"shape mismatch: prediction {mean.shape}, truth {truth.shape}")
    err = mean - truth
    inside = (pred.lower95 <= truth) & (truth <= pred.upper95)
    return ReplicateSums(
        count=np.full(truth.shape[1], truth.shape[0], dtype=float),
        sum_err=err.sum(axis=0),
        sum_sq=(err * err).sum(axis=0),
        covered=inside.sum(axis=0).astype(float),
        widths=np.asarray(pred.upper95 - pred.lower95, dtype=float),
        times=np.asarray(pred.grid.points, dtype=float),
    )


@dataclass(frozen=True)
class MetricReport:
    times: np.ndarray
    bias: np.ndarray
    sqrt_mse: np.ndarray
    coverage: np.ndarray
    median_width: np.ndarray
    n_replicates: int
    n_test_subjects: int

    COLUMNS = ("time", "bias", "sqrt_mse", "coverage", "median_width")

    def rows(self):
        for j in range(self.times.size):
            yield {"time": float(self.times[j]), "bias": float(self.bias[j]),
                   "sqrt_mse": float(self.sqrt_mse[j]), "coverage": float(self.coverage[j]),
                   "median_width": float(self.median_width[j])}

    def to_dict(self):
        return {"n_replicates": self.n_replicates, "n_test_subjects": self.n_test_subjects,
                "time_points": list(self.rows())}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.DictWriter(fh, fieldnames=self.COLUMNS, lineterminator="\n")
            out.writeheader()
            for row in self.rows():
                out.writerow({k: repr(v) for k, v in row.items()})


def _fsum_cols(arrays):
    stacked = np.vstack(arrays)
    return np.array([math.fsum(stacked[:, j]) for j in range(stacked.shape[1])])


def aggregate(replicates) -> MetricReport:
    """Pool replicate sums into grand means over subjects and replicates.

    Sums are exactly rounded (``math.fsum``), so the report does not depend
    on the order of the replicates. Reported times are the replicate means.
    """
    replicates = list(replicates)
    if not replicates:
        raise ValueError("no replicates to aggregate")
    m = replicates[0].count.size
    if any(r.count.size != m for r in replicates):
        raise ValueError("replicates have different numbers of time points (a survival "
                         "quantile was unattainable in some replicate; increase n)")
    count = _fsum_cols([r.count for r in replicates])
    bias = _fsum_cols([r.sum_err for r in replicates]) / count
    mse = _fsum_cols([r.sum_sq for r in replicates]) / count
    coverage = _fsum_cols([r.covered for r in replicates]) / count
    widths = np.vstack([r.widths for r in replicates])
    times = _fsum_cols([r.times for r in replicates]) / len(replicates)
    return MetricReport(
        times=times,
        bias=bias,
        sqrt_mse=np.sqrt(mse),
        coverage=coverage,
        median_width=np.median(widths, axis=0),
        n_replicates=len(replicates),
        n_test_subjects=int(sum(r.widths.shape[0] for r in replicates)),
    )
