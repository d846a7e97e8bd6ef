"""Synthetic survival data with a nonlinear covariate effect.

Event times follow a proportional-hazards model with log-logistic baseline,
drawn by inverting the survival function:

    T* = b * (exp(-log(u) * exp(-beta * f(X))) - 1) ** (1 / a),   u ~ U(0, 1]
    f(X) = exp(X' V X),  X = (x1, x2, x3),  V = 0.05 * [[1, r, r^2], [r, 1, r], [r^2, r, 1]]

so that ``S(t | X) = (1 + (t / b) ** a) ** (-exp(beta * f(X)))``. Remaining
covariates are pure noise. Every subject draws from its own Philox substream,
so a dataset does not depend on how generation is chunked.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import asdict, dataclass, replace

import numpy as np

from .data import SurvivalDataset

# case -> (proportional hazards, n, d, rho, censoring rate, censoring scheme)
CASES = {
    1: (True, 5000, 10, 0.5, 0.20, "exponential"),
    2: (True, 5000, 10, 0.5, 0.40, "exponential"),
    3: (True, 2000, 10, 0.5, 0.20, "exponential"),
    4: (True, 5000, 10, 0.95, 0.20, "exponential"),
    5: (True, 5000, 50, 0.5, 0.20, "exponential"),
    6: (False, 5000, 10, 0.5, 0.20, "exponential"),
    7: (True, 5000, 10, 0.5, 0.40, "covariate_dependent"),
}

N_PILOT = 100_000


@dataclass(frozen=True)
class SimConfig:
    case_id: int = 1
    n: int = 5000
    d: int = 10
    rho: float = 0.5
    a: float = 1.1
    b: float = 0.8
    beta: float = 0.1
    censoring: str = "exponential"
    target_rate: float = 0.20
    admin_cap: float = 15.0
    non_ph: bool = False
    seed: int = 0
    censoring_param: float | None = None  # exponential rate, or b of the censoring law

    def __post_init__(self):
        if self.case_id not in CASES:
            raise ValueError(f"case_id must be one of {sorted(CASES)}")
        if self.n < 2 or self.d < 3:
            raise ValueError("need n >= 2 and d >= 3")
        if not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if not 0 < self.target_rate < 1:
            raise ValueError("target censoring rate must lie in (0, 1)")
        if self.censoring not in ("exponential", "covariate_dependent"):
            raise ValueError(f"unknown censoring scheme {self.censoring!r}")

    @classmethod
    def for_case(cls, case_id, **overrides):
        """Configuration of one of the seven standard simulation settings."""
        if case_id not in CASES:
            raise ValueError(f"case_id must be one of {sorted(CASES)}")
        ph, n, d, rho, rate, scheme = CASES[case_id]
        base = dict(case_id=case_id, n=n, d=d, rho=rho, target_rate=rate,
                    censoring=scheme, non_ph=not ph)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class SimOutput:
    dataset: SurvivalDataset
    t_star: np.ndarray
    censor_time: np.ndarray
    f_x: np.ndarray
    shape: np.ndarray
    config: SimConfig

    @property
    def censoring_fraction(self):
        return 1.0 - self.dataset.event.mean()

    def write_latent_csv(self, path, index=None):
        """Latent quantities ``id,t_star,c,f_x`` for oracle evaluation."""
        index = np.arange(self.dataset.n) if index is None else np.asarray(index)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["id", "t_star", "c", "f_x"])
            for i in index:
                out.writerow([self.dataset.ids[i], repr(float(self.t_star[i])),
                              repr(float(self.censor_time[i])), repr(float(self.f_x[i]))])


def interaction_matrix(rho):
    return 0.05 * np.array([[1.0, rho, rho ** 2], [rho, 1.0, rho], [rho ** 2, rho, 1.0]])


def risk_function(X, rho=0.5):
    """``f(X) = exp(X' V X)`` using the first three columns of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))[:, :3]
    return np.exp(np.einsum("ij,jk,ik->i", X, interaction_matrix(rho), X))


def event_times(u, f_x, a=1.1, b=0.8, beta=0.1):
    """Inverse-CDF draw of event times from uniforms ``u`` in (0, 1]."""
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore"):
        return b * np.expm1(-np.log(u) * np.exp(-beta * np.asarray(f_x))) ** (1.0 / np.asarray(a))


def true_survival(x, t, a=1.1, b=0.8, beta=0.1, rho=0.5):
    """Closed-form ``S(t | x)``; ``x`` holds at least ``x1, x2, x3``."""
    f = risk_function(x, rho)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return (1.0 + (t / b) ** a) ** (-np.exp(beta * f))


def survival_from_risk(f_x, t, shape, b=0.8, beta=0.1):
    """``S(t | X)`` from precomputed ``f(X)`` and per-subject shapes, shape (n, m)."""
    f_x = np.asarray(f_x, dtype=float)[:, None]
    shape = np.broadcast_to(np.asarray(shape, dtype=float), f_x.shape[:1])[:, None]
    t = np.asarray(t, dtype=float)[None, :]
    return (1.0 + (t / b) ** shape) ** (-np.exp(beta * f_x))


def _key(seed, label):
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return np.frombuffer(digest[:16], dtype=np.uint64).copy()


def _subject_draws(seed, n, d):
    """Per-subject uniforms and covariates, one Philox substream per subject."""
    key = _key(seed, "subjects")
    u = np.empty((n, 4))
    x = np.empty((n, d))
    for i in range(n):
        g = np.random.Generator(np.random.Philox(key=key, counter=np.array([0, i, 0, 0], dtype=np.uint64)))
        u[i] = g.random(4)
        x[i] = g.standard_normal(d)
    return u, x


def _censoring_times(scheme, param, u_c, f_x, shape, cfg):
    if scheme == "exponential":
        return -np.log(u_c) / param
    return event_times(u_c, f_x, shape, param, cfg.beta)


def _censored_fraction(cfg, param, t_star, u_c, f_x, shape):
    c = _censoring_times(cfg.censoring, param, u_c, f_x, shape, cfg)
    return 1.0 - np.mean(t_star <= np.minimum(c, cfg.admin_cap))


def calibrate_censoring_rate(config: SimConfig, n_pilot=N_PILOT, tol=1e-4) -> float:
    """Censoring parameter giving ``config.target_rate`` censored observations.

    Bisects (on the log scale) the exponential rate, or the scale ``b`` of the
    covariate-dependent censoring law, against the censored fraction of a
    fixed pilot sample, administrative censoring included.
    """
    if not 0.01 < config.target_rate < 0.99:
        raise ValueError("target censoring rate must lie in (0.01, 0.99)")
    g = np.random.Generator(np.random.Philox(key=_key(config.seed, "pilot")))
    u_t = 1.0 - g.random(n_pilot)
    u_c = 1.0 - g.random(n_pilot)
    z2 = g.random(n_pilot) < 0.5
    f_x = risk_function(g.standard_normal((n_pilot, 3)), config.rho)
    shape = config.a + z2 if config.non_ph else np.full(n_pilot, config.a)
    t_star = event_times(u_t, f_x, shape, config.b, config.beta)

    def frac(log_p):
        return _censored_fraction(config, np.exp(log_p), t_star, u_c, f_x, shape)

    lo, hi = np.log(1e-8), np.log(1e6)
    f_lo, f_hi = frac(lo), frac(hi)
    # exponential: more censoring as the rate grows; scale: less as b grows
    increasing = config.censoring == "exponential"
    if not (min(f_lo, f_hi) <= config.target_rate <= max(f_lo, f_hi)):
        raise ValueError(f"target censoring rate {config.target_rate} is outside the "
                         f"attainable range [{min(f_lo, f_hi):.3f}, {max(f_lo, f_hi):.3f}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = frac(mid)
        if abs(f_mid - config.target_rate) < tol or hi - lo < 1e-12:
            break
        if (f_mid < config.target_rate) == increasing:
            lo = mid
        else:
            hi = mid
    return float(np.exp(mid))


def simulate_case(config: SimConfig) -> SimOutput:
    """Draw one dataset together with its latent event and censoring times."""
    cfg = config
    if cfg.censoring_param is None:
        cfg = replace(cfg, censoring_param=calibrate_censoring_rate(cfg))
    n, d = cfg.n, cfg.d
    u, x = _subject_draws(cfg.seed, n, d)
    u_t, u_c = 1.0 - u[:, 0], 1.0 - u[:, 1]
    z1 = (u[:, 2] < 0.5).astype(float)
    z2 = (u[:, 3] < 0.5).astype(float)
    f_x = risk_function(x, cfg.rho)
    shape = cfg.a + z2 if cfg.non_ph else np.full(n, cfg.a)
    t_star = event_times(u_t, f_x, shape, cfg.b, cfg.beta)
    c = _censoring_times(cfg.censoring, cfg.censoring_param, u_c, f_x, shape, cfg)
    follow = np.minimum(c, cfg.admin_cap)
    time = np.minimum(t_star, follow)
    event = (t_star <= follow).astype(int)
    cols = [x, z1[:, None]]
    names = [f"x{k + 1}" for k in range(d)] + ["z1"]
    if cfg.non_ph:
        cols.append(z2[:, None])
        names.append("z2")
    data = SurvivalDataset(tuple(str(i) for i in range(n)), time, event, np.hstack(cols), tuple(names))
    return SimOutput(data, t_star, c, f_x, shape, cfg)


def train_test_split(n, seed, train_fraction=0.75):
    """Seeded permutation split; returns sorted ``(train_idx, test_idx)``."""
    perm = np.random.Generator(np.random.Philox(key=_key(seed, "split"))).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])
