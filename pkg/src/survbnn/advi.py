"""Bayesian network regression on pseudo values and mean-field ADVI.

Model, for every (subject, time) pair with pseudo value ``y`` and network
input ``x``::

    y ~ N(f(x), sigma^2)
    each weight ~ N(mu_W, sigma_W^2),  each bias ~ N(mu_b, sigma_b^2)
    sigma ~ Uniform(0, sigma_max)

ADVI works on the unconstrained vector ``theta = (weights, biases, zeta)``
with ``sigma = sigma_max * logistic(zeta)`` and approximates the posterior by
a fully factorised Gaussian ``N(mu, diag(exp(omega))^2)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .network import NetworkArchitecture, forward_batch, forward_tape
from .optim import Adam


@dataclass(frozen=True)
class PriorSpec:
    mu_W: float = 0.0
    sigma_W: float = 1.0
    mu_b: float = 0.0
    sigma_b: float = 1.0
    sigma_max: float = 0.2

    def __post_init__(self):
        if min(self.sigma_W, self.sigma_b, self.sigma_max) <= 0:
            raise ValueError("prior scales must be positive")

    def to_dict(self):
        return asdict(self)


def noise_sd(zeta, sigma_max):
    """Observation noise scale recovered from its unconstrained coordinate."""
    return sigma_max * ad._sigmoid(np.atleast_1d(np.asarray(zeta, dtype=float))).reshape(np.shape(zeta))


class BNNModel:
    """Log joint density of the network regression for fixed data.

    Any object with ``n_params`` and a tape-valued ``log_joint(theta)`` can be
    handed to :func:`advi_fit`; this is the one used for survival fits.
    """

    def __init__(self, arch: NetworkArchitecture, X, y, prior: PriorSpec | None = None):
        self.arch = arch
        self.X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, arch.n_inputs)
        self.y = np.asarray(y, dtype=float).ravel()
        if self.y.size != self.X.shape[0]:
            raise ValueError("X and y have different numbers of rows")
        self.prior = prior or PriorSpec()
        w_mask, b_mask = arch.weight_mask()
        self._w_idx = np.flatnonzero(w_mask)
        self._b_idx = np.flatnonzero(b_mask)

    @property
    def n_params(self):
        return self.arch.n_weights + 1

    def _terms(self, theta: ad.Var):
        p = self.prior
        s = ad.sigmoid(theta[self.arch.n_weights])
        sigma = s * p.sigma_max
        f = forward_tape(theta, self.arch, self.X)
        lik = ad.sum(ad.normal_logpdf(self.y, f, sigma))
        prior = (ad.sum(ad.normal_logpdf(theta[self._w_idx], p.mu_W, p.sigma_W))
                 + ad.sum(ad.normal_logpdf(theta[self._b_idx], p.mu_b, p.sigma_b))
                 - math.log(p.sigma_max))
        jac = ad.log(s) + ad.log(1.0 - s) + math.log(p.sigma_max)
        return lik, prior, jac

    def log_joint(self, theta: ad.Var) -> ad.Var:
        lik, prior, jac = self._terms(theta)
        return lik + prior + jac

    def log_joint_terms(self, theta) -> dict:
        """Likelihood, prior (including the uniform density) and Jacobian parts."""
        lik, prior, jac = self._terms(ad.Var(np.asarray(theta, dtype=float)))
        return {"likelihood": float(lik.value), "prior": float(prior.value),
                "jacobian": float(jac.value)}


def log_joint(model, theta) -> float:
    """Unnormalised log posterior density at an unconstrained parameter vector."""
    theta = np.asarray(theta, dtype=float)
    if theta.size != model.n_params:
        raise ValueError(f"expected {model.n_params} parameters, got {theta.size}")
    val = float(model.log_joint(ad.Var(theta)).value)
    if not np.isfinite(val):
        raise NonFiniteError("log joint is not finite")
    return val


@dataclass
class VariationalState:
    mu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).copy()
        self.omega = np.asarray(self.omega, dtype=float).copy()
        if self.mu.shape != self.omega.shape or self.mu.ndim != 1:
            raise ValueError("mu and omega must be vectors of equal length")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.omega))):
            raise ValueError("variational parameters must be finite")

    @property
    def sd(self):
        return np.exp(self.omega)

    def to_dict(self):
        return {"mu": self.mu.tolist(), "omega": self.omega.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mu"]), np.array(d["omega"]))


def gaussian_entropy(omega) -> float:
    omega = np.asarray(omega)
    return float(omega.sum() + 0.5 * omega.size * (1.0 + ad.LOG_2PI))


def _elbo_and_grad(model, state, eps):
    """Reparameterised ELBO estimate and its gradient for draws ``eps`` (n_mc, D)."""
    sd = state.sd
    total = 0.0
    g_mu = np.zeros_like(state.mu)
    g_omega = np.zeros_like(state.mu)
    for e in eps:
        val, g = ad.value_and_grad(model.log_joint, state.mu + sd * e)
        total += val
        g_mu += g
        g_omega += g * sd * e
    k = eps.shape[0]
    return total / k + gaussian_entropy(state.omega), g_mu / k, g_omega / k + 1.0


def elbo_estimate(state: VariationalState, model, n_mc=1, rng=None) -> float:
    """Monte Carlo ELBO: mean log joint over reparameterised draws plus entropy."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    rng = np.random.default_rng(rng)
    eps = rng.standard_normal((n_mc, state.mu.size))
    sd = state.sd
    vals = [float(model.log_joint(ad.Var(state.mu + sd * e)).value) for e in eps]
    out = float(np.mean(vals)) + gaussian_entropy(state.omega)
    if not np.isfinite(out):
        raise NonFiniteError("ELBO estimate is not finite")
    return out


def elbo_gradient(state: VariationalState, model, n_mc=1, rng=None):
    """Reparameterisation gradient of the ELBO with respect to ``(mu, omega)``."""
    rng = np.random.default_rng(rng)
    eps = rng.standard_normal((n_mc, state.mu.size))
    _, g_mu, g_omega = _elbo_and_grad(model, state, eps)
    return g_mu, g_omega


@dataclass
class ADVIConfig:
    iterations: int = 10000
    n_mc: int = 1
    lr: float = 0.01
    omega_init: float = -3.0
    window: int = 100
    tol: float | None = 1e-5
    decay: float | None = 100.0
    power: float = 0.5
    average: float = 0.25


@dataclass
class ADVIResult:
    state: VariationalState
    elbo_trace: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self):
        return len(self.elbo_trace)


def advi_fit(model, init, config: ADVIConfig | None = None, seed=0) -> ADVIResult:
    """Maximise the ELBO by stochastic gradient ascent from ``mu = init``.

    Stops after ``config.iterations`` steps, or earlier when the mean ELBO of
    consecutive non-overlapping ``window``-iteration blocks changes by less
    than ``tol`` in relative terms. With ``average`` set, the returned state
    is the mean over the final ``average`` fraction of iterates, which removes most of the
    step-to-step jitter left by single-draw gradients.
    """
    config = config or ADVIConfig()
    init = np.asarray(init, dtype=float)
    if init.size != model.n_params:
        raise ValueError(f"init has {init.size} entries, model needs {model.n_params}")
    state = VariationalState(init, np.full(init.size, config.omega_init))
    rng = np.random.default_rng(seed)
    opt = Adam(2 * init.size, lr=config.lr, decay=config.decay, power=config.power)
    trace = []
    prev_block = None
    converged = False
    D = init.size
    path = np.empty((config.iterations, 2 * D)) if config.average else None
    for it in range(config.iterations):
        eps = rng.standard_normal((config.n_mc, D))
        elbo, g_mu, g_omega = _elbo_and_grad(model, state, eps)
        grad = np.concatenate([g_mu, g_omega])
        if not (np.isfinite(elbo) and np.all(np.isfinite(grad))):
            raise NonFiniteError(f"non-finite ELBO gradient at iteration {it}")
        trace.append(elbo)
        # Adam minimises, so feed it the negative ELBO gradient
        step = opt.step(-grad)
        state = VariationalState(state.mu + step[:D], state.omega + step[D:])
        if path is not None:
            path[it, :D] = state.mu
            path[it, D:] = state.omega
        if config.tol is not None and len(trace) % config.window == 0:
            block = float(np.mean(trace[-config.window:]))
            if prev_block is not None and abs(block - prev_block) < config.tol * abs(prev_block):
                converged = True
                break
            prev_block = block
    if path is not None and trace:
        done = len(trace)
        avg = path[done - max(1, int(round(config.average * done))):done].mean(axis=0)
        state = VariationalState(avg[:D], avg[D:])
    return ADVIResult(state, trace, converged)


def sample_outputs(state: VariationalState, arch: NetworkArchitecture, X, n_draws=1000, seed=0):
    """Network outputs for each row of ``X`` under ``n_draws`` posterior draws.

    Returns an ``(n_draws, rows)`` array.
    """
    if n_draws < 40:
        raise ValueError("at least 40 posterior draws are required for stable percentiles")
    rng = np.random.default_rng(seed)
    out = np.empty((n_draws, np.atleast_2d(X).shape[0]))
    sd = state.sd
    for s in range(n_draws):
        theta = state.mu + sd * rng.standard_normal(state.mu.size)
        out[s] = forward_batch(theta, arch, X)
    return out


@dataclass
class PosteriorPrediction:
    """Posterior mean and equal-tailed 95% interval of the survival curve."""

    subject_ids: tuple
    grid: object
    mean: np.ndarray
    lower95: np.ndarray
    upper95: np.ndarray
    draws: np.ndarray | None = None

    @classmethod
    def from_draws(cls, subject_ids, grid, draws, keep_draws=False):
        """Summarise an ``(S, n, m)`` draw array."""
        lower, upper = np.percentile(draws, [2.5, 97.5], axis=0)
        mean = np.clip(draws.mean(axis=0), lower, upper)
        return cls(tuple(subject_ids), grid, mean, lower, upper, draws if keep_draws else None)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["id", "time", "mean", "lower95", "upper95"])
            for i, sid in enumerate(self.subject_ids):
                for j, t in enumerate(self.grid.points):
                    out.writerow([sid, repr(float(t)), repr(float(self.mean[i, j])),
                                  repr(float(self.lower95[i, j])), repr(float(self.upper95[i, j]))])
