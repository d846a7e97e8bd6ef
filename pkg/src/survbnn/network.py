"""Fully connected survival network and its frequentist point fit."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .optim import Adam


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer sizes ``[N_0, ..., N_L]`` and one activation per non-input layer."""

    layer_sizes: tuple
    activations: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        acts = tuple(self.activations)
        if len(sizes) < 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise ValueError("need at least one layer, all sizes >= 1 and a single output")
        if len(acts) != len(sizes) - 1:
            raise ValueError("one activation per layer is required")
        unknown = set(acts) - set(ad.ACTIVATIONS)
        if unknown:
            raise ValueError(f"unsupported activations {sorted(unknown)}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def default(cls, n_inputs):
        """8-4-1 network with tanh hidden layers and a sigmoid output."""
        return cls((n_inputs, 8, 4, 1), ("tanh", "tanh", "sigmoid"))

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_weights(self):
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def slices(self):
        """``(W_slice, W_shape, b_slice)`` for each layer of the flat layout.

        Layout: ``W_1`` row-major with shape ``(N_0, N_1)``, ``b_1``, ``W_2``,
        ``b_2``, ... and optionally a trailing noise-scale slot.
        """
        out, k = [], 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            out.append((slice(k, k + a * b), (a, b), slice(k + a * b, k + a * b + b)))
            k += a * b + b
        return out

    def weight_mask(self):
        """Boolean masks over the flat network parameters: (is_weight, is_bias)."""
        w = np.zeros(self.n_weights, dtype=bool)
        b = np.zeros(self.n_weights, dtype=bool)
        for ws, _, bs in self.slices():
            w[ws] = True
            b[bs] = True
        return w, b

    def to_dict(self):
        return {"layer_sizes": list(self.layer_sizes), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["layer_sizes"]), tuple(d["activations"]))


def pack(weights, biases) -> np.ndarray:
    """Flatten per-layer ``W`` matrices and ``b`` vectors into one vector."""
    parts = []
    for W, b in zip(weights, biases):
        parts.append(np.asarray(W, dtype=float).ravel())
        parts.append(np.asarray(b, dtype=float).ravel())
    return np.concatenate(parts)


def unpack(params, arch: NetworkArchitecture):
    """Inverse of :func:`pack`; ignores a trailing noise slot if present."""
    params = np.asarray(params, dtype=float)
    if params.size not in (arch.n_weights, arch.n_weights + 1):
        raise ValueError(f"expected {arch.n_weights} parameters, got {params.size}")
    Ws, bs = [], []
    for ws, shape, bsl in arch.slices():
        Ws.append(params[ws].reshape(shape).copy())
        bs.append(params[bsl].copy())
    return Ws, bs


def forward_tape(theta: ad.Var, arch: NetworkArchitecture, X) -> ad.Var:
    """Network output for a batch ``X`` as a tape node of shape (n,)."""
    h = ad.as_var(np.atleast_2d(X))
    for (ws, shape, bsl), act in zip(arch.slices(), arch.activations):
        h = ad.ACTIVATIONS[act](ad.affine(h, ad.take(theta, ws, shape), ad.take(theta, bsl)))
    return ad.take(h, (slice(None), 0))


def forward_batch(params, arch: NetworkArchitecture, X) -> np.ndarray:
    """Network output for each row of ``X`` (plain numpy, no tape)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != arch.n_inputs:
        raise ValueError(f"input dimension {X.shape[1]} != {arch.n_inputs}")
    Ws, bs = unpack(params, arch)
    h = X
    for W, b, act in zip(Ws, bs, arch.activations):
        z = h @ W + b
        if act == "tanh":
            h = np.tanh(z)
        elif act == "sigmoid":
            h = ad._sigmoid(z)
        else:
            h = z
    return h[:, 0]


def forward(params, arch: NetworkArchitecture, x) -> float:
    """Network output ``f(x)`` for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != arch.n_inputs:
        raise ValueError(f"input dimension {x.size} != {arch.n_inputs}")
    return float(forward_batch(params, arch, x[None, :])[0])


def save_params(path, params, arch: NetworkArchitecture):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"architecture": arch.to_dict(), "params": [float(v) for v in params]}, fh)


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    arch = NetworkArchitecture.from_dict(d["architecture"])
    params = np.array(d["params"], dtype=float)
    unpack(params, arch)
    return params, arch


@dataclass(frozen=True)
class Standardizer:
    """Column-wise shift and scale learned on training covariates."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.mean.size:
            raise ValueError(f"covariate dimension {X.shape[1]} does not match the "
                             f"training dimension {self.mean.size}")
        return (X - self.mean) / self.scale

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float))


def long_design(Z, m, y=None):
    """Stack ``n`` standardized covariate rows against ``m`` time points.

    Row ``i * m + j`` holds ``Z[i]`` followed by a one-hot block for time ``j``;
    ``y[i, j]`` becomes the matching target.
    """
    Z = np.atleast_2d(Z)
    n = Z.shape[0]
    X = np.hstack([np.repeat(Z, m, axis=0), np.tile(np.eye(m), (n, 1))])
    if y is None:
        return X
    return X, np.asarray(y, dtype=float).reshape(n * m)


@dataclass
class PointFitConfig:
    iterations: int = 2000
    lr: float = 0.01
    init_sd: float = 0.1


@dataclass
class PointFitResult:
    params: np.ndarray
    loss_trace: list = field(default_factory=list)


def mse_objective(arch, X, y):
    def objective(theta):
        return ad.mean(ad.square(forward_tape(theta, arch, X) - y))
    return objective


def point_fit(X, y, arch: NetworkArchitecture, config: PointFitConfig | None = None,
              seed=0) -> PointFitResult:
    """Minimise mean squared error between network output and targets.

    Initial weights are independent ``N(0, init_sd^2)`` draws; updates are
    full-batch Adam steps for a fixed number of iterations.
    """
    config = config or PointFitConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, config.init_sd, arch.n_weights)
    opt = Adam(theta.size, lr=config.lr)
    objective = mse_objective(arch, X, y)
    trace = []
    for it in range(config.iterations):
        loss, g = ad.value_and_grad(objective, theta)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient at point-fit iteration {it}")
        trace.append(loss)
        theta = theta + opt.step(g)
    return PointFitResult(theta, trace)
