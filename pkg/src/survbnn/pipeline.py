"""End-to-end fitting, prediction and simulation-study replicates."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .advi import (ADVIConfig, BNNModel, PosteriorPrediction, PriorSpec, VariationalState,
                   advi_fit, sample_outputs)
from .data import SurvivalDataset
from .estimators import TimeGrid, decile_grid
from .metrics import evaluate_replicate
from .network import (NetworkArchitecture, PointFitConfig, Standardizer, long_design,
                      point_fit)
from .pseudo import PseudoValueMatrix, ipcw_pseudo, jackknife_pseudo
from .simulation import SimConfig, simulate_case, survival_from_risk, train_test_split
from .weights import censoring_weights


def derive_seed(master, *labels) -> int:
    """63-bit seed: first 8 bytes of SHA-256 over ``"master:label1:label2..."``."""
    text = ":".join([str(int(master)), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass
class FitConfig:
    encoding: str = "onehot"          # or "per_timepoint"
    hidden: tuple = (8, 4)
    activations: tuple = ("tanh", "tanh", "sigmoid")
    prior: PriorSpec = field(default_factory=PriorSpec)
    point_fit: PointFitConfig = field(default_factory=PointFitConfig)
    advi: ADVIConfig = field(default_factory=ADVIConfig)
    zeta_init: float = 0.0

    def architecture(self, n_inputs):
        return NetworkArchitecture((n_inputs, *self.hidden, 1), self.activations)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        if "prior" in d:
            kw["prior"] = PriorSpec(**d.pop("prior"))
        if "point_fit" in d:
            kw["point_fit"] = PointFitConfig(**d.pop("point_fit"))
        if "advi" in d:
            kw["advi"] = ADVIConfig(**d.pop("advi"))
        for key in ("hidden", "activations"):
            if key in d:
                kw[key] = tuple(d.pop(key))
        return cls(**kw, **d)


@dataclass
class FittedModel:
    """Everything needed to predict: network, transform, posterior and trace."""

    arch: NetworkArchitecture
    standardizer: Standardizer
    prior: PriorSpec
    grid: TimeGrid
    encoding: str
    states: list
    elbo_traces: list
    init_params: list
    covariate_names: tuple = ()

    def predict(self, covariates, subject_ids=None, n_draws=1000, seed=0, keep_draws=False):
        """Posterior mean and 95% credible band of ``S(t | x)`` on the fit grid."""
        Z = self.standardizer.transform(covariates)
        n, m = Z.shape[0], len(self.grid)
        if subject_ids is None:
            subject_ids = [str(i) for i in range(n)]
        if self.encoding == "onehot":
            draws = sample_outputs(self.states[0], self.arch, long_design(Z, m), n_draws, seed)
            draws = draws.reshape(n_draws, n, m)
        else:
            draws = np.stack([sample_outputs(st, self.arch, Z, n_draws, derive_seed(seed, j))
                              for j, st in enumerate(self.states)], axis=2)
        return PosteriorPrediction.from_draws(subject_ids, self.grid, draws, keep_draws)

    def to_dict(self):
        return {
            "architecture": self.arch.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "prior": self.prior.to_dict(),
            "grid": self.grid.points.tolist(),
            "encoding": self.encoding,
            "states": [s.to_dict() for s in self.states],
            "elbo_traces": [list(map(float, t)) for t in self.elbo_traces],
            "init_params": [list(map(float, p)) for p in self.init_params],
            "covariate_names": list(self.covariate_names),
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d):
        return cls(
            arch=NetworkArchitecture.from_dict(d["architecture"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            prior=PriorSpec(**d["prior"]),
            grid=TimeGrid(d["grid"]),
            encoding=d["encoding"],
            states=[VariationalState.from_dict(s) for s in d["states"]],
            elbo_traces=d["elbo_traces"],
            init_params=[np.array(p) for p in d["init_params"]],
            covariate_names=tuple(d.get("covariate_names", ())),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_survival_network(data: SurvivalDataset, pseudo: PseudoValueMatrix,
                         config: FitConfig | None = None, seed=0) -> FittedModel:
    """Pre-fit the network by least squares, then run ADVI from that fit."""
    config = config or FitConfig()
    if tuple(pseudo.subject_ids) != tuple(data.ids):
        pos = {sid: k for k, sid in enumerate(pseudo.subject_ids)}
        try:
            order = [pos[sid] for sid in data.ids]
        except KeyError as exc:
            raise ValueError(f"no pseudo values for subject {exc.args[0]!r}") from None
        pseudo = PseudoValueMatrix(data.ids, pseudo.grid, pseudo.values[order])
    std = Standardizer.fit(data.covariates)
    Z = std.transform(data.covariates)
    m = len(pseudo.grid)
    if config.encoding == "onehot":
        X, y = long_design(Z, m, pseudo.values)
        problems = [(X, y)]
        arch = config.architecture(Z.shape[1] + m)
    elif config.encoding == "per_timepoint":
        problems = [(Z, pseudo.values[:, j]) for j in range(m)]
        arch = config.architecture(Z.shape[1])
    else:
        raise ValueError(f"unknown time encoding {config.encoding!r}")
    states, traces, inits = [], [], []
    for j, (X, y) in enumerate(problems):
        pf = point_fit(X, y, arch, config.point_fit, seed=derive_seed(seed, "init", j))
        init = np.append(pf.params, config.zeta_init)
        res = advi_fit(BNNModel(arch, X, y, config.prior), init, config.advi,
                       seed=derive_seed(seed, "advi", j))
        states.append(res.state)
        traces.append(res.elbo_trace)
        inits.append(init)
    return FittedModel(arch, std, config.prior, pseudo.grid, config.encoding, states, traces,
                       inits, data.covariate_names)


@dataclass
class StudyConfig:
    """One simulation-study arm: data generation, pseudo values and fit."""

    case_id: int = 1
    n: int | None = None
    pseudo: str = "plain"                    # plain | ipcw
    provider: str = "marginal_reverse_km"
    strata: object = None
    g_floor: float = 0.05
    n_draws: int = 1000
    fit: FitConfig = field(default_factory=FitConfig)

    def sim_config(self, seed):
        over = {"seed": seed}
        if self.n is not None:
            over["n"] = self.n
        return SimConfig.for_case(self.case_id, **over)


def make_pseudo(train: SurvivalDataset, grid: TimeGrid, method="plain", provider="marginal_reverse_km",
                strata=None, g_floor=0.05, weight_path=None):
    if method == "plain":
        return jackknife_pseudo(train, grid)
    if method == "ipcw":
        w = censoring_weights(train, provider, strata=strata, path=weight_path, g_floor=g_floor)
        return ipcw_pseudo(train, grid, w)
    raise ValueError(f"pseudo method {method!r} cannot be used as a modelling target")


def run_replicate(study: StudyConfig, seed: int, sim=None):
    """Simulate, split 75/25, fit on train, predict on test, score against the truth."""
    sim = sim or simulate_case(study.sim_config(derive_seed(seed, "sim")))
    train_idx, test_idx = train_test_split(sim.dataset.n, derive_seed(seed, "split"))
    train = sim.dataset.subset(train_idx)
    test = sim.dataset.subset(test_idx)
    grid = decile_grid(train)
    pv = make_pseudo(train, grid, study.pseudo, study.provider, study.strata, study.g_floor)
    model = fit_survival_network(train, pv, study.fit, seed=derive_seed(seed, "fit"))
    pred = model.predict(test.covariates, test.ids, study.n_draws, seed=derive_seed(seed, "predict"))
    cfg = sim.config
    truth = survival_from_risk(sim.f_x[test_idx], grid.points, sim.shape[test_idx], cfg.b, cfg.beta)
    return evaluate_replicate(pred, truth), pred, truth
