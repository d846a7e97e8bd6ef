"""Command line front end: ``survbnn simulate|pseudo|fit|predict|evaluate``.

Every subcommand reads its settings from built-in defaults, then an optional
JSON file (``--config``), then command line flags, in increasing priority.
The effective settings are echoed to ``<out>/effective_config.json``; passing
that file back with ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .advi import ADVIConfig, PriorSpec
from .data import load_dataset
from .estimators import TimeGrid, decile_grid
from .metrics import aggregate
from .network import PointFitConfig
from .pipeline import FitConfig, FittedModel, StudyConfig, derive_seed, fit_survival_network, run_replicate
from .plotting import group_summaries, survival_svg
from .pseudo import conditional_ipcw_pseudo, ipcw_pseudo, jackknife_pseudo, read_pseudo_csv
from .simulation import SimConfig, simulate_case, train_test_split
from .weights import censoring_weights


class UsageError(Exception):
    """Invalid settings; reported with exit status 2."""


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _json(text):
    return json.loads(text) if isinstance(text, str) else text


def _bool(text):
    if isinstance(text, bool):
        return text
    return str(text).lower() in ("1", "true", "yes", "on")


# name -> (default, parser, help)
COMMON = {
    "seed": (0, int, "master random seed"),
    "out": (".", str, "output directory"),
}
SETTINGS = {
    "simulate": {
        "case": (1, int, "simulation case 1-7"),
        "n": (None, int, "sample size (default: the case's size)"),
        "train_fraction": (0.75, float, "fraction of subjects in the training split"),
    },
    "pseudo": {
        "data": (None, str, "dataset CSV"),
        "method": ("plain", str, "plain | ipcw | conditional"),
        "provider": ("marginal_reverse_km", str,
                     "unit | marginal_reverse_km | stratified_reverse_km | external"),
        "strata": (None, _json, "JSON strata spec for the stratified provider"),
        "weights": (None, str, "CSV id,time,weight for the external provider"),
        "g_floor": (0.05, float, "floor on the censoring survival estimate"),
        "estimator": (None, str, "curve to jackknife: product_limit (plain default) "
                                 "or exp, i.e. exp(-cumulative hazard) (IPCW default)"),
        "grid": (None, _floats, "comma-separated time points (default: KM deciles)"),
    },
    "fit": {
        "data": (None, str, "training dataset CSV"),
        "pseudo": (None, str, "pseudo-value CSV"),
        "encoding": ("onehot", str, "onehot | per_timepoint"),
        "iterations": (10000, int, "ADVI iterations"),
        "lr": (0.01, float, "ADVI learning rate"),
        "n_mc": (1, int, "Monte Carlo draws per ELBO gradient"),
        "tol": (1e-5, float, "relative ELBO change for early stopping (<= 0 disables)"),
        "point_fit_iterations": (2000, int, "iterations of the least-squares pre-fit"),
        "sigma_w": (1.0, float, "prior sd of weights"),
        "sigma_b": (1.0, float, "prior sd of biases"),
        "sigma_max": (0.2, float, "upper bound of the uniform prior on the noise sd"),
    },
    "predict": {
        "fit": (None, str, "fit artifact JSON"),
        "data": (None, str, "CSV with an id column and the training covariates"),
        "draws": (1000, int, "posterior draws"),
        "plot_by": (None, str, "binary covariate to stratify an SVG plot by"),
    },
    "evaluate": {
        "case": (1, int, "simulation case 1-7"),
        "n": (None, int, "sample size per replicate"),
        "replicates": (20, int, "number of replicates"),
        "pseudo": ("plain", str, "plain | ipcw"),
        "provider": ("marginal_reverse_km", str, "censoring weight provider for ipcw"),
        "strata": (None, _json, "JSON strata spec for the stratified provider"),
        "g_floor": (0.05, float, "floor on the censoring survival estimate"),
        "encoding": ("onehot", str, "onehot | per_timepoint"),
        "iterations": (10000, int, "ADVI iterations"),
        "lr": (0.01, float, "ADVI learning rate"),
        "tol": (1e-5, float, "relative ELBO change for early stopping (<= 0 disables)"),
        "point_fit_iterations": (2000, int, "iterations of the least-squares pre-fit"),
        "sigma_w": (1.0, float, "prior sd of weights"),
        "sigma_b": (1.0, float, "prior sd of biases"),
        "sigma_max": (0.2, float, "upper bound of the uniform prior on the noise sd"),
        "draws": (1000, int, "posterior draws per prediction"),
    },
}


def build_parser():
    parser = argparse.ArgumentParser(prog="survbnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, spec in SETTINGS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON settings file")
        for key, (default, _, help_) in {**COMMON, **spec}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=f"{help_} (default: {default})")
    return parser


def resolve_settings(command, args):
    """Defaults, then the JSON config file, then explicit flags."""
    spec = {**COMMON, **SETTINGS[command]}
    settings = {k: v[0] for k, v in spec.items()}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            from_file = json.load(fh)
        unknown = sorted(set(from_file) - set(spec))
        if unknown:
            raise UsageError(f"unknown config keys {unknown}")
        settings.update(from_file)
    for key in spec:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    for key, (_, conv, _) in spec.items():
        if settings[key] is not None:
            try:
                settings[key] = conv(settings[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
    return settings


def _outdir(settings):
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(settings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _require(settings, *keys):
    missing = [k for k in keys if not settings.get(k)]
    if missing:
        raise UsageError(f"missing required settings {missing}")


def _fit_config(s):
    return FitConfig(
        encoding=s["encoding"],
        prior=PriorSpec(sigma_W=s["sigma_w"], sigma_b=s["sigma_b"], sigma_max=s["sigma_max"]),
        point_fit=PointFitConfig(iterations=s["point_fit_iterations"]),
        advi=ADVIConfig(iterations=s["iterations"], lr=s["lr"], n_mc=s.get("n_mc", 1),
                        tol=s["tol"] if s["tol"] and s["tol"] > 0 else None),
    )


def cmd_simulate(s):
    if s["case"] not in range(1, 8):
        raise UsageError(f"case must be between 1 and 7, got {s['case']}")
    over = {"seed": s["seed"]}
    if s["n"] is not None:
        over["n"] = s["n"]
    sim = simulate_case(SimConfig.for_case(s["case"], **over))
    tr, te = train_test_split(sim.dataset.n, derive_seed(s["seed"], "split"), s["train_fraction"])
    out = _outdir(s)
    sim.dataset.subset(tr).to_csv(out / "train.csv")
    sim.dataset.subset(te).to_csv(out / "test.csv")
    sim.write_latent_csv(out / "latent_train.csv", tr)
    sim.write_latent_csv(out / "latent_test.csv", te)
    with open(out / "generator.json", "w", encoding="utf-8") as fh:
        json.dump(sim.config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_pseudo(s):
    _require(s, "data")
    data = load_dataset(s["data"])
    grid = TimeGrid(s["grid"]) if s["grid"] else decile_grid(data)
    method = s["method"]
    est = s["estimator"] or ("product_limit" if method == "plain" else "exp")
    if est not in ("product_limit", "exp"):
        raise UsageError(f"unknown estimator {est!r}")
    out = _outdir(s)
    if method == "plain":
        plain_name = {"product_limit": "kaplan_meier", "exp": "nelson_aalen"}[est]
        jackknife_pseudo(data, grid, plain_name).to_csv(out / "pseudo.csv")
        return
    if s["provider"] == "external" and not s["weights"]:
        raise UsageError("the external provider needs --weights")
    w = censoring_weights(data, s["provider"], strata=s["strata"], path=s["weights"],
                          g_floor=s["g_floor"])
    if method == "ipcw":
        ipcw_pseudo(data, grid, w, est).to_csv(out / "pseudo.csv")
    elif method == "conditional":
        # one row per (subject, interval); the interval is (start, time]
        pts = grid.points
        with open(out / "pseudo.csv", "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["id", "start", "time", "pseudo_value"])
            for block in conditional_ipcw_pseudo(data, grid, w, est):
                end = float(block.grid.points[0])
                start = float(pts[np.searchsorted(pts, end) - 1])
                for sid, v in zip(block.subject_ids, block.values[:, 0]):
                    wr.writerow([sid, repr(start), repr(end), repr(float(v))])
    else:
        raise UsageError(f"unknown pseudo method {method!r}")


def cmd_fit(s):
    _require(s, "data", "pseudo")
    data = load_dataset(s["data"])
    pv = read_pseudo_csv(s["pseudo"])
    model = fit_survival_network(data, pv, _fit_config(s), seed=s["seed"])
    out = _outdir(s)
    model.save(out / "fit.json")
    with open(out / "elbo.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["network", "iteration", "elbo"])
        for k, trace in enumerate(model.elbo_traces):
            for it, v in enumerate(trace):
                w.writerow([k, it, repr(float(v))])


def _read_covariates(path, names):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    missing = [c for c in names if c not in rows[0]]
    if missing:
        raise ValueError(f"{path}: covariate dimension mismatch, missing columns {missing}")
    ids = [r.get("id", str(k)) for k, r in enumerate(rows)]
    return ids, np.array([[float(r[c]) for c in names] for r in rows])


def cmd_predict(s):
    _require(s, "fit", "data")
    model = FittedModel.load(s["fit"])
    ids, X = _read_covariates(s["data"], model.covariate_names)
    pred = model.predict(X, ids, s["draws"], seed=s["seed"], keep_draws=bool(s["plot_by"]))
    out = _outdir(s)
    pred.to_csv(out / "predictions.csv")
    if s["plot_by"]:
        col = list(model.covariate_names).index(s["plot_by"]) if s["plot_by"] in model.covariate_names else None
        if col is None:
            raise UsageError(f"unknown plot_by column {s['plot_by']!r}")
        labels = [f"{s['plot_by']}={v:g}" for v in X[:, col]]
        survival_svg(group_summaries(pred, labels), out / "survival.svg",
                     title=f"Survival by {s['plot_by']}")


def study_from_settings(s):
    if s["case"] not in range(1, 8):
        raise UsageError(f"case must be between 1 and 7, got {s['case']}")
    return StudyConfig(case_id=s["case"], n=s["n"], pseudo=s["pseudo"], provider=s["provider"],
                       strata=s["strata"], g_floor=s["g_floor"], n_draws=s["draws"],
                       fit=_fit_config(s))


def replicate_seed(master, r):
    return derive_seed(master, "replicate", r)


def cmd_evaluate(s):
    study = study_from_settings(s)
    reps = [run_replicate(study, replicate_seed(s["seed"], r))[0] for r in range(s["replicates"])]
    report = aggregate(reps)
    out = _outdir(s)
    report.to_csv(out / "report.csv")
    report.to_json(out / "report.json")


COMMANDS = {"simulate": cmd_simulate, "pseudo": cmd_pseudo, "fit": cmd_fit,
            "predict": cmd_predict, "evaluate": cmd_evaluate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args.command, args)
        COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single-line report for every failure
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
