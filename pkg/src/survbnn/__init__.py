"""Bayesian neural-network survival curves fitted to pseudo-values.

Start with :func:`survbnn.pipeline.fit_survival_network` for modelling, or
:mod:`survbnn.simulation` for synthetic benchmarks.
"""

from .data import DataError, SurvivalDataset, load_dataset
from .estimators import TimeGrid, decile_grid, kaplan_meier, nelson_aalen, reverse_kaplan_meier
from .pipeline import FitConfig, FittedModel, StudyConfig, derive_seed, fit_survival_network
from .pseudo import PseudoValueMatrix, conditional_ipcw_pseudo, ipcw_pseudo, jackknife_pseudo
from .simulation import SimConfig, simulate_case
from .weights import censoring_weights

__version__ = "0.1.0"
