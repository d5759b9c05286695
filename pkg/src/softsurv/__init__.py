"""Semiparametric survival inference with a soft-tree hazard ensemble.

The hazard of subject j in cluster i is modeled as

    lambda(t | W_i; x) = lambda0(t) * W_i * Phi(l(t, x))

where ``lambda0`` is a parametric baseline hazard (exponential or Weibull),
``W_i`` is a gamma-distributed cluster frailty with unit mean, ``Phi`` is the
standard normal CDF, and ``l(t, x)`` is an ensemble of soft decision trees
over time and covariates.  Posterior inference runs a Gibbs sampler built on
two layers of data augmentation: rejected points of a thinned Poisson process
and truncated-normal probit latents.  Interval- and left-censored event times
are imputed each sweep as the first accepted point of the thinned process on
the censoring interval.
"""

from .augment import AugmentedSubject, SubjectRecord
from .forest import Forest, ForestHyper, InputScaler, SoftTree
from .hazard import BaselineHazard, FrailtyState
from .predict import (
    SurvivalCurve,
    lpml,
    predict_survival,
    rmse_survival,
    rmst,
    survival_matrix,
)
from .rng import RngStream
from .sampler import FitConfig, GibbsSampler, PosteriorDraws, fit, fit_no_frailty
from .simbench import BenchReport, SimConfig, friedman, generate, run_benchmark
from .store import load_draws, save_draws

__version__ = "0.1.0"

__all__ = [
    "AugmentedSubject",
    "BaselineHazard",
    "BenchReport",
    "FitConfig",
    "Forest",
    "ForestHyper",
    "FrailtyState",
    "GibbsSampler",
    "InputScaler",
    "PosteriorDraws",
    "RngStream",
    "SimConfig",
    "SoftTree",
    "SubjectRecord",
    "SurvivalCurve",
    "fit",
    "fit_no_frailty",
    "friedman",
    "generate",
    "load_draws",
    "lpml",
    "predict_survival",
    "rmse_survival",
    "rmst",
    "run_benchmark",
    "save_draws",
    "survival_matrix",
]
