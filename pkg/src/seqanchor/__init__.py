"""Anchored ensembles (AE) and sequential anchored ensembles (SAE) for
approximate Bayesian neural-network posteriors, with exact desk-scale
reference posteriors and predictive comparison metrics."""

from .anchor_chain import Anchor, ChainConfig, CoordinateStreams, mh_update, run_chain, sample_prior
from .ensembling import (
    BudgetPlan,
    Ensemble,
    TrainConfig,
    allocate_budget,
    load_ensemble,
    save_ensemble,
    train,
    train_anchored_ensemble,
    train_sequential_anchored_ensemble,
)
from .metrics import PredictiveDensity, agreement, ensemble_predictive, regression_report, total_variation, wasserstein2
from .nn_core import Dataset, MlpArchitecture, forward, grad_log_likelihood, log_likelihood, predict_proba
from .objectives import GaussianPrior, anchored_loss, grad_anchored_loss, log_prior_density
from .oracle import GaussianPosterior, GridPosterior, grid_posterior, linear_posterior, reference_predictive

__version__ = "0.1.0"
