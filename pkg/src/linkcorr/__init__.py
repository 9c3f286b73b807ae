"""Bayesian estimation of link travel-time correlation from incomplete bus runs."""

from .gaussian import GaussianParams, condition, cov_to_corr
from .gibbs import GibbsConfig, PosteriorChain, run_gibbs
from .niw import NIWParams, default_prior, posterior_update
from .observation import Observation, validate

__all__ = [
    "GaussianParams", "condition", "cov_to_corr",
    "GibbsConfig", "PosteriorChain", "run_gibbs",
    "NIWParams", "default_prior", "posterior_update",
    "Observation", "validate",
]
__version__ = "0.1.0"
