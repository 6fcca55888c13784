"""Bayesian Gaussian process regression with bridge (lq) regularization.

The ``sph`` sampler constrains the mean coefficients and inverse length
scales to lq balls and explores them with spherical HMC; the ``hmc``
sampler uses Gaussian shrinkage priors with Euclidean HMC.
"""
from ._backend import BACKEND
from .benchmarks import (
    BENCHMARKS,
    BenchmarkFunction,
    eval_borehole,
    eval_otl,
    eval_piston,
    get_benchmark,
    pad_inert_dimensions,
    simulate_benchmark,
    simulate_prespecified_gp,
)
from .design import DesignSpec, maximin_lhs, random_lhs
from .errors import (
    BridgeGPError,
    ChainAbort,
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    NumericError,
    RankDeficiencyError,
)
from .evaluation import (
    ExperimentConfig,
    PosteriorSummary,
    posterior_predict,
    replicate_experiment,
    standardized_rmse,
    summarize,
    weighted_quantile,
)
from .gibbs import ChainTrace, GPModel, McmcConfig, PriorConfig, run_chain, run_two_chains
from .gp_core import BasisSpec, Dataset, GPParams, neg_log_likelihood, predict

__version__ = "0.1.0"
