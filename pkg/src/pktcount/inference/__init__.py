from .diagnostics import ess, rhat
from .fit import (
    EmptyStratumError,
    IdentifiabilityError,
    PriorSpec,
    RankDeficientError,
    TrainingDataset,
    fit_log_targets,
    fit_reception_bayes,
    fit_reception_ml,
    log_likelihood,
    log_posterior,
    log_prior,
    posterior_summary,
    write_posterior,
)
from .mcmc import McmcConfig, PosteriorSamples, SamplerError, mcmc_sample

__all__ = [
    "EmptyStratumError", "IdentifiabilityError", "McmcConfig", "PosteriorSamples", "PriorSpec",
    "RankDeficientError", "SamplerError", "TrainingDataset", "ess", "fit_log_targets", "fit_reception_bayes",
    "fit_reception_ml", "log_likelihood", "log_posterior", "log_prior", "mcmc_sample",
    "posterior_summary", "rhat", "write_posterior",
]
