"""Logistic regression with a misclassified binary outcome.

EM and MCMC estimators with label-switching correction, the comparator
estimators they are benchmarked against, and a simulation harness.
"""

__version__ = "0.1.0"

from .model import (
    AverageClassificationRates,
    ObservedDataset,
    ParameterSet,
    ProbabilityGrid,
    complete_loglik,
    compute_probability_grid,
    observed_loglik,
    observed_probability,
    transpose_parameter_set,
)
from .glm import LogitSolution, WeightedLogitProblem, fit_weighted_logistic
from .labelswitch import CorrectionReport, correct_label_switching
from .results import FitResult
from .em import EmConfig, PosteriorWeights, e_step, estimate_covariance, fit_em, m_step
from .mcmc import (
    McmcConfig,
    PosteriorSample,
    PriorSpec,
    fit_mcmc,
    log_prior,
    sample_posterior,
    summarize_posterior,
)
from .baselines import BaselineKind, fit_baseline, fit_naive, fit_one_directional_em
from .simulation import (
    GeneratedDataset,
    ScenarioConfig,
    StudyReport,
    generate_dataset,
    preset,
    run_study,
)
