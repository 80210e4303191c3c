"""Comparator estimators that ignore or restrict the misclassification.

``naive`` regresses Y* on X directly.  The two one-directional EM fits
assume a single error direction: perfect specificity (a true class 2 is
never recorded as 1, only ``gamma1`` estimated) or perfect sensitivity (a
true class 1 is never recorded as 2, only ``gamma2`` estimated).  With one
direction removed the likelihood has a single labelling, so no
label-switching correction is applied.
"""

from __future__ import annotations

import enum

from .em import EmConfig, finish_fit, naive_start, run_em
from .glm import WeightedLogitProblem, fit_weighted_logistic
from .model import ObservedDataset, ParameterSet


class BaselineKind(str, enum.Enum):
    NAIVE = "naive"
    PERFECT_SPECIFICITY = "perfect-specificity-em"
    PERFECT_SENSITIVITY = "perfect-sensitivity-em"


_RESTRICTED_BLOCKS = {
    "specificity": ("beta", "gamma1"),
    "sensitivity": ("beta", "gamma2"),
}


class _Trace:
    def __init__(self, converged, iterations):
        self.converged = converged
        self.iterations = iterations
        self.loglik_path = []
        self.flags = []


def fit_naive(data: ObservedDataset):
    sol = fit_weighted_logistic(WeightedLogitProblem(data.x_matrix, data.ystar1))
    params = ParameterSet(sol.coefficients, None, None)
    return finish_fit(BaselineKind.NAIVE.value, data, params,
                      _Trace(sol.converged, sol.iterations), None)


def fit_one_directional_em(data: ObservedDataset, fixed: str, config: EmConfig | None = None):
    """EM under a one-directional error model.

    ``fixed`` names the property assumed perfect: ``"specificity"`` or
    ``"sensitivity"``.
    """
    if fixed not in _RESTRICTED_BLOCKS:
        raise ValueError("fixed must be 'specificity' or 'sensitivity'")
    config = EmConfig() if config is None else config
    blocks = _RESTRICTED_BLOCKS[fixed]
    init = config.init if isinstance(config.init, ParameterSet) else naive_start(data, blocks)
    trace = run_em(data, init, config)
    kind = (BaselineKind.PERFECT_SPECIFICITY if fixed == "specificity"
            else BaselineKind.PERFECT_SENSITIVITY)
    return finish_fit(kind.value, data, trace.params, trace, None)


def fit_baseline(data: ObservedDataset, kind, config: EmConfig | None = None):
    kind = BaselineKind(kind)
    if kind is BaselineKind.NAIVE:
        return fit_naive(data)
    if kind is BaselineKind.PERFECT_SPECIFICITY:
        return fit_one_directional_em(data, "specificity", config)
    return fit_one_directional_em(data, "sensitivity", config)
