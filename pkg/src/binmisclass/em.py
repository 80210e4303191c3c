"""EM estimation of the misclassification model.

The E-step computes posterior class probabilities for every subject.  The
expected complete-data log-likelihood then separates into three weighted
logistic regressions: one for ``beta`` with soft responses, and one per
true class for the observation coefficients with the observed indicator
as response and the class posterior as case weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit

from .glm import WeightedLogitProblem, fit_weighted_logistic
from .labelswitch import correct_label_switching
from .model import (
    ObservedDataset,
    ParameterSet,
    average_rates,
    observed_loglik,
    observed_score,
    posterior_class_probs,
    prevalence,
)
from .results import FitResult, names_for

EMPTY_COMPONENT_FRACTION = 1e-6


@dataclass(frozen=True)
class EmConfig:
    """Controls for :func:`fit_em`.

    ``init`` is ``"naive-start"``, ``"random-starts"`` (``n_starts`` EM runs
    from Uniform(-2, 2) coefficients, best log-likelihood kept) or an
    explicit :class:`ParameterSet`.
    """

    max_iter: int = 1500
    loglik_tol: float = 1e-7
    param_tol: float = 1e-6
    init: object = "naive-start"
    n_starts: int = 5
    seed: int = 0
    inner_max_iter: int = 100
    inner_tol: float = 1e-8

    def __post_init__(self):
        if self.loglik_tol <= 0 or self.param_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if isinstance(self.init, str) and self.init not in ("naive-start", "random-starts"):
            raise ValueError(f"unknown init strategy {self.init!r}")


@dataclass(frozen=True)
class PosteriorWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[1] != 2:
            raise ValueError("weights must be an n x 2 matrix")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class MStepResult:
    params: ParameterSet
    flags: tuple = ()


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    rank_deficient: bool


def e_step(params: ParameterSet, data: ObservedDataset) -> PosteriorWeights:
    return PosteriorWeights(posterior_class_probs(params, data))


def m_step(weights: PosteriorWeights, data: ObservedDataset, prev: ParameterSet,
           max_iter=100, tol=1e-8) -> MStepResult:
    """Maximise the three pieces of the expected complete-data log-likelihood.

    Each fit is warm-started at ``prev``.  A gamma block whose class carries
    almost no posterior mass is left at its previous value.
    """
    w = weights.w
    flags = []
    beta_fit = fit_weighted_logistic(
        WeightedLogitProblem(data.x_matrix, w[:, 0]), prev.beta, max_iter, tol)
    if not beta_fit.converged:
        flags.append(f"beta: {beta_fit.message}")
    new = {"beta": beta_fit.coefficients}

    y1 = data.ystar1
    min_mass = EMPTY_COMPONENT_FRACTION * data.n
    for j, block in ((0, "gamma1"), (1, "gamma2")):
        old = getattr(prev, block)
        if old is None:
            new[block] = None
            continue
        cw = w[:, j]
        if cw.sum() < min_mass or np.count_nonzero(cw > 0) < old.size:
            flags.append(f"{block}: empty component, held fixed")
            new[block] = old
            continue
        fit = fit_weighted_logistic(WeightedLogitProblem(data.z_matrix, y1, cw),
                                    old, max_iter, tol)
        if not fit.converged:
            flags.append(f"{block}: {fit.message}")
        new[block] = fit.coefficients
    return MStepResult(ParameterSet(**new), tuple(flags))


def naive_start(data: ObservedDataset, blocks=("beta", "gamma1", "gamma2")) -> ParameterSet:
    """Beta from the logistic fit of Y* on X; gammas at 80% / 20% recording rates."""
    fit = fit_weighted_logistic(WeightedLogitProblem(data.x_matrix, data.ystar1))
    pz = data.z_matrix.shape[1]
    g1 = np.zeros(pz)
    g1[0] = logit(0.8)
    g2 = np.zeros(pz)
    g2[0] = logit(0.2)
    return ParameterSet(fit.coefficients,
                        g1 if "gamma1" in blocks else None,
                        g2 if "gamma2" in blocks else None)


def random_start(data: ObservedDataset, rng, blocks=("beta", "gamma1", "gamma2")) -> ParameterSet:
    px, pz = data.x_matrix.shape[1], data.z_matrix.shape[1]
    draw = lambda d: rng.uniform(-2.0, 2.0, size=d)
    return ParameterSet(draw(px),
                        draw(pz) if "gamma1" in blocks else None,
                        draw(pz) if "gamma2" in blocks else None)


@dataclass
class EmTrace:
    params: ParameterSet
    loglik: float
    converged: bool
    iterations: int
    loglik_path: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def run_em(data: ObservedDataset, init: ParameterSet, config: EmConfig) -> EmTrace:
    """Iterate E and M steps from ``init`` without any label correction."""
    params = init
    ll = observed_loglik(params, data)
    path = [ll]
    flags = []
    for it in range(1, config.max_iter + 1):
        weights = e_step(params, data)
        ms = m_step(weights, data, params, config.inner_max_iter, config.inner_tol)
        flags.extend(f"iter {it}: {f}" for f in ms.flags)
        new_ll = observed_loglik(ms.params, data)
        path.append(new_ll)
        step = float(np.max(np.abs(ms.params.as_vector() - params.as_vector())))
        gain = new_ll - ll
        params, ll = ms.params, new_ll
        if abs(gain) < config.loglik_tol or step < config.param_tol:
            return EmTrace(params, ll, True, it, path, flags)
    return EmTrace(params, ll, False, config.max_iter, path, flags)


def estimate_covariance(params: ParameterSet, data: ObservedDataset) -> CovarianceEstimate:
    """Inverse observed information at ``params``.

    The Hessian is built from central differences of the analytic score
    with steps ``1e-5 * (1 + |theta|)``.  Directions with non-positive
    curvature are dropped (pseudo-inverse) and flagged.
    """
    theta = params.as_vector()
    d = theta.size
    hess = np.empty((d, d))
    for a in range(d):
        h = 1e-5 * (1.0 + abs(theta[a]))
        up, dn = theta.copy(), theta.copy()
        up[a] += h
        dn[a] -= h
        hess[:, a] = (observed_score(params.with_vector(up), data)
                      - observed_score(params.with_vector(dn), data)) / (2 * h)
    info = -0.5 * (hess + hess.T)
    vals, vecs = np.linalg.eigh(info)
    cutoff = max(vals.max(), 0.0) * 1e-12
    keep = vals > cutoff
    if not np.all(np.isfinite(vals)) or not keep.any():
        return CovarianceEstimate(np.full((d, d), np.nan), True)
    cov = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    return CovarianceEstimate(0.5 * (cov + cov.T), bool(not keep.all()))


def _best_trace(data, config, blocks):
    if isinstance(config.init, ParameterSet):
        return run_em(data, config.init, config), 1
    if config.init == "naive-start":
        return run_em(data, naive_start(data, blocks), config), 1
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.n_starts):
        tr = run_em(data, random_start(data, rng, blocks), config)
        if best is None or tr.loglik > best.loglik:
            best = tr
    return best, config.n_starts


def finish_fit(method, data, params, trace, correction, n_starts=1) -> FitResult:
    cov = estimate_covariance(params, data)
    diagnostics = {
        "n": data.n,
        "starts": n_starts,
        "loglik_path_length": len(trace.loglik_path),
        "min_loglik_increment": (float(np.min(np.diff(trace.loglik_path)))
                                 if len(trace.loglik_path) > 1 else None),
        "inner_flags": trace.flags[-20:],
    }
    return FitResult(
        method=method,
        params=params,
        covariance=cov.matrix,
        rates=average_rates(params, data),
        prevalence=prevalence(params, data),
        correction=correction,
        loglik=observed_loglik(params, data),
        converged=trace.converged,
        iterations=trace.iterations,
        names=names_for(params, data.x_names, data.z_names),
        rank_deficient=cov.rank_deficient,
        diagnostics=diagnostics,
    )


def fit_em(data: ObservedDataset, config: EmConfig | None = None) -> FitResult:
    """Maximum likelihood fit with bidirectional misclassification.

    The final estimate is passed through the label-switching correction,
    so the reported orientation has average sensitivity and specificity
    above one half whenever that is attainable.
    """
    config = EmConfig() if config is None else config
    if data.distinct_covariate_patterns() < 7:
        warnings.warn("fewer than 7 distinct covariate patterns; the model may not be identified",
                      stacklevel=2)
    trace, starts = _best_trace(data, config, ("beta", "gamma1", "gamma2"))
    corrected, report = correct_label_switching(trace.params, data)
    if not trace.converged:
        warnings.warn(f"EM did not converge in {config.max_iter} iterations", stacklevel=2)
    return finish_fit("em", data, corrected, trace, report, starts)
