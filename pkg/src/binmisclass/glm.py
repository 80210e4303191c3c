"""Weighted logistic regression by damped Newton-Raphson.

Every M-step and every comparator estimator reduces to maximising

    sum_i c_i * [r_i * log(mu_i) + (1 - r_i) * log(1 - mu_i)],
    mu_i = logistic(design_i @ coef),

where the responses ``r_i`` may be soft (posterior weights) and ``c_i`` are
nonnegative case weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

RIDGE = 1e-8


@dataclass(frozen=True)
class WeightedLogitProblem:
    design: np.ndarray
    response: np.ndarray
    case_weights: np.ndarray | None = None

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        if design.ndim != 2:
            raise ValueError("design must be a 2-d array")
        n, d = design.shape
        response = np.asarray(self.response, dtype=float)
        if response.shape != (n,):
            raise ValueError(f"response must have length {n}")
        if np.any(response < 0) or np.any(response > 1):
            raise ValueError("responses must lie in [0, 1]")
        weights = (np.ones(n) if self.case_weights is None
                   else np.asarray(self.case_weights, dtype=float))
        if weights.shape != (n,):
            raise ValueError(f"case_weights must have length {n}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("case weights must be finite and nonnegative")
        if np.count_nonzero(weights > 0) < d:
            raise ValueError(f"need at least {d} rows with positive weight")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "case_weights", weights)

    @property
    def dim(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class LogitSolution:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    message: str = ""


def _softplus(eta):
    return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))


def objective(problem: WeightedLogitProblem, coef) -> float:
    """Weighted Bernoulli log-likelihood at ``coef``."""
    eta = problem.design @ coef
    c, r = problem.case_weights, problem.response
    return float(c @ (r * eta - _softplus(eta)))


def score(problem: WeightedLogitProblem, coef) -> np.ndarray:
    mu = expit(problem.design @ coef)
    return problem.design.T @ (problem.case_weights * (problem.response - mu))


def fit_weighted_logistic(problem: WeightedLogitProblem, init=None, max_iter=100,
                          tol=1e-8) -> LogitSolution:
    """Maximise the weighted logistic likelihood.

    Newton steps are halved (up to 10 times) whenever the objective would
    decrease.  A singular Hessian gets a ``1e-8`` ridge on its diagonal.
    Failure to converge, e.g. under separation, is reported through the
    returned solution rather than raised.
    """
    X, r, c = problem.design, problem.response, problem.case_weights
    coef = np.zeros(problem.dim) if init is None else np.array(init, dtype=float)
    if coef.shape != (problem.dim,):
        raise ValueError(f"init must have length {problem.dim}")

    eta = X @ coef
    obj = float(c @ (r * eta - _softplus(eta)))
    message = "max_iter reached"
    gnorm = np.inf
    for it in range(max_iter + 1):
        mu = expit(eta)
        grad = X.T @ (c * (r - mu))
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol:
            return LogitSolution(coef, True, it, gnorm, "converged")
        if it == max_iter:
            break
        hess = (X * (c * mu * (1.0 - mu))[:, None]).T @ X
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            try:
                step = np.linalg.solve(hess + RIDGE * np.eye(problem.dim), grad)
            except np.linalg.LinAlgError:
                message = "singular Hessian"
                break
        if not np.all(np.isfinite(step)):
            message = "non-finite Newton step"
            break
        t = 1.0
        for _ in range(11):
            cand = coef + t * step
            eta_c = X @ cand
            obj_c = float(c @ (r * eta_c - _softplus(eta_c)))
            # slack absorbs rounding noise once the optimum is reached
            if obj_c >= obj - 1e-12 * (1.0 + abs(obj)):
                break
            t *= 0.5
        else:
            message = "line search failed"
            break
        if obj_c == obj and np.array_equal(cand, coef):
            message = "stalled"
            break
        coef, eta, obj = cand, eta_c, obj_c
    return LogitSolution(coef, False, it, gnorm, message)
