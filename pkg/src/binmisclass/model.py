"""Data model and likelihood machinery for logistic regression with a
misclassified binary outcome.

Two latent classes are modelled.  The true class ``Y`` follows a logistic
regression on ``X`` (class 2 is the reference), and the recorded class
``Y*`` follows a second logistic regression on ``Z`` whose coefficients
depend on the true class:

    logit P(Y = 1 | X)          = X @ beta
    logit P(Y* = 1 | Y = 1, Z)  = Z @ gamma1     (sensitivity side)
    logit P(Y* = 1 | Y = 2, Z)  = Z @ gamma2     (1 - specificity side)

Classes are stored as ``{1, 2}`` at the public boundary; internally column
0 holds class 1 and column 1 holds class 2.

A ``ParameterSet`` may omit ``gamma1`` or ``gamma2``.  An omitted block
means that class is never misrecorded: no ``gamma1`` fixes
``P(Y* = 1 | Y = 1) = 1`` (perfect sensitivity) and no ``gamma2`` fixes
``P(Y* = 1 | Y = 2) = 0`` (perfect specificity).  These degenerate
probabilities are exact and bypass clamping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

PROB_FLOOR = 1e-12


class DimensionError(ValueError):
    """A coefficient block does not match its design matrix."""


class LikelihoodError(ArithmeticError):
    """The log-likelihood could not be evaluated to a finite number."""


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _with_intercept(cols, n):
    if cols is None:
        return np.ones((n, 1))
    cols = np.asarray(cols, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    if cols.shape[0] != n:
        raise DimensionError(f"covariate matrix has {cols.shape[0]} rows, expected {n}")
    return np.column_stack([np.ones(n), cols])


@dataclass(frozen=True)
class ObservedDataset:
    """Observed outcomes and the two design matrices.

    ``x_matrix`` and ``z_matrix`` include the leading intercept column.
    Use :meth:`from_arrays` to build one from raw covariates.
    """

    ystar: np.ndarray
    x_matrix: np.ndarray
    z_matrix: np.ndarray
    x_names: tuple = ()
    z_names: tuple = ()

    def __post_init__(self):
        ystar = np.asarray(self.ystar)
        if ystar.ndim != 1:
            raise DimensionError("ystar must be one-dimensional")
        if not np.all((ystar == 1) | (ystar == 2)):
            raise ValueError("every ystar entry must be 1 or 2")
        ystar = np.array(ystar, dtype=np.int8)
        ystar.setflags(write=False)
        object.__setattr__(self, "ystar", ystar)
        n = ystar.shape[0]
        for label in ("x_matrix", "z_matrix"):
            m = np.asarray(getattr(self, label), dtype=float)
            if m.ndim != 2 or m.shape[0] != n:
                raise DimensionError(f"{label} must have shape ({n}, d), got {m.shape}")
            if not np.all(m[:, 0] == 1.0):
                raise ValueError(f"{label} must carry a leading intercept column of ones")
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{label} contains non-finite entries")
            object.__setattr__(self, label, _readonly(m))
        if not self.x_names:
            object.__setattr__(
                self, "x_names", tuple(f"x{i}" for i in range(1, self.x_matrix.shape[1]))
            )
        if not self.z_names:
            object.__setattr__(
                self, "z_names", tuple(f"z{i}" for i in range(1, self.z_matrix.shape[1]))
            )
        if len(self.x_names) != self.x_matrix.shape[1] - 1:
            raise DimensionError("x_names does not match x_matrix")
        if len(self.z_names) != self.z_matrix.shape[1] - 1:
            raise DimensionError("z_names does not match z_matrix")

    @classmethod
    def from_arrays(cls, ystar, x=None, z=None, x_names=(), z_names=()):
        """Build a dataset from raw covariates, appending intercept columns."""
        ystar = np.asarray(ystar)
        n = ystar.shape[0]
        return cls(ystar, _with_intercept(x, n), _with_intercept(z, n),
                   tuple(x_names), tuple(z_names))

    @property
    def n(self) -> int:
        return int(self.ystar.shape[0])

    @property
    def px(self) -> int:
        return self.x_matrix.shape[1] - 1

    @property
    def pz(self) -> int:
        return self.z_matrix.shape[1] - 1

    @property
    def ystar1(self) -> np.ndarray:
        """Indicator ``I(Y* = 1)`` as floats."""
        return (self.ystar == 1).astype(float)

    def distinct_covariate_patterns(self) -> int:
        """Number of distinct (x, z) rows; two-class identifiability needs 7."""
        rows = np.column_stack([self.x_matrix[:, 1:], self.z_matrix[:, 1:]])
        if rows.shape[1] == 0:
            return 1
        return int(np.unique(rows, axis=0).shape[0])

    def take(self, idx) -> "ObservedDataset":
        idx = np.asarray(idx)
        return ObservedDataset(self.ystar[idx], self.x_matrix[idx], self.z_matrix[idx],
                               self.x_names, self.z_names)


@dataclass(frozen=True)
class ParameterSet:
    """Coefficients of the true-outcome and observation mechanisms.

    ``beta`` belongs to class 1 (class 2 coefficients are fixed at zero and
    never stored).  ``gamma1`` and ``gamma2`` model ``P(Y* = 1 | Y = j, Z)``
    for ``j = 1, 2``; either may be ``None`` (see module docstring).
    """

    beta: np.ndarray
    gamma1: np.ndarray | None
    gamma2: np.ndarray | None

    def __post_init__(self):
        for label in ("beta", "gamma1", "gamma2"):
            v = getattr(self, label)
            if v is None:
                if label == "beta":
                    raise ValueError("beta is required")
                continue
            v = np.atleast_1d(np.array(v, dtype=float))
            if v.ndim != 1:
                raise DimensionError(f"{label} must be a vector")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{label} has non-finite entries")
            v.setflags(write=False)
            object.__setattr__(self, label, v)

    @property
    def blocks(self) -> tuple:
        """Names of the blocks that are present, in vector order."""
        return tuple(b for b in ("beta", "gamma1", "gamma2") if getattr(self, b) is not None)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, b) for b in self.blocks])

    def with_vector(self, vec) -> "ParameterSet":
        """Same layout as ``self``, new values."""
        vec = np.asarray(vec, dtype=float)
        out, start = {}, 0
        for b in ("beta", "gamma1", "gamma2"):
            cur = getattr(self, b)
            if cur is None:
                out[b] = None
                continue
            out[b] = vec[start:start + cur.size]
            start += cur.size
        if start != vec.size:
            raise DimensionError(f"vector has {vec.size} entries, expected {start}")
        return ParameterSet(**out)

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        for b in ("beta", "gamma1", "gamma2"):
            u, v = getattr(self, b), getattr(other, b)
            if (u is None) != (v is None):
                return False
            if u is not None and not np.array_equal(u, v):
                return False
        return True

    __hash__ = None


def coefficient_names(x_names, z_names, blocks=("beta", "gamma1", "gamma2")) -> list:
    """Flat coefficient labels: ``beta_0, beta_x1, gamma_110, gamma_11z1, ...``."""
    names = []
    if "beta" in blocks:
        names += ["beta_0"] + [f"beta_{v}" for v in x_names]
    for j, b in ((1, "gamma1"), (2, "gamma2")):
        if b in blocks:
            names += [f"gamma_1{j}0"] + [f"gamma_1{j}{v}" for v in z_names]
    return names


@dataclass(frozen=True)
class ProbabilityGrid:
    """Per-subject class probabilities.

    ``pi[:, j]`` is ``P(Y = j+1 | X)``; ``pistar_given1[:, k]`` is
    ``P(Y* = k+1 | Y = 1, Z)`` and ``pistar_given2`` the same given ``Y = 2``.
    """

    pi: np.ndarray
    pistar_given1: np.ndarray
    pistar_given2: np.ndarray

    def pistar(self, j: int) -> np.ndarray:
        return self.pistar_given1 if j == 1 else self.pistar_given2


@dataclass(frozen=True)
class AverageClassificationRates:
    """Subject-averaged sensitivity and specificity."""

    sens: float
    spec: float


def clamped_logistic(eta):
    return np.clip(expit(eta), PROB_FLOOR, 1.0 - PROB_FLOOR)


def _check_block(label, coef, design):
    if coef.size != design.shape[1]:
        raise DimensionError(
            f"{label} has {coef.size} coefficients but its design matrix has "
            f"{design.shape[1]} columns"
        )


def _two_col(eta):
    # each column from its own logit so that negating eta swaps columns exactly
    return np.column_stack([clamped_logistic(eta), clamped_logistic(-eta)])


def compute_probability_grid(params: ParameterSet, data: ObservedDataset) -> ProbabilityGrid:
    """Evaluate class and observation probabilities for every subject."""
    _check_block("beta", params.beta, data.x_matrix)
    pi = _two_col(data.x_matrix @ params.beta)
    if params.gamma1 is None:
        s1 = np.column_stack([np.ones(data.n), np.zeros(data.n)])
    else:
        _check_block("gamma1", params.gamma1, data.z_matrix)
        s1 = _two_col(data.z_matrix @ params.gamma1)
    if params.gamma2 is None:
        s2 = np.column_stack([np.zeros(data.n), np.ones(data.n)])
    else:
        _check_block("gamma2", params.gamma2, data.z_matrix)
        s2 = _two_col(data.z_matrix @ params.gamma2)
    return ProbabilityGrid(pi, s1, s2)


def observed_probability(params: ParameterSet, data: ObservedDataset, grid=None) -> np.ndarray:
    """``P(Y*_i = k | X, Z)`` as an n x 2 matrix."""
    g = compute_probability_grid(params, data) if grid is None else grid
    return g.pistar_given1 * g.pi[:, :1] + g.pistar_given2 * g.pi[:, 1:]


def _observed_column(data):
    return (data.ystar - 1).astype(np.intp)


def observed_loglik(params: ParameterSet, data: ObservedDataset) -> float:
    """Observed-data log-likelihood summed over subjects."""
    p = observed_probability(params, data)
    p_obs = p[np.arange(data.n), _observed_column(data)]
    with np.errstate(divide="ignore"):
        terms = np.log(p_obs)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise LikelihoodError(
            f"observed-outcome probability underflowed for subject index {bad[0]}"
        )
    return float(terms.sum())


def posterior_class_probs(params: ParameterSet, data: ObservedDataset, grid=None) -> np.ndarray:
    """``P(Y_i = j | Y*_i, X, Z)`` as an n x 2 matrix."""
    g = compute_probability_grid(params, data) if grid is None else grid
    k = _observed_column(data)
    rows = np.arange(data.n)
    num = np.column_stack([g.pistar_given1[rows, k] * g.pi[:, 0],
                           g.pistar_given2[rows, k] * g.pi[:, 1]])
    w = num / num.sum(axis=1, keepdims=True)
    # second column from the first so rows sum to one to rounding
    w[:, 1] = 1.0 - w[:, 0]
    return w


def observed_score(params: ParameterSet, data: ObservedDataset) -> np.ndarray:
    """Analytic gradient of :func:`observed_loglik` over the present blocks.

    Uses the identity that the observed score equals the complete-data
    score with latent indicators replaced by their posterior means.
    """
    g = compute_probability_grid(params, data)
    w = posterior_class_probs(params, data, grid=g)
    y1 = data.ystar1
    parts = [data.x_matrix.T @ (w[:, 0] - g.pi[:, 0])]
    if params.gamma1 is not None:
        parts.append(data.z_matrix.T @ (w[:, 0] * (y1 - g.pistar_given1[:, 0])))
    if params.gamma2 is not None:
        parts.append(data.z_matrix.T @ (w[:, 1] * (y1 - g.pistar_given2[:, 0])))
    return np.concatenate(parts)


def complete_loglik(params: ParameterSet, data: ObservedDataset, y_true) -> float:
    """Complete-data log-likelihood given the latent classes ``y_true``."""
    y_true = np.asarray(y_true)
    if y_true.shape != (data.n,):
        raise DimensionError(f"y_true must have length {data.n}")
    if not np.all((y_true == 1) | (y_true == 2)):
        raise ValueError("every y_true entry must be 1 or 2")
    g = compute_probability_grid(params, data)
    rows = np.arange(data.n)
    j = (y_true - 1).astype(np.intp)
    k = _observed_column(data)
    p_true = g.pi[rows, j]
    p_obs = np.where(j == 0, g.pistar_given1[rows, k], g.pistar_given2[rows, k])
    with np.errstate(divide="ignore"):
        terms = np.log(p_true) + np.log(p_obs)
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise LikelihoodError(
            f"complete-data probability is zero for subject index {bad[0]}"
        )
    return float(terms.sum())


def transpose_parameter_set(params: ParameterSet) -> ParameterSet:
    """The other likelihood mode: negate ``beta`` and swap the gamma blocks."""
    if params.gamma1 is None or params.gamma2 is None:
        raise ValueError("transposition needs both gamma blocks")
    return ParameterSet(-params.beta, params.gamma2.copy(), params.gamma1.copy())


def average_rates(params: ParameterSet, data: ObservedDataset, grid=None) -> AverageClassificationRates:
    g = compute_probability_grid(params, data) if grid is None else grid
    return AverageClassificationRates(
        sens=float(g.pistar_given1[:, 0].mean()),
        spec=float(g.pistar_given2[:, 1].mean()),
    )


def prevalence(params: ParameterSet, data: ObservedDataset) -> float:
    """Subject-averaged ``P(Y = 1 | X)``."""
    return float(compute_probability_grid(params, data).pi[:, 0].mean())
