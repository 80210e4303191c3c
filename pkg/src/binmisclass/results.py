"""Fit results shared by every estimator, and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .labelswitch import CorrectionReport
from .model import AverageClassificationRates, ParameterSet, coefficient_names

SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class FitResult:
    """Point estimates, uncertainty and diagnostics from one estimator.

    ``covariance`` is indexed like ``params.as_vector()``; absent gamma
    blocks contribute no rows.
    """

    method: str
    params: ParameterSet
    covariance: np.ndarray
    rates: AverageClassificationRates
    prevalence: float
    correction: CorrectionReport | None
    loglik: float
    converged: bool
    iterations: int
    names: tuple
    rank_deficient: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def standard_errors(self) -> np.ndarray:
        d = np.diag(self.covariance).copy()
        d[d < 0] = np.nan
        return np.sqrt(d)

    def estimates(self) -> dict:
        return dict(zip(self.names, self.params.as_vector()))

    def to_dict(self) -> dict:
        est = self.params.as_vector()
        se = self.standard_errors
        return _clean({
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "coefficients": [
                {"name": nm, "estimate": float(e), "se": float(s)}
                for nm, e, s in zip(self.names, est, se)
            ],
            "params": {
                b: (None if getattr(self.params, b) is None
                    else getattr(self.params, b).tolist())
                for b in ("beta", "gamma1", "gamma2")
            },
            "covariance": self.covariance.tolist(),
            "rates": {"sens": self.rates.sens, "spec": self.rates.spec},
            "prevalence": self.prevalence,
            "correction": None if self.correction is None else self.correction.to_dict(),
            "convergence": {
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "loglik": self.loglik,
                "rank_deficient": bool(self.rank_deficient),
            },
            "diagnostics": self.diagnostics,
        })

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kw)

    def summary_table(self) -> str:
        """Aligned plain-text summary."""
        est, se = self.params.as_vector(), self.standard_errors
        width = max(len(n) for n in self.names)
        lines = [f"method: {self.method}",
                 f"{'coefficient':<{width}}  {'estimate':>10}  {'se':>10}"]
        for nm, e, s in zip(self.names, est, se):
            lines.append(f"{nm:<{width}}  {e:>10.4f}  {s:>10.4f}")
        lines.append(f"P(Y=1) {self.prevalence:.4f}   sensitivity {self.rates.sens:.4f}"
                     f"   specificity {self.rates.spec:.4f}")
        if self.correction is not None:
            c = self.correction
            lines.append(
                f"label switching: flipped={c.flipped} ambiguous={c.ambiguous} "
                f"(pre sens/spec {c.pre_sens:.3f}/{c.pre_spec:.3f}, "
                f"post {c.post_sens:.3f}/{c.post_spec:.3f})"
            )
        lines.append(f"log-likelihood {self.loglik:.4f}   converged={self.converged}"
                     f"   iterations={self.iterations}")
        return "\n".join(lines)


def names_for(params: ParameterSet, x_names, z_names) -> tuple:
    return tuple(coefficient_names(x_names, z_names, params.blocks))


def _clean(obj):
    """Replace non-finite floats by None and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj
