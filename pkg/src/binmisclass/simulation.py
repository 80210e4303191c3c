"""Simulated datasets and the Monte Carlo study harness.

Covariates ``(X, Z)`` are bivariate normal with unit variances and
covariance 0.30, after which ``Z`` is replaced by ``|Z|``.  The linear
predictors of the three presets (``1 - 2X`` for the true outcome,
``0.5 + Z`` and ``-0.5 - Z`` or ``-5 - 5Z`` for the observation
mechanism) are read as logits, in keeping with the model definition.

Every random draw comes from a Philox stream keyed by
``(seed, replicate_index, stream)``, so a replicate is reproducible on its
own regardless of execution order or worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .baselines import fit_naive, fit_one_directional_em
from .em import EmConfig, fit_em, finish_fit
from .mcmc import McmcConfig, PriorSpec, fit_mcmc
from .model import ObservedDataset, ParameterSet, coefficient_names
from .results import _clean

METHODS = ("em", "mcmc", "naive", "perfect-spec", "perfect-sens")
STREAM_COVARIATES, STREAM_TRUE, STREAM_OBSERVED, STREAM_EM, STREAM_MCMC = range(5)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    n_realizations: int = 500
    n: int = 1000
    x_mean: float = 0.0
    z_mean: float = 1.5
    covariance: float = 0.30
    beta_true: tuple = (1.0, -2.0)
    gamma1_true: tuple = (0.5, 1.0)
    gamma2_true: tuple = (-0.5, -1.0)
    estimators: tuple = ("em", "naive", "perfect-spec", "perfect-sens")
    prior: PriorSpec = field(default_factory=PriorSpec)
    seed: int = 0
    em: EmConfig = field(default_factory=EmConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.n_realizations <= 0:
            raise ValueError("n_realizations must be positive")
        if not -1.0 < self.covariance < 1.0:
            raise ValueError("covariance must lie in (-1, 1)")
        for label in ("beta_true", "gamma1_true", "gamma2_true"):
            if len(getattr(self, label)) != 2:
                raise ValueError(f"{label} needs an intercept and one slope")
            object.__setattr__(self, label, tuple(float(v) for v in getattr(self, label)))
        bad = [m for m in self.estimators if m not in METHODS + ("oracle",)]
        if bad:
            raise ValueError(f"unknown estimators {bad}; choose from {METHODS}")
        object.__setattr__(self, "estimators", tuple(self.estimators))

    @property
    def truth(self) -> ParameterSet:
        return ParameterSet(np.array(self.beta_true), np.array(self.gamma1_true),
                            np.array(self.gamma2_true))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
               if f.name not in ("prior", "em", "mcmc")}
        out["prior"] = self.prior.to_dict()
        out["em"] = {k: v for k, v in dataclasses.asdict(self.em).items() if k != "init"}
        out["em"]["init"] = self.em.init if isinstance(self.em.init, str) else "explicit"
        out["mcmc"] = dataclasses.asdict(self.mcmc)
        return _clean(out)


PRESETS = {
    "setting1": ScenarioConfig(name="setting1", n=1000, z_mean=1.5),
    "setting2": ScenarioConfig(name="setting2", n=10000, z_mean=2.5),
    "setting3": ScenarioConfig(name="setting3", n=5000, z_mean=1.5, gamma2_true=(-5.0, -5.0)),
}


def preset(name) -> ScenarioConfig:
    key = str(name).lower()
    if not key.startswith("setting"):
        key = f"setting{key}"
    if key not in PRESETS:
        raise KeyError(f"no preset named {name!r}")
    return PRESETS[key]


def stream_rng(seed, replicate_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replicate_index, stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GeneratedDataset:
    data: ObservedDataset
    y_true: np.ndarray
    prevalence: float
    sensitivity: float
    specificity: float


def _realized(y_true, ystar):
    is1 = y_true == 1
    sens = float(np.mean(ystar[is1] == 1)) if is1.any() else math.nan
    spec = float(np.mean(ystar[~is1] == 2)) if (~is1).any() else math.nan
    return float(is1.mean()), sens, spec


def generate_dataset(scenario: ScenarioConfig, replicate_index: int) -> GeneratedDataset:
    n = scenario.n
    rng = stream_rng(scenario.seed, replicate_index, STREAM_COVARIATES)
    chol = np.linalg.cholesky(np.array([[1.0, scenario.covariance],
                                        [scenario.covariance, 1.0]]))
    xz = rng.standard_normal((n, 2)) @ chol.T + np.array([scenario.x_mean, scenario.z_mean])
    x, z = xz[:, 0], np.abs(xz[:, 1])

    b0, b1 = scenario.beta_true
    u = stream_rng(scenario.seed, replicate_index, STREAM_TRUE).random(n)
    y_true = np.where(u < expit(b0 + b1 * x), 1, 2).astype(np.int8)

    g1, g2 = scenario.gamma1_true, scenario.gamma2_true
    p_rec1 = np.where(y_true == 1, expit(g1[0] + g1[1] * z), expit(g2[0] + g2[1] * z))
    u = stream_rng(scenario.seed, replicate_index, STREAM_OBSERVED).random(n)
    ystar = np.where(u < p_rec1, 1, 2).astype(np.int8)

    data = ObservedDataset.from_arrays(ystar, x, z)
    return GeneratedDataset(data, y_true, *_realized(y_true, ystar))


def _fit_one(method, scenario, gen, replicate_index):
    data = gen.data
    if method == "em":
        cfg = dataclasses.replace(scenario.em, seed=(scenario.seed, replicate_index, STREAM_EM))
        return fit_em(data, cfg)
    if method == "naive":
        return fit_naive(data)
    if method == "perfect-spec":
        return fit_one_directional_em(data, "specificity", scenario.em)
    if method == "perfect-sens":
        return fit_one_directional_em(data, "sensitivity", scenario.em)
    if method == "mcmc":
        cfg = dataclasses.replace(scenario.mcmc,
                                  seed=(scenario.seed, replicate_index, STREAM_MCMC))
        return fit_mcmc(data, scenario.prior, cfg)
    if method == "oracle":
        class _T:
            converged, iterations, loglik_path, flags = True, 0, [], []
        return finish_fit("oracle", data, scenario.truth, _T(), None)
    raise ValueError(method)


def run_replicate(scenario: ScenarioConfig, replicate_index: int) -> list:
    """Generate one dataset and fit every requested estimator; one row per estimator."""
    gen = generate_dataset(scenario, replicate_index)
    rows = []
    for method in scenario.estimators:
        row = {"replicate": replicate_index, "method": method,
               "data_prevalence": gen.prevalence, "data_sens": gen.sensitivity,
               "data_spec": gen.specificity}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = _fit_one(method, scenario, gen, replicate_index)
        except Exception as exc:  # recorded, never fatal
            row.update(status=f"failed: {type(exc).__name__}: {exc}")
            rows.append(row)
            continue
        row.update(
            status="ok",
            converged=bool(fit.converged),
            iterations=int(fit.iterations),
            flipped=None if fit.correction is None else bool(fit.correction.flipped),
            ambiguous=None if fit.correction is None else bool(fit.correction.ambiguous),
            prevalence=fit.prevalence,
            sens=fit.rates.sens,
            spec=fit.rates.spec,
            estimates=dict(zip(fit.names, map(float, fit.params.as_vector()))),
            se=dict(zip(fit.names, map(float, fit.standard_errors))),
        )
        rows.append(row)
    return rows


def bias_rmse(estimates, truth):
    """Mean error and root mean squared error of ``estimates`` about ``truth``."""
    err = np.asarray(estimates, dtype=float) - truth
    return float(err.mean()), float(np.sqrt(np.mean(err * err)))


@dataclass
class StudyReport:
    scenario: ScenarioConfig
    rows: list
    bias: dict
    rmse: dict
    counts: dict
    probabilities: dict
    data_probabilities: dict

    @property
    def coefficient_names(self) -> list:
        return coefficient_names(("x1",), ("z1",))

    def estimates(self, method, name) -> np.ndarray:
        """Per-replicate estimates of one coefficient, for the fits used in the summaries."""
        return np.array([r["estimates"][name] for r in self.rows
                         if r["method"] == method and _usable(r) and name in r["estimates"]])

    def format_table(self) -> str:
        methods = list(self.bias)
        names = self.coefficient_names
        head = f"{'':<12}" + "".join(f"{m:>22}" for m in methods)
        sub = f"{'':<12}" + "".join(f"{'bias':>11}{'rMSE':>11}" for _ in methods)
        lines = [f"scenario {self.scenario.name}: n={self.scenario.n}, "
                 f"replicates={len({r['replicate'] for r in self.rows})}", head, sub]
        for nm in names:
            cells = []
            for m in methods:
                b, r = self.bias[m].get(nm), self.rmse[m].get(nm)
                cells.append(f"{'-':>11}{'-':>11}" if b is None else f"{b:>11.3f}{r:>11.3f}")
            lines.append(f"{nm:<12}" + "".join(cells))
        lines.append("")
        lines.append(f"{'':<12}{'Data':>10}" + "".join(f"{m:>14}" for m in methods))
        for key, label in (("p_y1", "P(Y=1)"), ("p_y2", "P(Y=2)"),
                           ("sens", "P(Y*=1|Y=1)"), ("spec", "P(Y*=2|Y=2)")):
            cells = "".join(f"{self.probabilities[m][key]:>14.3f}" for m in methods)
            lines.append(f"{label:<12}{self.data_probabilities[key]:>10.3f}" + cells)
        lines.append("")
        for m in methods:
            c = self.counts[m]
            lines.append(f"{m}: used {c['used']}, failed {c['failed']}, "
                         f"non-converged {c['nonconverged']}, flipped {c['flipped']}, "
                         f"ambiguous {c['ambiguous']}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return _clean({
            "schema_version": "1.0",
            "scenario": self.scenario.to_dict(),
            "bias": self.bias,
            "rmse": self.rmse,
            "counts": self.counts,
            "probabilities": self.probabilities,
            "data_probabilities": self.data_probabilities,
        })

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")

    def write_csv(self, path):
        names = self.coefficient_names
        cols = (["replicate", "method", "status", "converged", "flipped", "ambiguous",
                 "prevalence", "sens", "spec", "data_prevalence", "data_sens", "data_spec"]
                + names + [f"se_{n}" for n in names])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                est, se = r.get("estimates", {}), r.get("se", {})
                vals = [r.get(c, "") for c in cols[:12]]
                vals += [repr(est[n]) if n in est else "" for n in names]
                vals += [repr(se[n]) if n in se else "" for n in names]
                w.writerow(["" if v is None else v for v in vals])


def _usable(row) -> bool:
    return row["status"] == "ok" and not row.get("ambiguous")


def aggregate(scenario: ScenarioConfig, rows: list) -> StudyReport:
    """Bias, rMSE and mean rates per estimator.

    Failed fits and fits whose label orientation was ambiguous are left out
    of every summary and counted separately.
    """
    truth = dict(zip(coefficient_names(("x1",), ("z1",)), scenario.truth.as_vector()))
    bias, rmse, counts, probs = {}, {}, {}, {}
    for method in scenario.estimators:
        mine = [r for r in rows if r["method"] == method]
        fitted = [r for r in mine if r["status"] == "ok"]
        ok = [r for r in fitted if _usable(r)]
        bias[method], rmse[method] = {}, {}
        for nm, tv in truth.items():
            vals = [r["estimates"][nm] for r in ok if nm in r["estimates"]]
            if vals:
                bias[method][nm], rmse[method][nm] = bias_rmse(vals, tv)
        counts[method] = {
            "used": len(ok),
            "failed": len(mine) - len(fitted),
            "nonconverged": sum(not r["converged"] for r in ok),
            "flipped": sum(bool(r["flipped"]) for r in ok),
            "ambiguous": len(fitted) - len(ok),
        }
        mean = lambda key: float(np.mean([r[key] for r in ok])) if ok else math.nan
        probs[method] = {"p_y1": mean("prevalence"), "p_y2": 1.0 - mean("prevalence"),
                         "sens": mean("sens"), "spec": mean("spec")}
    per_rep = {r["replicate"]: r for r in rows}.values()
    dmean = lambda key: float(np.nanmean([r[key] for r in per_rep]))
    data_probs = {"p_y1": dmean("data_prevalence"), "p_y2": 1.0 - dmean("data_prevalence"),
                  "sens": dmean("data_sens"), "spec": dmean("data_spec")}
    return StudyReport(scenario, rows, bias, rmse, counts, probs, data_probs)


def _replicate_job(args):
    return run_replicate(*args)


def run_study(scenario: ScenarioConfig, jobs: int = 1, progress=None) -> StudyReport:
    """Run every replicate of ``scenario`` and aggregate bias and rMSE.

    ``progress`` is an optional callable receiving the replicate index as
    each one finishes.
    """
    indices = range(scenario.n_realizations)
    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, rep_rows in zip(indices, pool.map(_replicate_job,
                                                     ((scenario, i) for i in indices))):
                rows.extend(rep_rows)
                if progress:
                    progress(i)
    else:
        for i in indices:
            rows.extend(run_replicate(scenario, i))
            if progress:
                progress(i)
    return aggregate(scenario, rows)
