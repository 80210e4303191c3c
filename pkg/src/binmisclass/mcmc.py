"""Bayesian fitting by Metropolis-within-Gibbs with data augmentation.

Each sweep draws the latent true class of every subject from its posterior
class probabilities, then updates ``beta``, ``gamma1`` and ``gamma2`` in
turn with Gaussian random-walk Metropolis steps against their
complete-data conditionals.  Proposal shapes come from the complete-data
information of each block and their scale is tuned toward a 0.35
acceptance rate during burn-in only.

Label switching is resolved chain by chain: the correction is decided at
the chain's mean parameters and, when it calls for a flip, applied to
every draw of that chain.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .em import naive_start
from .labelswitch import correct_label_switching
from .model import (
    ObservedDataset,
    ParameterSet,
    average_rates,
    observed_loglik,
    prevalence,
)
from .results import FitResult, names_for

FAMILIES = ("uniform", "normal", "double-exponential", "t")
BLOCKS = ("beta", "gamma1", "gamma2")


@dataclass(frozen=True)
class PriorSpec:
    """Independent prior on every coefficient, one family for all.

    Hyperparameters are scalars or arrays as long as the coefficient
    vector.  ``uniform`` uses ``lower``/``upper``; ``normal`` and
    ``double-exponential`` use ``loc``/``scale``; ``t`` adds ``df``.
    """

    family: str = "uniform"
    loc: object = 0.0
    scale: object = 1.0
    lower: object = -10.0
    upper: object = 10.0
    df: object = 3.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown prior family {self.family!r}; choose from {FAMILIES}")
        if np.any(np.asarray(self.scale, dtype=float) <= 0):
            raise ValueError("prior scale must be positive")
        if np.any(np.asarray(self.lower, dtype=float) >= np.asarray(self.upper, dtype=float)):
            raise ValueError("prior lower bound must be below upper bound")
        if np.any(np.asarray(self.df, dtype=float) <= 0):
            raise ValueError("prior df must be positive")

    @classmethod
    def parse(cls, text: str) -> "PriorSpec":
        """Parse ``family:a,b[,c]``, e.g. ``uniform:-10,10`` or ``t:0,2.5,3``."""
        family, _, rest = text.partition(":")
        family = family.strip().lower()
        vals = [float(v) for v in rest.split(",") if v.strip()] if rest else []
        if family == "uniform":
            return cls(family, lower=vals[0], upper=vals[1]) if vals else cls(family)
        if family in ("normal", "double-exponential"):
            return cls(family, loc=vals[0], scale=vals[1]) if vals else cls(family)
        if family == "t":
            return cls(family, loc=vals[0], scale=vals[1], df=vals[2]) if vals else cls(family)
        raise ValueError(f"unknown prior family {family!r}")

    def to_dict(self) -> dict:
        conv = lambda v: np.asarray(v, dtype=float).tolist()
        return {"family": self.family, "loc": conv(self.loc), "scale": conv(self.scale),
                "lower": conv(self.lower), "upper": conv(self.upper), "df": conv(self.df)}

    def _hyper(self, name, idx, size):
        v = np.asarray(getattr(self, name), dtype=float)
        if v.ndim == 0:
            return np.full(size, float(v))
        return v[idx]

    def logpdf(self, values, idx=None) -> float:
        """Summed log density of ``values`` (coefficients at positions ``idx``)."""
        x = np.atleast_1d(np.asarray(values, dtype=float))
        idx = np.arange(x.size) if idx is None else idx
        n = x.size
        if self.family == "uniform":
            lo, hi = self._hyper("lower", idx, n), self._hyper("upper", idx, n)
            if np.any(x < lo) or np.any(x > hi):
                return -math.inf
            return float(-np.sum(np.log(hi - lo)))
        loc, scale = self._hyper("loc", idx, n), self._hyper("scale", idx, n)
        u = (x - loc) / scale
        if self.family == "normal":
            return float(np.sum(-0.5 * u * u - np.log(scale) - 0.5 * math.log(2 * math.pi)))
        if self.family == "double-exponential":
            return float(np.sum(-np.abs(u) - np.log(2 * scale)))
        nu = self._hyper("df", idx, n)
        lg = np.array([math.lgamma((v + 1) / 2) - math.lgamma(v / 2) for v in nu])
        return float(np.sum(lg - 0.5 * np.log(nu * math.pi) - np.log(scale)
                            - (nu + 1) / 2 * np.log1p(u * u / nu)))


def log_prior(params: ParameterSet, prior: PriorSpec) -> float:
    return prior.logpdf(params.as_vector())


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    iterations: int = 8000
    burn_in: int = 3000
    thin: int = 1
    seed: object = 0
    adapt_window: int = 100
    target_accept: float = 0.35
    init_jitter: float = 0.25
    jobs: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be at least 1")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be nonnegative and below iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be at least 1")

    @property
    def retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass(frozen=True)
class PosteriorSample:
    """Corrected draws, shape ``(chains, retained, n_coefficients)``."""

    draws: np.ndarray
    names: tuple
    template: ParameterSet
    data: ObservedDataset
    acceptance: np.ndarray
    corrections: tuple
    rhat: np.ndarray
    ess: np.ndarray
    warnings: tuple = ()
    not_converged: bool = False
    config: McmcConfig = field(default_factory=McmcConfig)

    @property
    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[-1])


def _softplus(eta):
    return np.maximum(eta, 0.0) + np.log1p(np.exp(-np.abs(eta)))


def chain_rng(seed, chain: int) -> np.random.Generator:
    """Counter-based stream for one chain."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy, spawn_key=(chain,))))


class _ChainState:
    """Linear predictors and their softplus values for the current parameters."""

    def __init__(self, data, params):
        self.X, self.Z = data.x_matrix, data.z_matrix
        self.y1 = data.ystar1
        self.is1 = data.ystar == 1
        self.coef = {b: None if getattr(params, b) is None else getattr(params, b).copy()
                     for b in BLOCKS}
        self.eta, self.sp = {}, {}
        for b in BLOCKS:
            if self.coef[b] is not None:
                self.set(b, self.coef[b])

    def design(self, block):
        return self.X if block == "beta" else self.Z

    def set(self, block, coef, eta=None, sp=None):
        self.coef[block] = coef
        self.eta[block] = self.design(block) @ coef if eta is None else eta
        self.sp[block] = _softplus(self.eta[block]) if sp is None else sp

    def latent_prob(self):
        """Posterior P(Y = 1 | Y*, X, Z) for every subject."""
        lp1 = self.eta["beta"] - self.sp["beta"]
        lp2 = -self.sp["beta"]
        with np.errstate(divide="ignore"):
            for j, block in ((1, "gamma1"), (2, "gamma2")):
                if self.coef[block] is None:
                    # class j never misrecorded
                    rec = np.where(self.is1, 0.0, -np.inf) if j == 1 else np.where(self.is1, -np.inf, 0.0)
                else:
                    e, s = self.eta[block], self.sp[block]
                    rec = np.where(self.is1, e - s, -s)
                if j == 1:
                    lp1 = lp1 + rec
                else:
                    lp2 = lp2 + rec
        d = lp1 - lp2
        return 1.0 / (1.0 + np.exp(-d))

    def loglik(self, block, m, eta, sp):
        if block == "beta":
            return float(m @ eta - sp.sum())
        weight = m if block == "gamma1" else 1.0 - m
        return float(weight @ (self.y1 * eta - sp))

    def information(self, block, m):
        eta = self.eta[block]
        p = 1.0 / (1.0 + np.exp(-eta))
        v = p * (1.0 - p)
        if block == "gamma1":
            v = v * m
        elif block == "gamma2":
            v = v * (1.0 - m)
        D = self.design(block)
        return (D * v[:, None]).T @ D


def _proposal_chol(info, d):
    cov = np.linalg.inv(info + 1e-2 * np.eye(d))
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.diag(np.sqrt(np.clip(np.diag(cov), 1e-8, None)))


def _run_chain(data, prior, config, chain, init, sampled):
    rng = chain_rng(config.seed, chain)
    state = _ChainState(data, init)
    template = init
    offsets, start = {}, 0
    for b in BLOCKS:
        v = getattr(template, b)
        if v is not None:
            offsets[b] = np.arange(start, start + v.size)
            start += v.size
    n_coef = start

    active = [b for b in BLOCKS if b in sampled and state.coef[b] is not None]
    log_scale = {b: math.log(2.38 / math.sqrt(offsets[b].size)) for b in active}
    chol = {}
    m = (rng.random(data.n) < state.latent_prob()).astype(float)
    for b in active:
        chol[b] = _proposal_chol(state.information(b, m), offsets[b].size)
    lprior = {b: prior.logpdf(state.coef[b], offsets[b]) for b in active}

    keep = range(config.burn_in, config.iterations, config.thin)
    draws = np.empty((len(keep), n_coef))
    accepted = {b: 0 for b in active}
    window_acc = {b: 0 for b in active}
    row = 0
    for t in range(config.iterations):
        m = (rng.random(data.n) < state.latent_prob()).astype(float)
        for b in active:
            cur = state.coef[b]
            cand = cur + math.exp(log_scale[b]) * (chol[b] @ rng.standard_normal(cur.size))
            lp_cand = prior.logpdf(cand, offsets[b])
            u = rng.random()
            if lp_cand == -math.inf:
                continue
            eta = state.design(b) @ cand
            sp = _softplus(eta)
            log_ratio = (state.loglik(b, m, eta, sp) + lp_cand
                         - state.loglik(b, m, state.eta[b], state.sp[b]) - lprior[b])
            if math.log(u) < log_ratio:
                state.set(b, cand, eta, sp)
                lprior[b] = lp_cand
                window_acc[b] += 1
                if t >= config.burn_in:
                    accepted[b] += 1
        if t < config.burn_in and (t + 1) % config.adapt_window == 0:
            for b in active:
                rate = window_acc[b] / config.adapt_window
                log_scale[b] += 2.0 * (rate - config.target_accept)
                chol[b] = _proposal_chol(state.information(b, m), offsets[b].size)
                window_acc[b] = 0
        if t >= config.burn_in and (t - config.burn_in) % config.thin == 0:
            draws[row] = np.concatenate([state.coef[b] for b in BLOCKS if state.coef[b] is not None])
            row += 1
    n_post = config.iterations - config.burn_in
    acc = np.array([accepted[b] / n_post if b in accepted else np.nan for b in BLOCKS])
    return draws, acc


def split_rhat(draws: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction for ``(chains, n, d)`` draws.

    Values below one (between-chain spread smaller than expected by chance)
    are reported as exactly one.
    """
    c, n, d = draws.shape
    half = n // 2
    if half < 2:
        return np.full(d, np.nan)
    parts = np.concatenate([draws[:, :half], draws[:, n - half:]], axis=0)
    means = parts.mean(axis=1)
    B = half * means.var(axis=0, ddof=1)
    W = parts.var(axis=1, ddof=1).mean(axis=0)
    var_plus = (half - 1) / half * W + B / half
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sqrt(var_plus / W)
    r[(W == 0) & (B == 0)] = 1.0
    return np.maximum(r, 1.0)


def effective_sample_size(draws: np.ndarray) -> np.ndarray:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    c, n, d = draws.shape
    out = np.empty(d)
    for k in range(d):
        x = draws[:, :, k]
        if n < 4 or np.all(x == x[0, 0]):
            out[k] = float(c * n)
            continue
        xc = x - x.mean(axis=1, keepdims=True)
        nfft = 1 << (2 * n - 1).bit_length()
        f = np.fft.rfft(xc, nfft, axis=1)
        acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n] / n
        chain_var = acov[:, 0] * n / (n - 1)
        W = chain_var.mean()
        B_over_n = x.mean(axis=1).var(ddof=1) if c > 1 else 0.0
        var_plus = (n - 1) / n * W + B_over_n
        rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
        rho[0] = 1.0
        tau = -1.0
        prev = np.inf
        for t in range(0, n - 1, 2):
            pair = rho[t] + rho[t + 1]
            if pair < 0:
                break
            pair = min(pair, prev)
            tau += 2.0 * pair
            prev = pair
        out[k] = c * n / max(tau, 1.0 / math.log10(max(c * n, 10)))
    return out


def _chain_inits(data, config, init, blocks):
    if init is not None:
        if isinstance(init, ParameterSet):
            return [init] * config.chains
        init = list(init)
        if len(init) != config.chains:
            raise ValueError("need one initial ParameterSet per chain")
        return init
    base = naive_start(data, blocks)
    out = []
    for c in range(config.chains):
        rng = chain_rng(config.seed, 10_000 + c)
        vec = base.as_vector() + config.init_jitter * rng.standard_normal(base.as_vector().size)
        out.append(base.with_vector(np.clip(vec, -9.5, 9.5)))
    return out


def _run_chain_args(args):
    return _run_chain(*args)


def sample_posterior(data: ObservedDataset, prior: PriorSpec | None = None,
                     config: McmcConfig | None = None, init=None,
                     blocks=BLOCKS, fixed_blocks=None) -> PosteriorSample:
    """Draw from the posterior of the misclassification model.

    ``init`` is one :class:`ParameterSet` for all chains, a list with one
    per chain, or ``None`` for jittered naive starts.  ``blocks`` selects
    which gamma blocks exist (an omitted block means that class is never
    misrecorded).  ``fixed_blocks`` maps block names to values held
    constant instead of sampled.
    """
    prior = PriorSpec() if prior is None else prior
    config = McmcConfig() if config is None else config
    fixed_blocks = dict(fixed_blocks or {})
    inits = _chain_inits(data, config, init, blocks)
    if fixed_blocks:
        inits = [ParameterSet(**{b: fixed_blocks.get(b, getattr(p, b)) for b in BLOCKS})
                 for p in inits]
    sampled = tuple(b for b in BLOCKS if b not in fixed_blocks)
    jobs = [(data, prior, config, c, inits[c], sampled) for c in range(config.chains)]
    if config.jobs > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.jobs, config.chains)) as pool:
            results = list(pool.map(_run_chain_args, jobs))
    else:
        results = [_run_chain(*j) for j in jobs]

    template = inits[0]
    draws = np.stack([r[0] for r in results])
    acceptance = np.stack([r[1] for r in results])

    corrections = []
    correctable = (template.gamma1 is not None and template.gamma2 is not None
                   and not fixed_blocks)
    if correctable:
        for c in range(config.chains):
            mean = template.with_vector(draws[c].mean(axis=0))
            corrected, report = correct_label_switching(mean, data)
            if report.flipped:
                d1 = template.beta.size
                dz = template.gamma1.size
                block = draws[c]
                draws[c] = np.column_stack([-block[:, :d1], block[:, d1 + dz:],
                                            block[:, d1:d1 + dz]])
            corrections.append(report)

    notes = []
    for c in range(config.chains):
        for b, a in zip(BLOCKS, acceptance[c]):
            if not np.isnan(a) and not 0.05 <= a <= 0.7:
                notes.append(f"chain {c} {b} acceptance {a:.3f} outside [0.05, 0.7]")
    for c, rep in enumerate(corrections):
        if rep.ambiguous:
            notes.append(f"chain {c} label orientation ambiguous")
    rhat = split_rhat(draws)
    ess = effective_sample_size(draws)
    not_converged = bool(np.any(rhat > 1.1))
    if not_converged:
        notes.append("split R-hat above 1.1 for at least one coefficient")
    return PosteriorSample(
        draws=draws,
        names=names_for(template, data.x_names, data.z_names),
        template=template,
        data=data,
        acceptance=acceptance,
        corrections=tuple(corrections),
        rhat=rhat,
        ess=ess,
        warnings=tuple(notes),
        not_converged=not_converged,
        config=config,
    )


def summarize_posterior(sample: PosteriorSample) -> FitResult:
    """Posterior means as estimates and posterior SDs as standard errors."""
    pooled = sample.pooled
    if pooled.shape[0] == 0:
        raise ValueError("empty posterior sample")
    mean = pooled.mean(axis=0)
    cov = (np.atleast_2d(np.cov(pooled, rowvar=False, ddof=1)) if pooled.shape[0] > 1
           else np.zeros((mean.size, mean.size)))
    params = sample.template.with_vector(mean)
    data = sample.data
    correction = None
    if params.gamma1 is not None and params.gamma2 is not None and sample.corrections:
        _, correction = correct_label_switching(params, data)
    diagnostics = {
        "median": dict(zip(sample.names, np.median(pooled, axis=0).tolist())),
        "rhat": dict(zip(sample.names, sample.rhat.tolist())),
        "ess": dict(zip(sample.names, sample.ess.tolist())),
        "acceptance": [dict(zip(BLOCKS, row.tolist())) for row in sample.acceptance],
        "chain_corrections": [r.to_dict() for r in sample.corrections],
        "warnings": list(sample.warnings),
        "chains": sample.config.chains,
        "draws_per_chain": int(sample.draws.shape[1]),
    }
    return FitResult(
        method="mcmc",
        params=params,
        covariance=cov,
        rates=average_rates(params, data),
        prevalence=prevalence(params, data),
        correction=correction,
        loglik=observed_loglik(params, data),
        converged=not sample.not_converged,
        iterations=sample.config.iterations,
        names=sample.names,
        diagnostics=diagnostics,
    )


def fit_mcmc(data: ObservedDataset, prior: PriorSpec | None = None,
             config: McmcConfig | None = None, **kw) -> FitResult:
    return summarize_posterior(sample_posterior(data, prior, config, **kw))


def write_draws(sample: PosteriorSample, directory) -> list:
    """One CSV per chain with an ``iteration`` column plus one per coefficient."""
    os.makedirs(directory, exist_ok=True)
    cfg = sample.config
    iters = list(range(cfg.burn_in, cfg.iterations, cfg.thin))
    paths = []
    for c in range(sample.draws.shape[0]):
        path = os.path.join(directory, f"chain_{c + 1}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", *sample.names])
            for it, row in zip(iters, sample.draws[c]):
                w.writerow([it, *(repr(float(v)) for v in row)])
        paths.append(path)
    return paths
