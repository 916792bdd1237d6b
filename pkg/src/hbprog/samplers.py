"""General-purpose samplers over unnormalized log-targets.

Two algorithms: coordinate-wise slice sampling with step-out and shrinkage,
and transitional MCMC (staged likelihood tempering with resampling and
Metropolis moves) which additionally estimates the log-evidence of the
prior/likelihood pair. Both are deterministic given the configured seed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np


class SamplerError(RuntimeError):
    """Raised when a sampler cannot make progress (bad initialization,
    step-out overrun, degenerate tempering weights)."""


def config_fingerprint(obj) -> str:
    """Stable sha256 hex digest of a dataclass or plain dict of settings."""
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)

    def default(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, (np.integer, np.floating)):
            return v.item()
        return repr(v)

    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=default)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def subseed(seed: int, *tags: int) -> int:
    """Deterministic child seed for a tagged sub-task of a master seed."""
    ss = np.random.SeedSequence([int(seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TargetSpec:
    """An unnormalized log-density over a box (possibly unbounded) support.

    ``log_target`` maps a point to a float; it must return -inf outside the
    support and never NaN.
    """

    dim: int
    log_target: Callable[[np.ndarray], float]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    name: str = "target"

    def __post_init__(self):
        lower = np.full(self.dim, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        upper = np.full(self.dim, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lower.shape != (self.dim,) or upper.shape != (self.dim,):
            raise ValueError("bounds must have shape (dim,)")
        if np.any(lower > upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        labels = self.labels or tuple(f"x{j}" for j in range(self.dim))
        if len(labels) != self.dim:
            raise ValueError("labels length must equal dim")
        object.__setattr__(self, "labels", tuple(labels))


@dataclass(frozen=True)
class TemperedTarget:
    """Prior-sampler / log-likelihood pair consumed by :func:`tmcmc`."""

    dim: int
    sample_prior: Callable[[np.random.Generator, int], np.ndarray]
    prior_logpdf: Callable[[np.ndarray], float]
    log_likelihood: Callable[[np.ndarray], float]
    labels: tuple[str, ...] | None = None
    name: str = "tempered"


@dataclass(frozen=True)
class SamplerConfig:
    """Settings shared by both samplers.

    ``slice_width`` overrides the per-dimension initial slice width; by
    default bounded dimensions use a tenth of their range and unbounded ones
    use 1.0. TMCMC settings: ``tmcmc_stage_size`` particles per stage
    (defaults to ``n_samples``), ``tmcmc_target_cov`` is the coefficient of
    variation of incremental weights used to pick each tempering step.
    """

    n_samples: int = 5000
    burn_in: float = 0.2
    thinning: int = 1
    seed: int = 0
    slice_width: tuple | float | None = None
    max_step_out: int = 200
    max_shrink: int = 200
    tmcmc_stage_size: int | None = None
    tmcmc_target_cov: float = 1.0
    tmcmc_moves: int = 3
    tmcmc_proposal_scale: float = 0.2

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in fraction must be in [0, 1)")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")

    def replace(self, **kw) -> "SamplerConfig":
        data = asdict(self)
        data.update(kw)
        return SamplerConfig(**data)


@dataclass
class SampleSet:
    """Draws of a parameter vector, with labels and provenance.

    The sample matrix is frozen (read-only) on construction; rows must be
    finite. ``log_evidence`` is attached by TMCMC runs.
    """

    samples: np.ndarray
    labels: tuple[str, ...]
    provenance: dict = field(default_factory=dict)
    log_evidence: float | None = None
    log_evidence_se: float | None = None

    def __post_init__(self):
        mat = np.ascontiguousarray(np.asarray(self.samples, dtype=float))
        if mat.ndim != 2:
            raise ValueError("samples must be a 2-d matrix (n_draws x dim)")
        if not np.all(np.isfinite(mat)):
            raise ValueError("all sample rows must be finite")
        mat.setflags(write=False)
        self.samples = mat
        self.labels = tuple(self.labels)
        if len(self.labels) != mat.shape[1]:
            raise ValueError("labels length must equal sample dimension")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def column(self, label: str) -> np.ndarray:
        return self.samples[:, self.labels.index(label)]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1)

    def cov(self) -> np.ndarray:
        return np.cov(self.samples, rowvar=False)

    def quantile(self, q) -> np.ndarray:
        return np.quantile(self.samples, q, axis=0)

    def thin(self, step: int) -> "SampleSet":
        return SampleSet(
            self.samples[::step].copy(),
            self.labels,
            dict(self.provenance, thinned_by=step),
            self.log_evidence,
            self.log_evidence_se,
        )


def _resolve_widths(target: TargetSpec, config: SamplerConfig) -> np.ndarray:
    if config.slice_width is not None:
        w = np.broadcast_to(np.asarray(config.slice_width, float), (target.dim,)).copy()
    else:
        span = target.upper - target.lower
        w = np.where(np.isfinite(span), span / 10.0, 1.0)
    if np.any(w < 0):
        raise ValueError("slice widths must be nonnegative")
    return w


def slice_sample(target: TargetSpec, init, config: SamplerConfig) -> SampleSet:
    """Coordinate-wise slice sampling with step-out and shrinkage.

    Returns ``config.n_samples`` post-burn-in (and post-thinning) draws.
    The initial point must have finite log-target. Dimensions whose lower
    and upper bounds coincide are pinned at that value.
    """
    rng = np.random.default_rng(config.seed)
    x = np.array(init, dtype=float)
    if x.shape != (target.dim,):
        raise ValueError("init must have shape (dim,)")
    if np.any(x < target.lower) or np.any(x > target.upper):
        raise SamplerError("initial point outside the support box")
    lp = float(target.log_target(x))
    if not math.isfinite(lp):
        raise SamplerError("initial point has non-finite log-target")

    widths = _resolve_widths(target, config)
    pinned = target.lower == target.upper
    lo, hi = target.lower, target.upper

    keep_every = config.thinning
    n_keep = config.n_samples
    n_iters = n_keep * keep_every
    n_burn = math.ceil(config.burn_in / (1.0 - config.burn_in) * n_iters)
    out = np.empty((n_keep, target.dim))
    kept = 0

    for it in range(n_burn + n_iters):
        for d in range(target.dim):
            if pinned[d]:
                continue
            logy = lp - rng.exponential()
            u = rng.uniform()
            left = x[d] - widths[d] * u
            right = left + widths[d]
            left = max(left, lo[d])
            right = min(right, hi[d])

            def f(v: float) -> float:
                xd = x[d]
                x[d] = v
                val = float(target.log_target(x))
                x[d] = xd
                return val

            steps = 0
            while left > lo[d] and f(left) > logy:
                left = max(left - widths[d], lo[d])
                steps += 1
                if steps > config.max_step_out:
                    raise SamplerError(
                        f"slice step-out exceeded {config.max_step_out} doublings "
                        f"expanding left on dim {d} (width={widths[d]:g}, level={logy:g})"
                    )
            steps = 0
            while right < hi[d] and f(right) > logy:
                right = min(right + widths[d], hi[d])
                steps += 1
                if steps > config.max_step_out:
                    raise SamplerError(
                        f"slice step-out exceeded {config.max_step_out} doublings "
                        f"expanding right on dim {d} (width={widths[d]:g}, level={logy:g})"
                    )

            for _ in range(config.max_shrink):
                prop = rng.uniform(left, right)
                lp_prop = f(prop)
                if lp_prop > logy:
                    x[d] = prop
                    lp = lp_prop
                    break
                if prop < x[d]:
                    left = prop
                else:
                    right = prop
            else:
                raise SamplerError(
                    f"slice shrinkage failed after {config.max_shrink} tries on dim {d}"
                )
        if it >= n_burn and (it - n_burn) % keep_every == keep_every - 1:
            out[kept] = x
            kept += 1

    provenance = {
        "sampler": "slice",
        "target": target.name,
        "seed": config.seed,
        "config_hash": config_fingerprint(config),
    }
    return SampleSet(out, target.labels, provenance)


def _choose_dbeta(loglik: np.ndarray, beta: float, target_cov: float) -> float:
    """Largest tempering increment whose incremental-weight coefficient of
    variation does not exceed the target (bisection; full remaining step if
    even that stays below the target)."""
    remaining = 1.0 - beta
    finite = loglik[np.isfinite(loglik)]
    shift = np.max(finite)

    def cov(db: float) -> float:
        w = np.exp(db * (loglik - shift))
        m = w.mean()
        if m == 0:
            return math.inf
        return float(w.std() / m)

    if cov(remaining) <= target_cov:
        return remaining
    lo_db, hi_db = 0.0, remaining
    for _ in range(80):
        mid = 0.5 * (lo_db + hi_db)
        if cov(mid) > target_cov:
            hi_db = mid
        else:
            lo_db = mid
    db = max(lo_db, remaining * 1e-12)
    return db


def tmcmc(target: TemperedTarget, config: SamplerConfig) -> SampleSet:
    """Transitional MCMC over a staged tempering of likelihood^beta.

    Runs stages 0 = beta_0 < ... < beta_J = 1 with each increment chosen so
    the coefficient of variation of the incremental weights matches
    ``tmcmc_target_cov``. Each stage multinomially resamples particles by
    weight and applies ``tmcmc_moves`` Metropolis steps with a Gaussian
    proposal scaled from the weighted particle covariance. The log-evidence
    is the sum over stages of the log mean incremental weight; a rough
    standard error accumulates the per-stage weight variances.
    """
    rng = np.random.default_rng(config.seed)
    n = config.tmcmc_stage_size or config.n_samples
    dim = target.dim

    particles = np.asarray(target.sample_prior(rng, n), dtype=float)
    if particles.shape != (n, dim):
        raise SamplerError(f"prior sampler returned shape {particles.shape}, wanted {(n, dim)}")
    loglik = np.array([float(target.log_likelihood(p)) for p in particles])
    if np.any(np.isnan(loglik)):
        raise SamplerError("log-likelihood returned NaN on a prior draw")
    if not np.any(np.isfinite(loglik)):
        raise SamplerError("tempering collapse: likelihood is -inf on every prior draw")

    beta = 0.0
    betas = [0.0]
    log_z = 0.0
    var_acc = 0.0

    while beta < 1.0:
        dbeta = _choose_dbeta(loglik, beta, config.tmcmc_target_cov)
        if dbeta <= 0:
            raise SamplerError("internal error: non-increasing tempering exponent")
        w_log = dbeta * loglik
        shift = np.max(w_log[np.isfinite(w_log)])
        w = np.exp(w_log - shift)
        mean_w = w.mean()
        log_z += shift + math.log(mean_w)
        weights = w / w.sum()
        ess = 1.0 / np.sum(weights**2)
        if ess < 2.0:
            raise SamplerError(
                f"tempering collapse: effective sample size {ess:.2f} < 2 at beta={beta:g}"
            )
        var_acc += float(np.var(w) / (n * mean_w**2))
        beta = 1.0 if 1.0 - (beta + dbeta) < 1e-12 else beta + dbeta
        betas.append(beta)

        mu = weights @ particles
        centered = particles - mu
        cov_w = (weights[:, None] * centered).T @ centered
        prop_cov = config.tmcmc_proposal_scale**2 * cov_w
        prop_cov[np.diag_indices(dim)] += 1e-12
        chol = np.linalg.cholesky(prop_cov)

        idx = rng.choice(n, size=n, p=weights)
        particles = particles[idx].copy()
        loglik = loglik[idx].copy()
        log_prior = np.array([float(target.prior_logpdf(p)) for p in particles])

        for _ in range(config.tmcmc_moves):
            steps = rng.standard_normal((n, dim)) @ chol.T
            log_u = np.log(rng.uniform(size=n))
            for i in range(n):
                prop = particles[i] + steps[i]
                lp_prior = float(target.prior_logpdf(prop))
                if lp_prior == -math.inf:
                    continue
                ll = float(target.log_likelihood(prop))
                if math.isnan(ll):
                    continue
                log_alpha = (lp_prior + beta * ll) - (log_prior[i] + beta * loglik[i])
                if log_u[i] < log_alpha:
                    particles[i] = prop
                    loglik[i] = ll
                    log_prior[i] = lp_prior

    labels = target.labels or tuple(f"x{j}" for j in range(dim))
    provenance = {
        "sampler": "tmcmc",
        "target": target.name,
        "seed": config.seed,
        "config_hash": config_fingerprint(config),
        "beta_schedule": [float(b) for b in betas],
        "n_stages": len(betas) - 1,
    }
    return SampleSet(
        particles,
        labels,
        provenance,
        log_evidence=float(log_z),
        log_evidence_se=float(math.sqrt(var_acc)),
    )
