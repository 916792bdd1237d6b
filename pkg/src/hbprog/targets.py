"""Log-density building blocks for the two-stage inference.

Contains the measurement likelihoods (lognormal for crack lengths, Gaussian
for capacities), the Gaussian population prior over dimensionless parameters
with a truncated-Gaussian block for the error scale, the uniform hyper-prior
box, and the two composite unnormalized log-targets: the hyper-posterior
given stage-1 sample sets and the current-unit posterior under the
hyper-sample mixture prior.

All functions return -inf (never NaN) for out-of-support input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

LOG_TWO_PI = math.log(2.0 * math.pi)


def logsumexp(a) -> float:
    """Shift-stable log of the summed exponentials of a 1-d array.

    Kept local (rather than scipy's) because the samplers call it millions
    of times on short vectors and the array-API dispatch overhead dominates
    at that size. Satisfies logsumexp(x + c) = logsumexp(x) + c to float
    tolerance and maps all -inf input to -inf without NaN.
    """
    a = np.asarray(a, dtype=float)
    m = np.max(a) if a.size else -math.inf
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.exp(a - m).sum()))


def segment_logsumexp(
    values: np.ndarray, starts: np.ndarray, counts: np.ndarray | None = None
) -> np.ndarray:
    """logsumexp over contiguous segments of a 1-d array.

    ``starts`` holds each segment's first index (starts[0] == 0). Segments
    whose entries are all -inf yield -inf. ``counts`` (segment lengths) may
    be passed to avoid recomputation in hot loops.
    """
    smax = np.maximum.reduceat(values, starts)
    finite = np.isfinite(smax)
    safe = np.where(finite, smax, 0.0)
    if counts is None:
        counts = np.diff(np.append(starts, values.size))
    shifted = np.exp(values - np.repeat(safe, counts))
    sums = np.add.reduceat(shifted, starts)
    with np.errstate(divide="ignore"):
        return np.where(finite, np.log(sums) + safe, smax)


def lognormal_loglik(y, pred, sigma):
    """Log-density of observed value(s) under the lognormal error model.

    The distribution is parameterized so its mean equals the model
    prediction: zeta^2 = ln(1 + (sigma/pred)^2), eta = ln(pred) - zeta^2 / 2.
    ``y`` and ``pred`` broadcast; summing over a series gives the dataset
    log-likelihood under independence across cycles.
    """
    y = np.asarray(y, dtype=float)
    pred_arr = np.asarray(pred, dtype=float)
    if np.any(y <= 0):
        raise ValueError("lognormal likelihood requires observed values > 0")
    if np.any(pred_arr <= 0):
        raise ValueError("lognormal likelihood requires predictions > 0")
    if not sigma > 0:
        raise ValueError("error scale sigma must be > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        zeta2 = np.log1p((sigma / pred_arr) ** 2)
        eta = np.log(pred_arr) - 0.5 * zeta2
        out = (
            -np.log(y)
            - 0.5 * LOG_TWO_PI
            - 0.5 * np.log(zeta2)
            - (np.log(y) - eta) ** 2 / (2.0 * zeta2)
        )
    out = np.where(np.isnan(out), -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_loglik(y, pred, sigma):
    """Log-density of observed value(s) under additive Gaussian error."""
    if not sigma > 0:
        raise ValueError("error scale sigma must be > 0")
    y = np.asarray(y, dtype=float)
    pred_arr = np.asarray(pred, dtype=float)
    with np.errstate(invalid="ignore"):
        out = -0.5 * (LOG_TWO_PI + 2.0 * math.log(sigma)) - (y - pred_arr) ** 2 / (
            2.0 * sigma**2
        )
    out = np.where(np.isnan(out), -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def trunc_normal_logpdf(x, mu, sd, lo, hi):
    """Log-density of a Gaussian(mu, sd) truncated to (lo, hi), including the
    normalization constant."""
    if not sd > 0:
        raise ValueError("truncated normal requires sd > 0")
    x = np.asarray(x, dtype=float)
    z = ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd)
    if not z > 0:
        return np.full(x.shape, -np.inf) if x.ndim else -math.inf
    core = -0.5 * LOG_TWO_PI - math.log(sd) - (x - mu) ** 2 / (2.0 * sd**2) - math.log(z)
    out = np.where((x > lo) & (x < hi), core, -np.inf)
    return float(out) if np.ndim(out) == 0 else out


def trunc_normal_ppf(q, mu, sd, lo, hi):
    """Quantile function of the truncated Gaussian; used for ancestral draws."""
    a = ndtr((lo - mu) / sd)
    b = ndtr((hi - mu) / sd)
    return mu + sd * ndtri(a + np.asarray(q, dtype=float) * (b - a))


@dataclass(frozen=True)
class ParameterVector:
    """One unit's parameters: dimensionless model parameters plus the
    prediction-error scale in measurement units (mm or Ahr)."""

    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1:
            raise ValueError("theta must be one-dimensional")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @property
    def dim(self) -> int:
        return self.theta.size + 1

    def as_row(self) -> np.ndarray:
        return np.concatenate([self.theta, [self.sigma]])


@dataclass(frozen=True)
class HyperParameters:
    """Population distribution parameters: Gaussian mean/sd per model
    parameter, optional correlation between the first two components, and a
    (mu, sd) pair for the error scale whose Gaussian is truncated to
    (0, sigma_trunc)."""

    mu0: np.ndarray
    sd0: np.ndarray
    mu_sigma: float
    sd_sigma: float
    rho: float | None = None
    sigma_trunc: float = 0.2

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=float)
        sd0 = np.asarray(self.sd0, dtype=float)
        for arr in (mu0, sd0):
            arr.setflags(write=False)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sd0", sd0)
        if mu0.shape != sd0.shape or mu0.ndim != 1:
            raise ValueError("mu0 and sd0 must be 1-d arrays of equal length")
        if np.any(sd0 <= 0):
            raise ValueError("population standard deviations must be > 0")
        if self.rho is not None:
            if mu0.size != 2:
                raise ValueError("a correlation coefficient requires exactly 2 components")
            if not abs(self.rho) < 1:
                raise ValueError("|rho| must be < 1 for a positive-definite covariance")
        if self.mu_sigma < 0:
            raise ValueError("mu_sigma must be >= 0")
        if not self.sd_sigma > 0:
            raise ValueError("sd_sigma must be > 0")
        if not self.sigma_trunc > 0:
            raise ValueError("sigma_trunc must be > 0")

    @property
    def n_theta(self) -> int:
        return self.mu0.size

    @property
    def correlated(self) -> bool:
        return self.rho is not None

    def to_vector(self) -> np.ndarray:
        vec = np.concatenate([self.mu0, [self.mu_sigma], self.sd0, [self.sd_sigma]])
        if self.correlated:
            vec = np.concatenate([vec, [self.rho]])
        return vec

    @staticmethod
    def labels(n_theta: int, correlated: bool) -> tuple[str, ...]:
        names = [f"mu_theta{j + 1}" for j in range(n_theta)]
        names.append("mu_sigma")
        names += [f"sd_theta{j + 1}" for j in range(n_theta)]
        names.append("sd_sigma")
        if correlated:
            names.append("rho")
        return tuple(names)

    @classmethod
    def from_vector(
        cls, vec, n_theta: int, correlated: bool, sigma_trunc: float
    ) -> "HyperParameters":
        vec = np.asarray(vec, dtype=float)
        expected = 2 * n_theta + 2 + (1 if correlated else 0)
        if vec.size != expected:
            raise ValueError(f"hyper vector must have length {expected}, got {vec.size}")
        return cls(
            mu0=vec[:n_theta],
            sd0=vec[n_theta + 1 : 2 * n_theta + 1],
            mu_sigma=float(vec[n_theta]),
            sd_sigma=float(vec[2 * n_theta + 1]),
            rho=float(vec[-1]) if correlated else None,
            sigma_trunc=sigma_trunc,
        )


@dataclass(frozen=True)
class HyperPriorBounds:
    """Independent uniform bounds per hyperparameter, in the vector order
    (mu_theta..., mu_sigma, sd_theta..., sd_sigma[, rho])."""

    mu_theta: tuple[tuple[float, float], ...]
    sd_theta: tuple[tuple[float, float], ...]
    mu_sigma: tuple[float, float]
    sd_sigma: tuple[float, float]
    rho: tuple[float, float] | None = None

    def __post_init__(self):
        if len(self.mu_theta) != len(self.sd_theta):
            raise ValueError("mu_theta and sd_theta must have equal length")
        for lo, hi in (*self.mu_theta, *self.sd_theta, self.mu_sigma, self.sd_sigma) + (
            (self.rho,) if self.rho is not None else ()
        ):
            if not lo < hi:
                raise ValueError("each bound must satisfy lower < upper")

    @property
    def n_theta(self) -> int:
        return len(self.mu_theta)

    def pairs(self, correlated: bool) -> list[tuple[float, float]]:
        out = list(self.mu_theta) + [self.mu_sigma] + list(self.sd_theta) + [self.sd_sigma]
        if correlated:
            if self.rho is None:
                raise ValueError("correlated case requires rho bounds")
            out.append(self.rho)
        return out

    def lower(self, correlated: bool) -> np.ndarray:
        return np.array([p[0] for p in self.pairs(correlated)])

    def upper(self, correlated: bool) -> np.ndarray:
        return np.array([p[1] for p in self.pairs(correlated)])

    def contains(self, vec: np.ndarray, correlated: bool) -> bool:
        vec = np.asarray(vec, dtype=float)
        return bool(
            np.all(vec >= self.lower(correlated)) and np.all(vec <= self.upper(correlated))
        )

    def log_prior_const(self, correlated: bool) -> float:
        widths = self.upper(correlated) - self.lower(correlated)
        return float(-np.sum(np.log(widths)))

    @classmethod
    def crack_default(cls, correlated: bool = False) -> "HyperPriorBounds":
        """Default box for the two-parameter crack family."""
        return cls(
            mu_theta=((0.8, 1.4), (0.9, 1.4)),
            sd_theta=((0.0, 0.3), (0.0, 0.1)),
            mu_sigma=(0.0, 0.4),
            sd_sigma=(0.0, 0.2),
            rho=(-1.0, 1.0) if correlated else None,
        )

    @classmethod
    def battery_default(cls, n_theta: int) -> "HyperPriorBounds":
        """Default box for battery families: means on (0, 1.8), population
        spreads on (0, 0.4); error-scale block mirrors those ranges."""
        return cls(
            mu_theta=tuple((0.0, 1.8) for _ in range(n_theta)),
            sd_theta=tuple((0.0, 0.4) for _ in range(n_theta)),
            mu_sigma=(0.0, 0.4),
            sd_sigma=(0.0, 0.2),
        )


def _theta_logpdf_rows(theta_rows: np.ndarray, psi: HyperParameters) -> np.ndarray:
    """Gaussian population log-density of each row of dimensionless
    parameters under psi (diagonal or 2x2 correlated covariance)."""
    mu, sd = psi.mu0, psi.sd0
    z = (theta_rows - mu) / sd
    const = -0.5 * theta_rows.shape[1] * LOG_TWO_PI - np.log(sd).sum()
    if not psi.correlated:
        return const - 0.5 * (z**2).sum(axis=1)
    rho = psi.rho
    quad = (z[:, 0] ** 2 - 2.0 * rho * z[:, 0] * z[:, 1] + z[:, 1] ** 2) / (1.0 - rho**2)
    return const - 0.5 * math.log(1.0 - rho**2) - 0.5 * quad


def _hier_logpdf_rows(rows: np.ndarray, psi: HyperParameters) -> np.ndarray:
    """Joint population log-density of (theta..., sigma) rows under psi."""
    theta_part = _theta_logpdf_rows(rows[:, :-1], psi)
    sigma_part = trunc_normal_logpdf(
        rows[:, -1], psi.mu_sigma, psi.sd_sigma, 0.0, psi.sigma_trunc
    )
    return theta_part + sigma_part


def hier_prior_logpdf(pv: ParameterVector, psi: HyperParameters) -> float:
    """Log-density of one unit's parameters under the population
    distribution: Gaussian over the dimensionless parameters plus the
    truncated-Gaussian error-scale block. Returns -inf when sigma falls
    outside (0, sigma_trunc)."""
    if pv.theta.size != psi.n_theta:
        raise ValueError("parameter/hyperparameter dimension mismatch")
    return float(_hier_logpdf_rows(pv.as_row()[None, :], psi)[0])


def hyper_posterior_logtarget(psi: HyperParameters, stage1, bounds: HyperPriorBounds) -> float:
    """Unnormalized log-posterior of the hyperparameters given stage-1
    sample sets (one per historical dataset).

    Equals ``log p(psi) + sum_i [logsumexp_k hier(row_ik | psi) - log n_i]``
    with the uniform hyper-prior box ``bounds``; -inf outside the box.
    """
    sets = list(stage1)
    if not sets:
        raise ValueError("at least one stage-1 sample set is required")
    mats = []
    for ss in sets:
        mat = np.asarray(getattr(ss, "samples", ss), dtype=float)
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise ValueError("each stage-1 sample set must be a nonempty matrix")
        if mat.shape[1] != psi.n_theta + 1:
            raise ValueError("stage-1 sample dimension does not match hyperparameters")
        mats.append(mat)
    vec = psi.to_vector()
    if not bounds.contains(vec, psi.correlated):
        return -math.inf
    total = bounds.log_prior_const(psi.correlated)
    for mat in mats:
        total += float(logsumexp(_hier_logpdf_rows(mat, psi))) - math.log(mat.shape[0])
    return total


def _decode_hyper_meta(hyper_samples) -> tuple[int, bool, float]:
    prov = getattr(hyper_samples, "provenance", None) or {}
    try:
        return int(prov["n_theta"]), bool(prov["correlated"]), float(prov["sigma_trunc"])
    except KeyError as exc:
        raise ValueError(
            "hyper sample set is missing population metadata "
            "(n_theta/correlated/sigma_trunc in provenance)"
        ) from exc


def mixture_prior_logpdf(pv: ParameterVector, hyper_samples) -> float:
    """Log-density of the hyper-averaged prior for a new unit: an
    equal-weight mixture of population Gaussians over the hyper samples,
    ``logsumexp_s hier(pv | psi_s) - log N_s``."""
    mat = np.asarray(hyper_samples.samples, dtype=float)
    if mat.shape[0] == 0:
        raise ValueError("hyper sample set must be nonempty")
    n_theta, correlated, sigma_trunc = _decode_hyper_meta(hyper_samples)
    if pv.theta.size != n_theta:
        raise ValueError("parameter/hyper-sample dimension mismatch")
    comps = _mixture_component_logpdfs(pv.as_row(), mat, n_theta, correlated, sigma_trunc)
    return float(logsumexp(comps) - math.log(mat.shape[0]))


def _mixture_component_logpdfs(
    row: np.ndarray, hyper_mat: np.ndarray, n_theta: int, correlated: bool, sigma_trunc: float
) -> np.ndarray:
    """Population log-density of one (theta..., sigma) row under every hyper
    sample at once."""
    theta = row[:n_theta]
    sigma = row[-1]
    mu = hyper_mat[:, :n_theta]
    sd = hyper_mat[:, n_theta + 1 : 2 * n_theta + 1]
    mu_s = hyper_mat[:, n_theta]
    sd_s = hyper_mat[:, 2 * n_theta + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (theta - mu) / sd
        if correlated:
            rho = hyper_mat[:, -1]
            quad = (z[:, 0] ** 2 - 2.0 * rho * z[:, 0] * z[:, 1] + z[:, 1] ** 2) / (
                1.0 - rho**2
            )
            theta_part = (
                -LOG_TWO_PI
                - np.sum(np.log(sd), axis=1)
                - 0.5 * np.log(1.0 - rho**2)
                - 0.5 * quad
            )
        else:
            theta_part = (
                -0.5 * n_theta * LOG_TWO_PI
                - np.sum(np.log(sd), axis=1)
                - 0.5 * np.sum(z**2, axis=1)
            )
        if 0.0 < sigma < sigma_trunc:
            zden = ndtr((sigma_trunc - mu_s) / sd_s) - ndtr((0.0 - mu_s) / sd_s)
            sigma_part = np.where(
                zden > 0,
                -0.5 * LOG_TWO_PI
                - np.log(sd_s)
                - (sigma - mu_s) ** 2 / (2.0 * sd_s**2)
                - np.log(zden),
                -np.inf,
            )
        else:
            sigma_part = np.full(hyper_mat.shape[0], -np.inf)
    out = theta_part + sigma_part
    return np.where(np.isnan(out), -np.inf, out)


def dataset_loglik(model, dataset, theta: np.ndarray, sigma: float) -> float:
    """Dataset log-likelihood: sum of per-point log-densities of the model
    curve under the family's error model. Returns -inf when the curve is
    undefined at an observed cycle (e.g. the crack diverged) or sigma is out
    of range.

    This sits in every sampler's innermost loop, so the per-point densities
    are inlined rather than routed through the validating public functions;
    dataset values are already checked at construction and the curve is
    checked here.
    """
    if not sigma > 0 or not np.isfinite(sigma):
        return -math.inf
    cycles = getattr(dataset, "cycles_float", dataset.cycles)
    preds = model.predict(theta, cycles)
    if not np.isfinite(preds).all():
        return -math.inf
    y = dataset.values
    n = y.size
    if model.likelihood == "lognormal":
        if np.any(preds <= 0):
            return -math.inf
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            zeta2 = np.log1p((sigma / preds) ** 2)
            log_y = np.log(y)
            dev = log_y - np.log(preds) + 0.5 * zeta2
            total = float(
                -log_y.sum()
                - 0.5 * n * LOG_TWO_PI
                - 0.5 * np.log(zeta2).sum()
                - (dev**2 / (2.0 * zeta2)).sum()
            )
    elif model.likelihood == "gaussian":
        r = y - preds
        total = float(
            -0.5 * n * (LOG_TWO_PI + 2.0 * math.log(sigma)) - (r @ r) / (2.0 * sigma**2)
        )
    else:
        raise ValueError(f"unknown likelihood family {model.likelihood!r}")
    return total if not math.isnan(total) else -math.inf


def current_posterior_logtarget(
    pv: ParameterVector, current, hyper_samples, model
) -> float:
    """Unnormalized log-posterior of the current unit's parameters: data
    log-likelihood plus the mixture-prior log-density. ``current`` may be
    None or empty, in which case the target reduces to the mixture prior
    (prior-predictive mode)."""
    prior = mixture_prior_logpdf(pv, hyper_samples)
    if prior == -math.inf:
        return -math.inf
    if current is None or len(current.cycles) == 0:
        return prior
    return dataset_loglik(model, current, pv.theta, pv.sigma) + prior
