"""Trajectory bands, end-of-life search and the RUL distribution.

Posterior parameter samples are pushed through the degradation model to get
per-cycle quantile bands, per-sample end-of-life times (algebraic inversion
for crack growth, integer first-crossing for battery capacity) and the
remaining-useful-life distribution RUL = t_EOL - t_c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from hbprog.models import DegradationModel, NoFailureError, ParisCrackModel
from hbprog.samplers import SampleSet


@dataclass(frozen=True)
class PrognosisConfig:
    """Threshold-crossing setup.

    For crack growth the threshold is a critical length the crack crosses
    upward; for batteries it is a capacity floor crossed downward. ``t_c``
    is the current cycle, ``horizon`` the last cycle searched; samples whose
    trajectory never crosses by the horizon are censored.
    """

    threshold: float
    t_c: float
    horizon: float
    quantiles: tuple[float, ...] = (0.025, 0.5, 0.975)
    include_observation_noise: bool = False

    def __post_init__(self):
        if not self.horizon > self.t_c:
            raise ValueError("horizon must exceed the current cycle t_c")
        q = tuple(float(v) for v in self.quantiles)
        if any(not 0 < v < 1 for v in q) or list(q) != sorted(q):
            raise ValueError("quantiles must be sorted and inside (0, 1)")
        object.__setattr__(self, "quantiles", q)


@dataclass
class PrognosisResult:
    """Prediction artifacts: trajectory quantile bands over a cycle grid
    and/or end-of-life and RUL samples with their summary statistics.

    RUL is derived per sample as ``t_eol - t_c`` and never recomputed
    independently; censored samples carry the horizon lower bound and are
    flagged."""

    config: PrognosisConfig
    grid: np.ndarray | None = None
    bands: np.ndarray | None = None  # shape (len(quantiles), len(grid))
    t_eol: np.ndarray | None = None
    rul: np.ndarray | None = None
    censored: np.ndarray | None = None
    summary: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


def predict_trajectory(
    samples: SampleSet,
    model: DegradationModel,
    grid,
    cfg: PrognosisConfig,
    seed: int = 0,
) -> PrognosisResult:
    """Per-cycle quantile bands of the predicted degradation.

    Every posterior sample contributes one deterministic curve; a sample
    whose crack solution diverges holds +inf from the divergence cycle on
    (threshold-crossed) and shapes the upper quantiles accordingly. With
    ``include_observation_noise`` each curve is perturbed by the family's
    error model using that sample's sigma.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty strictly increasing 1-d array")
    if samples.n == 0:
        raise ValueError("at least one posterior sample is required")
    rng = np.random.default_rng(seed)
    curves = np.empty((samples.n, grid.size))
    for i, row in enumerate(samples.samples):
        theta, sigma = row[:-1], float(row[-1])
        pred = model.predict(theta, grid)
        if cfg.include_observation_noise:
            pred = _perturb(pred, sigma, model.likelihood, rng)
        curves[i] = pred
    # order-statistic quantiles stay well defined when diverged samples put
    # +inf into a column (linear interpolation would produce NaN there)
    bands = np.quantile(curves, cfg.quantiles, axis=0, method="inverted_cdf")
    return PrognosisResult(
        config=cfg,
        grid=grid,
        bands=bands,
        provenance={"n_samples": samples.n, "family": model.family, "seed": seed},
    )


def _perturb(pred: np.ndarray, sigma: float, likelihood: str, rng) -> np.ndarray:
    finite = np.isfinite(pred)
    out = pred.copy()
    if likelihood == "gaussian":
        out[finite] = pred[finite] + sigma * rng.standard_normal(int(finite.sum()))
        return out
    # lognormal with mean equal to the prediction
    p = pred[finite]
    zeta2 = np.log1p((sigma / p) ** 2)
    eta = np.log(p) - 0.5 * zeta2
    out[finite] = np.exp(eta + np.sqrt(zeta2) * rng.standard_normal(p.size))
    return out


def end_of_life(row, model: DegradationModel, cfg: PrognosisConfig) -> tuple[float, bool]:
    """End-of-life cycle for one parameter sample, or a censored marker.

    Crack growth inverts the closed form algebraically (already at or past
    the threshold at t_c gives t_EOL = t_c). Battery capacity is scanned on
    the integer cycle grid from t_c to the horizon for the first cycle at or
    below the floor; capacities are per-cycle measurements, so integer
    resolution is the data's own granularity. Returns ``(t_eol, censored)``
    with ``t_eol = horizon`` as the lower bound when censored.
    """
    row = np.asarray(row, dtype=float)
    theta = row[: model.n_theta]
    if isinstance(model, ParisCrackModel):
        if cfg.threshold < model.geometry.a0:
            # crossed before the crack was first observed
            return float(cfg.t_c), False
        try:
            nf = model.cycles_to_failure(theta, a_f=cfg.threshold)
        except NoFailureError:
            return float(cfg.horizon), True
        if nf <= cfg.t_c:
            return float(cfg.t_c), False
        if nf > cfg.horizon:
            return float(cfg.horizon), True
        return float(nf), False
    # battery families: first integer cycle in (t_c, horizon] at/below floor
    k_start = max(int(math.floor(cfg.t_c)) + 1, 1)
    k_grid = np.arange(k_start, int(math.floor(cfg.horizon)) + 1, dtype=float)
    if k_grid.size == 0:
        return float(cfg.horizon), True
    q = model.predict(theta, k_grid)
    below = q <= cfg.threshold
    if not np.any(below):
        return float(cfg.horizon), True
    return float(k_grid[int(np.argmax(below))]), False


def rul_distribution(
    samples: SampleSet, model: DegradationModel, cfg: PrognosisConfig
) -> PrognosisResult:
    """Remaining-useful-life distribution over all posterior samples.

    Maps :func:`end_of_life` over the sample set; RUL is exactly
    ``t_eol - t_c`` per sample. Censored samples enter the summary at their
    ``horizon - t_c`` lower bound; the summary records the censored fraction
    and flags the result uninformative when every sample is censored.
    """
    if samples.n == 0:
        raise ValueError("at least one posterior sample is required")
    t_eol = np.empty(samples.n)
    censored = np.zeros(samples.n, dtype=bool)
    for i, row in enumerate(samples.samples):
        t_eol[i], censored[i] = end_of_life(row, model, cfg)
    rul = t_eol - cfg.t_c
    frac = float(censored.mean())
    summary = {
        "mean": float(rul.mean()),
        "median": float(np.median(rul)),
        "interval": [float(v) for v in np.quantile(rul, [cfg.quantiles[0], cfg.quantiles[-1]])],
        "censored_fraction": frac,
        "informative": frac < 1.0,
    }
    if frac == 1.0:
        summary["note"] = "no informative RUL within horizon"
    return PrognosisResult(
        config=cfg,
        t_eol=t_eol,
        rul=rul,
        censored=censored,
        summary=summary,
        provenance={"n_samples": samples.n, "family": model.family},
    )
