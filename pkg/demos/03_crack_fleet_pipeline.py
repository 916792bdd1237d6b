"""End-to-end crack prognosis: fleet prior, current-unit update, RUL.

Generates a six-unit run-to-failure fleet from a known population
distribution, learns the hyperparameter posterior in two stages, then
updates a seventh (current) unit with partial data and predicts its
remaining useful life. Ground truth is printed alongside every estimate.
"""

import numpy as np

from hbprog.hierarchy import build_model, fit_historical, update_current
from hbprog.io import SyntheticSpec, generate_synthetic
from hbprog.models import CrackGeometry, LoadingSpec
from hbprog.prognosis import PrognosisConfig, predict_trajectory, rul_distribution
from hbprog.samplers import SamplerConfig
from hbprog.targets import HyperParameters, HyperPriorBounds

psi_star = HyperParameters(
    mu0=[1.0, 1.05], sd0=[0.08, 0.02], mu_sigma=0.08, sd_sigma=0.03, sigma_trunc=0.2
)
loading = LoadingSpec("constant", delta_sigma=60.0)
geometry = CrackGeometry(a0=1.0, n0=0.0, a_f=25.0)

print("== synthetic historical fleet ==")
fleet, truth = generate_synthetic(
    SyntheticSpec(
        family="paris", psi=psi_star, n_units=6,
        cycles=np.linspace(0, 24000, 13).astype(int),
        loading=loading, geometry=geometry,
    ),
    seed=21,
)
for ds, unit in zip(fleet, truth["units"]):
    print(
        f"  {ds.unit_id}: {len(ds):2d} points, theta*={np.round(unit['theta'], 3)}, "
        f"last length {ds.values[-1]:6.2f} mm"
    )

print("\n== stage 1 + stage 2 (hyperparameter posterior) ==")
bounds = (np.array([0.6, 0.8, 1e-3]), np.array([1.6, 1.3, 0.2]))
result = fit_historical(
    fleet, bounds, HyperPriorBounds.crack_default(),
    config=SamplerConfig(n_samples=800, seed=4), stage1_thin=400,
)
hyper = result.hyper
truth_map = {"mu_theta1": 1.0, "mu_theta2": 1.05, "mu_sigma": 0.08,
             "sd_theta1": 0.08, "sd_theta2": 0.02, "sd_sigma": 0.03}
for label in hyper.labels:
    lo, hi = np.quantile(hyper.column(label), [0.025, 0.975])
    print(f"  {label:10s} mean {hyper.column(label).mean():6.3f}  "
          f"95% CI [{lo:6.3f}, {hi:6.3f}]  truth {truth_map[label]}")

print("\n== current unit, observed to 60% of its life ==")
current_all, current_truth = generate_synthetic(
    SyntheticSpec(
        family="paris", psi=psi_star, n_units=1,
        cycles=np.linspace(0, 80000, 81).astype(int),
        loading=loading, geometry=geometry, unit_prefix="C",
    ),
    seed=202,
)
unit = current_all[0]
eol_true = current_truth["units"][0]["eol"]
t_c = 0.6 * eol_true
observed = unit.truncate(t_c)
model = build_model(unit)
posterior = update_current(
    observed, hyper, model, SamplerConfig(n_samples=900, thinning=2, seed=8),
    hyper_subsample=400,
)
print(f"  observed {len(observed)} of {len(unit)} points (t_c = {t_c:.0f} cycles)")
print(f"  theta posterior mean {posterior.mean().round(4)}")
print(f"  theta* truth         {np.round(current_truth['units'][0]['theta'], 4)}")

print("\n== remaining useful life ==")
cfg = PrognosisConfig(threshold=25.0, t_c=t_c, horizon=600000)
rul = rul_distribution(posterior, model, cfg)
lo, hi = rul.summary["interval"]
print(f"  RUL mean {rul.summary['mean']:.0f}, median {rul.summary['median']:.0f}")
print(f"  95% interval [{lo:.0f}, {hi:.0f}]  true RUL {eol_true - t_c:.0f}")

bands = predict_trajectory(
    posterior, model, np.linspace(t_c, 1.1 * eol_true, 12), cfg
)
print("\n  predicted length bands (cycle: q2.5 / median / q97.5 mm):")
for cycle, lo_b, med, hi_b in zip(bands.grid, *bands.bands):
    print(f"    {cycle:8.0f}: {lo_b:7.2f} / {med:7.2f} / {hi_b:7.2f}")
