import numpy as np
import pytest

from hbprog.hierarchy import Dataset
from hbprog.models import CrackGeometry, DegradationModel, LoadingSpec
from hbprog.targets import HyperParameters
from hbprog.io import SyntheticSpec, generate_synthetic

CONST_LOADING = LoadingSpec("constant", delta_sigma=60.0)
GEOMETRY = CrackGeometry(a0=1.0, n0=0.0, a_f=25.0)


class ConstantCapacity(DegradationModel):
    """Dummy battery family: capacity never changes. Used as the known-bad
    rival in model-recovery checks."""

    family = "batt-const"
    likelihood = "gaussian"
    n_theta = 1
    theta_labels = ("theta1",)
    nominal_scales = (2.0,)

    def admissible(self, theta):
        return bool(np.isfinite(theta[0]) and theta[0] > 0)

    def predict(self, theta, cycles):
        k = np.atleast_1d(np.asarray(cycles, dtype=float))
        if not self.admissible(theta):
            return np.full(k.shape, np.inf)
        return np.full(k.shape, 2.0 * float(theta[0]))

CRACK_PSI = HyperParameters(
    mu0=[1.0, 1.05], sd0=[0.08, 0.02], mu_sigma=0.08, sd_sigma=0.03, sigma_trunc=0.2
)
CRACK_BOUNDS = (np.array([0.6, 0.8, 1e-3]), np.array([1.6, 1.3, 0.2]))


@pytest.fixture(scope="session")
def crack_fleet():
    """Six-unit synthetic crack fleet with ground truth."""
    spec = SyntheticSpec(
        family="paris",
        psi=CRACK_PSI,
        n_units=6,
        cycles=np.linspace(0, 24000, 13).astype(int),
        loading=CONST_LOADING,
        geometry=GEOMETRY,
    )
    return generate_synthetic(spec, seed=21)


@pytest.fixture(scope="session")
def current_unit():
    """One synthetic current unit observed over most of its life."""
    spec = SyntheticSpec(
        family="paris",
        psi=CRACK_PSI,
        n_units=1,
        cycles=np.linspace(0, 80000, 81).astype(int),
        loading=CONST_LOADING,
        geometry=GEOMETRY,
        unit_prefix="C",
    )
    datasets, truth = generate_synthetic(spec, seed=202)
    return datasets[0], truth["units"][0]


def make_dataset(cycles, values, family="paris", **kw):
    defaults = dict(
        unit_id="U1",
        units="mm" if family == "paris" else "Ahr",
        loading=CONST_LOADING if family == "paris" else None,
        geometry=GEOMETRY if family == "paris" else None,
    )
    defaults.update(kw)
    return Dataset(
        unit_id=defaults.pop("unit_id"),
        cycles=np.asarray(cycles),
        values=np.asarray(values, dtype=float),
        family=family,
        **defaults,
    )
