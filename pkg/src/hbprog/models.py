"""Closed-form degradation model families with nominal-value normalization.

Two physics are covered: Paris-law fatigue crack growth (length in mm as a
function of load cycles) and lithium-battery capacity fade (Ahr as a function
of discharge cycle), the latter in single- and double-exponential variants.
Model parameters are dimensionless, defined relative to nominal physical
values, which keeps all inference targets on comparable scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Half-width of the band around m = 2 inside which the crack-growth solution
# switches to the exact exponential (singular-limit) branch. The factored
# closed-form evaluation stays cancellation-safe down to |m - 2| ~ 1e-12, and
# at 1e-7 the branch agrees with the exact-m solution to well under 1e-6
# relative even at the band edge.
PARIS_M_TOL = 1e-7

CRACK_NOMINALS = (2.0, -18.6)
BATT_SINGLE_NOMINALS = (2.0, -1.0, -100.0)
BATT_DOUBLE_NOMINALS = (1.92, -0.02, -0.003, -0.05)

SQRT_PI = math.sqrt(math.pi)


class CrackDivergedError(ArithmeticError):
    """The crack-growth closed form diverges before the requested cycle."""

    def __init__(self, cycle: float):
        self.cycle = float(cycle)
        super().__init__(f"crack diverged before cycle {cycle:g}")


class NoFailureError(ValueError):
    """The crack never reaches the critical length (no finite failure time)."""


@dataclass(frozen=True)
class LoadingSpec:
    """Stress loading applied to a cracked specimen.

    ``constant`` mode carries a single amplitude ``delta_sigma`` (MPa).
    ``two-block`` mode alternates two constant-amplitude blocks with cycle
    counts ``n1`` and ``n2``; an equivalent amplitude is derived per value of
    the Paris exponent via :func:`equivalent_stress`.
    """

    mode: str
    delta_sigma: float | None = None
    delta_sigma1: float | None = None
    n1: float | None = None
    delta_sigma2: float | None = None
    n2: float | None = None

    def __post_init__(self):
        if self.mode == "constant":
            if self.delta_sigma is None or not self.delta_sigma > 0:
                raise ValueError("constant loading requires delta_sigma > 0")
        elif self.mode == "two-block":
            for name in ("delta_sigma1", "delta_sigma2", "n1", "n2"):
                if getattr(self, name) is None:
                    raise ValueError(f"two-block loading requires {name}")
            if not (self.delta_sigma1 > 0 and self.delta_sigma2 > 0):
                raise ValueError("block amplitudes must be positive")
            if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 <= 0:
                raise ValueError("block cycle counts must be >= 0 with n1 + n2 > 0")
        else:
            raise ValueError(f"unknown loading mode {self.mode!r}")


@dataclass(frozen=True)
class CrackGeometry:
    """Initial and critical crack state: length a0 (mm) observed at cycle n0,
    critical length a_f (mm)."""

    a0: float
    n0: float
    a_f: float

    def __post_init__(self):
        if not (0 < self.a0 <= self.a_f):
            raise ValueError("require 0 < a0 <= a_f")
        if self.n0 < 0:
            raise ValueError("require n0 >= 0")


@dataclass(frozen=True)
class CrackParams:
    """Normalized Paris parameters: theta1 = m / m0, theta2 = log C / log C0.

    ``log_c0`` is on the natural-log scale. The recovered physical values are
    exposed as ``m``, ``log_c`` and ``c``.
    """

    theta1: float
    theta2: float
    m0: float = CRACK_NOMINALS[0]
    log_c0: float = CRACK_NOMINALS[1]

    def __post_init__(self):
        if not (self.theta1 > 0 and math.isfinite(self.theta1)):
            raise ValueError("theta1 must be positive and finite")
        if not (math.isfinite(self.m) and math.isfinite(self.log_c)):
            raise ValueError("recovered m and log C must be finite")

    @property
    def m(self) -> float:
        return self.theta1 * self.m0

    @property
    def log_c(self) -> float:
        return self.theta2 * self.log_c0

    @property
    def c(self) -> float:
        return math.exp(self.log_c)


@dataclass(frozen=True)
class BatterySingleParams:
    """Normalized single-exponential capacity parameters.

    Physical values: C0 = theta1 * nominals[0], a = theta2 * nominals[1],
    b = theta3 * nominals[2].
    """

    theta1: float
    theta2: float
    theta3: float
    nominals: tuple[float, float, float] = BATT_SINGLE_NOMINALS

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("physical initial capacity C0 must be positive")

    @property
    def c0(self) -> float:
        return self.theta1 * self.nominals[0]

    @property
    def a(self) -> float:
        return self.theta2 * self.nominals[1]

    @property
    def b(self) -> float:
        return self.theta3 * self.nominals[2]


@dataclass(frozen=True)
class BatteryDoubleParams:
    """Normalized double-exponential capacity parameters (four terms)."""

    theta1: float
    theta2: float
    theta3: float
    theta4: float
    nominals: tuple[float, float, float, float] = BATT_DOUBLE_NOMINALS

    def __post_init__(self):
        if not self.a + self.c > 0:
            raise ValueError("capacity at cycle 0 (a + c) must be positive")

    @property
    def a(self) -> float:
        return self.theta1 * self.nominals[0]

    @property
    def b(self) -> float:
        return self.theta2 * self.nominals[1]

    @property
    def c(self) -> float:
        return self.theta3 * self.nominals[2]

    @property
    def d(self) -> float:
        return self.theta4 * self.nominals[3]


def equivalent_stress(loading: LoadingSpec, m: float) -> float:
    """Equivalent constant amplitude for the given loading and Paris exponent.

    Two-block loading collapses to the power mean
    ``((n1 * ds1^m + n2 * ds2^m) / (n1 + n2))^(1/m)``; constant loading
    returns its amplitude unchanged. Computed in log space so large exponents
    cannot overflow.
    """
    if loading.mode == "constant":
        return float(loading.delta_sigma)
    if not math.isfinite(m):
        raise ValueError("Paris exponent m must be finite")
    if m == 0.0:
        raise ValueError("power mean undefined for m = 0")
    n1, n2 = float(loading.n1), float(loading.n2)
    total = n1 + n2
    if total <= 0:
        raise ValueError("two-block loading requires n1 + n2 > 0")
    terms = []
    if n1 > 0:
        terms.append(math.log(n1) + m * math.log(loading.delta_sigma1))
    if n2 > 0:
        terms.append(math.log(n2) + m * math.log(loading.delta_sigma2))
    log_mean = np.logaddexp.reduce(terms) - math.log(total)
    return float(math.exp(log_mean / m))


def _log_growth_rate(params: CrackParams, delta_sigma: float) -> float:
    """log of C * (delta_sigma * sqrt(pi))^m, the cycle-rate prefactor."""
    return params.log_c + params.m * math.log(delta_sigma * SQRT_PI)


def _profile_raw(
    m: float, log_c: float, a0: float, n0: float, ds: float, n_cycles: np.ndarray
) -> np.ndarray:
    """Crack length per cycle for raw physical parameters; +inf at and
    beyond the divergence cycle.

    Uses the integration-consistent closed form
    ``a = (a0^e + e * C * (ds * sqrt(pi))^m * (N - N0))^(1/e)`` with
    ``e = 1 - m/2``, evaluated in the factored shape
    ``a0 * exp(log1p(r) / e)`` with ``r = e * rate * dn * a0^(-e)`` so the
    m -> 2 limit is reached without cancellation. Inside the ``PARIS_M_TOL``
    band the exact exponential solution ``a0 * exp(C * (ds*sqrt(pi))^2 * dn)``
    is used. A zero rate (log C underflowing exp, the C = 0 surrogate) gives
    a0 at every cycle.
    """
    dn = n_cycles - n0
    with np.errstate(over="ignore"):
        if abs(m - 2.0) < PARIS_M_TOL:
            rate = math.exp(log_c + 2.0 * math.log(ds * SQRT_PI))
            return a0 * np.exp(rate * dn)
        e = 1.0 - m / 2.0
        log_scale = log_c + m * math.log(ds * SQRT_PI) - e * math.log(a0)
        try:
            scale = e * math.exp(log_scale)
        except OverflowError:
            scale = e * math.inf
        if math.isfinite(scale):
            r = scale * dn
        else:
            # infinite rate: instant divergence everywhere except dn = 0
            with np.errstate(invalid="ignore"):
                r = np.where(dn == 0.0, 0.0, scale * dn)
        base = 1.0 + r
        if base.min() > 0.0:
            return a0 * np.exp(np.log1p(r) / e)
        diverged = base <= 0.0
        a = np.where(
            diverged, np.inf, a0 * np.exp(np.log1p(np.where(diverged, 0.0, r)) / e)
        )
    return a


def _paris_profile(
    params: CrackParams,
    geometry: CrackGeometry,
    loading: LoadingSpec,
    n_cycles: np.ndarray,
) -> np.ndarray:
    m = params.m
    ds = equivalent_stress(loading, m)
    return _profile_raw(m, params.log_c, geometry.a0, geometry.n0, ds, n_cycles)


def crack_length(
    params: CrackParams,
    geometry: CrackGeometry,
    loading: LoadingSpec,
    n_cycles,
):
    """Crack length (mm) after ``n_cycles`` total cycles.

    Accepts a scalar or array of cycles, all >= the geometry's n0. Raises
    :class:`CrackDivergedError` if the closed form diverges at or before any
    requested cycle (the caller treats this as end-of-life reached).
    """
    scalar = np.ndim(n_cycles) == 0
    n = np.atleast_1d(np.asarray(n_cycles, dtype=float))
    if np.any(n < geometry.n0):
        raise ValueError("requested cycles must be >= geometry.n0")
    a = _paris_profile(params, geometry, loading, n)
    bad = ~np.isfinite(a)
    if np.any(bad):
        raise CrackDivergedError(float(np.min(n[bad])))
    return float(a[0]) if scalar else a


def cycles_to_failure(
    params: CrackParams,
    geometry: CrackGeometry,
    loading: LoadingSpec,
    a_f: float | None = None,
) -> float:
    """Cycle count at which the crack reaches the critical length.

    Inverts the implemented closed form exactly (including the m ~ 2
    exponential branch). ``a_f`` overrides the geometry's critical length,
    which is how prognosis thresholds are applied. Raises
    :class:`NoFailureError` when C <= 0 leaves the crack static.
    """
    m = params.m
    ds = equivalent_stress(loading, m)
    af = geometry.a_f if a_f is None else float(a_f)
    if af < geometry.a0:
        raise ValueError("critical length below initial length")
    if af == geometry.a0:
        return float(geometry.n0)
    if abs(m - 2.0) < PARIS_M_TOL:
        rate = math.exp(params.log_c + 2.0 * math.log(ds * SQRT_PI))
        if rate == 0.0:
            raise NoFailureError("no finite failure time: crack growth rate is zero")
        return geometry.n0 + math.log(af / geometry.a0) / rate
    rate = math.exp(_log_growth_rate(params, ds))
    if rate == 0.0:
        raise NoFailureError("no finite failure time: crack growth rate is zero")
    e = 1.0 - m / 2.0
    # N_f = n0 + (af^e - a0^e) / (e * rate) in the cancellation-safe shape
    # n0 + a0^e * expm1(e * log(af/a0)) / (e * rate)
    num = math.exp(e * math.log(geometry.a0)) * math.expm1(e * math.log(af / geometry.a0))
    return geometry.n0 + num / (e * rate)


def battery_capacity_single(params: BatterySingleParams, k) -> float | np.ndarray:
    """Capacity (Ahr) of the single-exponential model, C0 + a * exp(b / k).

    Defined for discharge cycles k >= 1 (the model divides by k).
    """
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 1):
        raise ValueError("cycle index below model domain (k >= 1 required)")
    q = params.c0 + params.a * np.exp(params.b / karr)
    return float(q) if np.isscalar(k) else q


def battery_capacity_double(params: BatteryDoubleParams, k) -> float | np.ndarray:
    """Capacity (Ahr) of the double-exponential model,
    a * exp(b * k) + c * exp(d * k), defined for k >= 0."""
    karr = np.asarray(k, dtype=float)
    if np.any(karr < 0):
        raise ValueError("cycle index must be >= 0")
    q = params.a * np.exp(params.b * karr) + params.c * np.exp(params.d * karr)
    return float(q) if np.isscalar(k) else q


class DegradationModel:
    """Contract shared by all model families.

    A model evaluates the deterministic degradation curve for a vector of
    dimensionless parameters at the requested cycles. ``predict`` never
    raises for inadmissible parameters or diverged growth; it returns +inf
    entries instead, which likelihoods map to -inf and trajectory code treats
    as threshold-crossed. All evaluations are pure functions of their inputs.
    """

    family: str
    likelihood: str
    n_theta: int
    theta_labels: tuple[str, ...]
    nominal_scales: tuple[float, ...]

    #: generous per-component range of dimensionless values that are
    #: physically meaningful (parameters are defined relative to nominals,
    #: so everything real sits near 1); used to window mode searches, never
    #: to constrain a posterior
    plausible_lo: tuple[float, ...]
    plausible_hi: tuple[float, ...]

    def predict(self, theta: np.ndarray, cycles) -> np.ndarray:
        raise NotImplementedError

    def admissible(self, theta: np.ndarray) -> bool:
        raise NotImplementedError

    def normalize_gaussian(self, means, sds):
        """Map independent Gaussians on physical parameters to the
        dimensionless parameterization (exact linear rescaling)."""
        scales = np.asarray(self.nominal_scales, dtype=float)
        return np.asarray(means, float) / scales, np.asarray(sds, float) / np.abs(scales)


class ParisCrackModel(DegradationModel):
    """Paris-law crack growth bound to one specimen's geometry and loading.

    The equivalent stress amplitude of two-block loading is re-evaluated for
    every parameter vector, since it depends on the sampled exponent m.
    """

    family = "paris"
    likelihood = "lognormal"
    n_theta = 2
    theta_labels = ("theta1", "theta2")
    plausible_lo = (0.05, 0.2)
    plausible_hi = (3.0, 2.5)

    def __init__(
        self,
        geometry: CrackGeometry,
        loading: LoadingSpec,
        nominals: tuple[float, float] = CRACK_NOMINALS,
    ):
        self.geometry = geometry
        self.loading = loading
        self.m0, self.log_c0 = float(nominals[0]), float(nominals[1])
        self.nominal_scales = (self.m0, self.log_c0)
        self._ds_const = loading.delta_sigma if loading.mode == "constant" else None

    def _params(self, theta) -> CrackParams:
        return CrackParams(float(theta[0]), float(theta[1]), self.m0, self.log_c0)

    def admissible(self, theta) -> bool:
        t1, t2 = float(theta[0]), float(theta[1])
        return t1 > 0 and math.isfinite(t1) and math.isfinite(t2)

    def predict(self, theta, cycles) -> np.ndarray:
        n = np.atleast_1d(np.asarray(cycles, dtype=float))
        if not self.admissible(theta):
            return np.full(n.shape, np.inf)
        m = float(theta[0]) * self.m0
        log_c = float(theta[1]) * self.log_c0
        ds = self._ds_const if self._ds_const is not None else equivalent_stress(self.loading, m)
        return _profile_raw(m, log_c, self.geometry.a0, self.geometry.n0, ds, n)

    def cycles_to_failure(self, theta, a_f: float | None = None) -> float:
        return cycles_to_failure(self._params(theta), self.geometry, self.loading, a_f)


class BatterySingleModel(DegradationModel):
    """Single-exponential capacity model, valid for cycle indices k >= 1."""

    family = "batt-single"
    likelihood = "gaussian"
    n_theta = 3
    theta_labels = ("theta1", "theta2", "theta3")
    plausible_lo = (0.01, 0.01, 0.01)
    plausible_hi = (3.0, 3.0, 3.0)

    def __init__(self, nominals: tuple[float, float, float] = BATT_SINGLE_NOMINALS):
        self.nominals = tuple(float(v) for v in nominals)
        self.nominal_scales = self.nominals

    def admissible(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(np.isfinite(t)) and t[0] * self.nominals[0] > 0)

    def predict(self, theta, cycles) -> np.ndarray:
        k = np.atleast_1d(np.asarray(cycles, dtype=float))
        if not self.admissible(theta):
            return np.full(k.shape, np.inf)
        p = BatterySingleParams(*(float(v) for v in theta), nominals=self.nominals)
        return np.asarray(battery_capacity_single(p, k), dtype=float)


class BatteryDoubleModel(DegradationModel):
    """Double-exponential capacity model, valid for cycle indices k >= 0."""

    family = "batt-double"
    likelihood = "gaussian"
    n_theta = 4
    theta_labels = ("theta1", "theta2", "theta3", "theta4")
    plausible_lo = (0.01, 0.01, 0.01, 0.01)
    plausible_hi = (3.0, 3.0, 3.0, 3.0)

    def __init__(self, nominals: tuple[float, float, float, float] = BATT_DOUBLE_NOMINALS):
        self.nominals = tuple(float(v) for v in nominals)
        self.nominal_scales = self.nominals

    def admissible(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(t)):
            return False
        return t[0] * self.nominals[0] + t[2] * self.nominals[2] > 0

    def predict(self, theta, cycles) -> np.ndarray:
        k = np.atleast_1d(np.asarray(cycles, dtype=float))
        if not self.admissible(theta):
            return np.full(k.shape, np.inf)
        p = BatteryDoubleParams(*(float(v) for v in theta), nominals=self.nominals)
        with np.errstate(over="ignore"):
            q = battery_capacity_double(p, k)
        return np.asarray(q, dtype=float)
