"""Engine parameterization and closed-form performance predictions.

Unit convention used throughout the package: hbar = g = 1, i.e. times are
measured in 1/g, angular momentum in hbar, energies in hbar*g, and both the
thermalization rate `kappa` and the bare mode frequency `omega0` are given
as multiples of g.

The closed-form rates and powers in this module hold in the limit of fast
thermalization, where the bath contact is cycle-averaged over one round-trip
of free rotation.  For the default modulation profile these averages have
exact analytic values; for custom profiles they are evaluated by adaptive
quadrature.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

__all__ = [
    "EngineParams",
    "ModulationProfile",
    "DEFAULT_PROFILE",
    "mod_weights",
    "kappa_eff",
    "nbar_eff",
    "fr_momentum_rate",
    "fr_variance_rate",
    "work_per_cycle",
    "fr_output_power",
    "fr_input_power",
    "fr_efficiency",
    "carnot_floor",
    "cycle_average",
]

# Absolute tolerance used for all cycle-average quadratures.
QUAD_ABS_TOL = 1e-10

_SQ2 = math.sqrt(2.0)


@dataclass(frozen=True)
class EngineParams:
    """Dimensionless parameters of one engine configuration.

    Attributes
    ----------
    inertia : float
        Moment of inertia of the rotor, I*g/hbar.
    kappa : float
        Bath thermalization rate in units of g.
    n_hot, n_cold : float
        Mean thermal occupations of the hot and cold reservoirs.
    omega0 : float
        Bare mode frequency in units of g; enters only the heat and
        efficiency bookkeeping.
    """

    inertia: float
    kappa: float
    n_hot: float
    n_cold: float
    omega0: float = 100.0

    def __post_init__(self):
        if not (self.inertia > 0):
            raise ValueError(f"inertia must be > 0, got {self.inertia}")
        if not (self.kappa > 0):
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not (self.omega0 > 0):
            raise ValueError(f"omega0 must be > 0, got {self.omega0}")
        if not (self.n_hot >= self.n_cold >= 0):
            raise ValueError(
                "occupations must satisfy n_hot >= n_cold >= 0, got "
                f"({self.n_hot}, {self.n_cold})"
            )
        if self.omega0 < 10:
            warnings.warn(
                f"omega0 = {self.omega0} < 10: the weak-coupling regime "
                "omega0 >> 1 is assumed by the heat/efficiency formulas",
                stacklevel=3,
            )

    @property
    def occupation_diff(self):
        return self.n_hot - self.n_cold

    @property
    def occupation_sum(self):
        return self.n_hot + self.n_cold


def _default_f_hot(phi):
    return 0.5 * (1.0 + np.sin(phi))


def _default_f_cold(phi):
    return 0.5 * (1.0 - np.sin(phi))


def _default_f_hot_prime(phi):
    return 0.5 * np.cos(phi)


def _default_f_cold_prime(phi):
    return -0.5 * np.cos(phi)


@dataclass(frozen=True)
class ModulationProfile:
    """Angle-dependent coupling weights of the hot and cold bath contacts.

    Both weights must be 2*pi-periodic with values in [0, 1].  The default
    profile is f_H = (1+sin)/2, f_C = (1-sin)/2, which satisfies
    f_H + f_C = 1 identically; only for this profile are the free-rotation
    constants available in closed form.
    """

    f_hot: Callable = field(default=_default_f_hot)
    f_cold: Callable = field(default=_default_f_cold)
    f_hot_prime: Callable = field(default=_default_f_hot_prime)
    f_cold_prime: Callable = field(default=_default_f_cold_prime)
    is_default: bool = True


DEFAULT_PROFILE = ModulationProfile()


def mod_weights(phi, profile: ModulationProfile = DEFAULT_PROFILE):
    """Coupling weights (f_hot, f_cold) at angle phi (any real, radians)."""
    return profile.f_hot(phi), profile.f_cold(phi)


def kappa_eff(phi, params: EngineParams, profile: ModulationProfile = DEFAULT_PROFILE):
    """Overall decay rate of the mode intensity at angle phi.

    kappa_eff = kappa * (f_hot^2 + f_cold^2); for the default profile this
    is kappa*(1 + sin^2 phi)/2, bounded between kappa/2 and kappa.
    """
    fh, fc = mod_weights(phi, profile)
    return params.kappa * (fh * fh + fc * fc)


def nbar_eff(phi, params: EngineParams, profile: ModulationProfile = DEFAULT_PROFILE):
    """Effective bath occupation seen by the mode at angle phi.

    Weighted combination of the two reservoir occupations; lies between
    n_cold and n_hot for every angle.
    """
    fh, fc = mod_weights(phi, profile)
    fh2, fc2 = fh * fh, fc * fc
    return (fh2 * params.n_hot + fc2 * params.n_cold) / (fh2 + fc2)


def cycle_average(func, points=()):
    """Average of func over one cycle, (1/2pi) * integral_0^2pi func(phi) dphi.

    Adaptive quadrature with absolute tolerance QUAD_ABS_TOL.
    """
    val, _ = quad(func, 0.0, 2.0 * math.pi, epsabs=QUAD_ABS_TOL,
                  limit=200, points=list(points) or None)
    return val / (2.0 * math.pi)


def fr_momentum_rate(params: EngineParams,
                     profile: ModulationProfile = DEFAULT_PROFILE):
    """Growth rate of the mean angular momentum in the free-rotation limit.

    Equals (1 - 1/sqrt(2)) * (n_hot - n_cold) for the default profile.
    """
    if profile.is_default:
        return (1.0 - 1.0 / _SQ2) * params.occupation_diff
    return cycle_average(
        lambda p: math.sin(p) * nbar_eff(p, params, profile))


def fr_variance_rate(params: EngineParams,
                     profile: ModulationProfile = DEFAULT_PROFILE):
    """Growth rate of the angular-momentum variance in the free-rotation limit.

    For the default profile:
    (1/kappa) * [(1 - 1/sqrt(2)) (n_hot+n_cold)^2 + 3/(8 sqrt(2)) (n_hot-n_cold)^2].
    For custom profiles the same cycle average,
    2 <(sin(phi) nbar(phi))^2 / kappa_eff(phi)>, is evaluated by quadrature.
    """
    if profile.is_default:
        s, d = params.occupation_sum, params.occupation_diff
        return ((1.0 - 1.0 / _SQ2) * s * s + 3.0 / (8.0 * _SQ2) * d * d) / params.kappa

    def integrand(p):
        drive = math.sin(p) * nbar_eff(p, params, profile)
        return 2.0 * drive * drive / kappa_eff(p, params, profile)

    return cycle_average(integrand)


def work_per_cycle(params: EngineParams,
                   profile: ModulationProfile = DEFAULT_PROFILE):
    """Maximal mean work output per engine cycle (fast thermalization).

    Loop integral of nbar(phi) sin(phi) over one cycle; equals
    pi (2 - sqrt(2)) (n_hot - n_cold) for the default profile.
    """
    if profile.is_default:
        return math.pi * (2.0 - _SQ2) * params.occupation_diff
    return 2.0 * math.pi * cycle_average(
        lambda p: math.sin(p) * nbar_eff(p, params, profile))


def fr_output_power(params: EngineParams, mean_lz,
                    profile: ModulationProfile = DEFAULT_PROFILE):
    """Mean output power at mean angular momentum mean_lz: W_cyc/(2 pi) * Lz/I."""
    return work_per_cycle(params, profile) / (2.0 * math.pi) * mean_lz / params.inertia


def fr_input_power(params: EngineParams,
                   profile: ModulationProfile = DEFAULT_PROFILE):
    """Mean heat input power drawn from the hot bath (free-rotation limit).

    omega0 * kappa * (sqrt(2) - 5/4)/4 * (n_hot - n_cold) for the default
    profile; cycle-averaged by quadrature otherwise.
    """
    if profile.is_default:
        return (params.omega0 * params.kappa * (_SQ2 - 1.25) / 4.0
                * params.occupation_diff)

    def integrand(p):
        fh = profile.f_hot(p)
        omega = params.omega0 + math.cos(p)
        return omega * fh * fh * (params.n_hot - nbar_eff(p, params, profile))

    return params.kappa * cycle_average(integrand)


def fr_efficiency(params: EngineParams, mean_lz, scaled=False,
                  profile: ModulationProfile = DEFAULT_PROFILE):
    """Predicted efficiency at mean angular momentum mean_lz.

    Ratio of fr_output_power to fr_input_power; for the default profile
    (2/omega0) * (Lz / I kappa) * (2 - sqrt(2)) / (sqrt(2) - 5/4).
    With scaled=True the result is given in units of 2g/omega0, the natural
    scale of the Carnot bound.

    Raises ValueError when n_hot == n_cold (zero work and zero heat).
    """
    if params.n_hot == params.n_cold:
        raise ValueError("efficiency undefined for n_hot == n_cold")
    eta = fr_output_power(params, mean_lz, profile) / fr_input_power(params, profile)
    if scaled:
        return eta * params.omega0 / 2.0
    return eta


def carnot_floor(params: EngineParams):
    """Carnot bound implied by the work condition, 2g/(omega0 + g).

    This is the unexpanded form of the bound; its leading order is
    2g/omega0.  Measured efficiencies are compared against it (eta < bound
    is asserted, never saturation).

    Raises ValueError if omega0 <= 1 (= g), where no work condition can be
    satisfied.
    """
    if params.omega0 <= 1.0:
        raise ValueError("carnot_floor requires omega0 > g (omega0 > 1)")
    return 2.0 / (params.omega0 + 1.0)
