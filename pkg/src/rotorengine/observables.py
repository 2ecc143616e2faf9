"""Measured quantities derived from trajectory ensembles.

Circular statistics of the wrapped angle, two-time angle correlations,
work/heat powers and efficiency estimators, and pressure-volume cycles.
All functions are pure reductions over immutable ensemble data.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import savgol_filter

from .classical import EnsembleSummary
from .params import DEFAULT_PROFILE, EngineParams, nbar_eff

__all__ = [
    "CorrelationGrid",
    "PVDiagram",
    "circular_R",
    "circular_R_samples",
    "two_time_S",
    "correlation_grid",
    "work_power",
    "heat_power",
    "efficiency",
    "pv_accumulate",
    "cycle_work",
    "series_rate",
]

# Angle marginals with 1 - R[2 phi] below this are treated as uniform.
DEGENERATE_R2 = 1e-9


@dataclass
class CorrelationGrid:
    """Symmetric matrix of two-time angle correlations on a uniform grid."""

    times: np.ndarray
    values: np.ndarray  # (n, n), clipped to [-1, 1]


@dataclass
class PVDiagram:
    """Binned engine cycle: mean mode intensity (pressure) per angle bin.

    The volume coordinate is x = -cos(phi) (piston scale x0 = 1), so the
    enclosed loop area equals work in hbar*g units.  Empty bins carry
    pressure NaN and are flagged, never interpolated.
    """

    bin_centers: np.ndarray
    x: np.ndarray
    pressure: np.ndarray
    counts: np.ndarray
    ideal: Optional[np.ndarray] = None

    @property
    def empty_bins(self):
        return np.flatnonzero(self.counts == 0)


def circular_R(cos_mean, sin_mean):
    """Resultant-length-squared statistic R = <cos>^2 + <sin>^2, in [0, 1]."""
    return cos_mean * cos_mean + sin_mean * sin_mean


def circular_R_samples(phi):
    """R computed from angle samples (any real; wrapping is implicit)."""
    phi = np.asarray(phi)
    return circular_R(np.cos(phi).mean(axis=-1), np.sin(phi).mean(axis=-1))


def _stored_index(summary, t):
    if summary.stored_phi is None:
        raise ValueError("ensemble was run without store_stride; "
                         "no angles retained for two-time analysis")
    j = int(np.argmin(np.abs(summary.stored_times - t)))
    if abs(summary.stored_times[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"t = {t} is not on the stored time grid")
    return j


def two_time_S(summary: EnsembleSummary, t1, t2):
    """Two-time correlation of the periodic angle between stored times.

    S = (R[phi1 - phi2] - R[phi1 + phi2])
        / sqrt((1 - R[2 phi1]) (1 - R[2 phi2])),
    clipped to [-1, 1] against sampling noise.  Raises if either marginal
    is (almost) wrapped-uniform, where the quotient is undefined.
    """
    p1 = summary.stored_phi[:, _stored_index(summary, t1)]
    p2 = summary.stored_phi[:, _stored_index(summary, t2)]
    return _two_time_from_samples(p1, p2)


def _two_time_from_samples(p1, p2):
    d1 = 1.0 - circular_R_samples(2.0 * p1)
    d2 = 1.0 - circular_R_samples(2.0 * p2)
    if d1 < DEGENERATE_R2 or d2 < DEGENERATE_R2:
        raise ValueError("degenerate denominator: angle marginal is "
                         "(almost) uniform after wrapping")
    num = circular_R_samples(p1 - p2) - circular_R_samples(p1 + p2)
    return float(np.clip(num / math.sqrt(d1 * d2), -1.0, 1.0))


def correlation_grid(summary: EnsembleSummary):
    """Full S matrix over the stored time grid (symmetric, diagonal 1).

    Off-diagonal entries with a degenerate marginal (e.g. the exact point
    mass of a deterministic start) are NaN rather than an error, so a grid
    can always be produced for a whole run.
    """
    if summary.stored_phi is None:
        raise ValueError("ensemble was run without store_stride")
    phi = summary.stored_phi
    nt = phi.shape[1]
    out = np.ones((nt, nt))
    for i in range(nt):
        for j in range(i + 1, nt):
            try:
                s = _two_time_from_samples(phi[:, i], phi[:, j])
            except ValueError:
                s = math.nan
            out[i, j] = out[j, i] = s
    return CorrelationGrid(times=summary.stored_times.copy(), values=out)


def work_power(summary: EnsembleSummary, params: EngineParams):
    """Mean output power series <n sin(phi) L_z>/I (pre-adiabatic form)."""
    return summary.mean_n_sin_lz / params.inertia


def heat_power(summary: EnsembleSummary, params: EngineParams):
    """Mean heat input power series from the hot contact.

    kappa * [omega0 <f_H^2 (n_hot - n)> + <f_H^2 cos(phi) (n_hot - n)>],
    i.e. kappa <omega(phi) f_H^2 (n_hot - n)> with omega(phi) = omega0 + cos(phi).
    """
    return params.kappa * (params.omega0 * summary.hot_contact_flux
                           + summary.hot_contact_flux_cos)


def efficiency(summary: EnsembleSummary, params: EngineParams, scaled=False):
    """Measured efficiency series work_power / heat_power.

    Undefined (NaN) wherever the heat power is not positive, e.g. at very
    early times.  With scaled=True the series is given in units of
    2g/omega0.
    """
    ph = heat_power(summary, params)
    pw = work_power(summary, params)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(ph > 0.0, pw / ph, np.nan)
    if scaled:
        eta = eta * params.omega0 / 2.0
    return eta


def pv_accumulate(phi, n, bins=100, params: EngineParams = None,
                  profile=DEFAULT_PROFILE):
    """Bin an ensemble snapshot into a pressure-volume diagram.

    phi, n are per-trajectory samples at one time; phi is wrapped to
    [0, 2 pi) here.  When params is given, the ideal fast-thermalization
    curve nbar(phi) is attached for comparison.
    """
    phi = np.mod(np.asarray(phi), 2.0 * math.pi)
    n = np.asarray(n)
    edges = np.linspace(0.0, 2.0 * math.pi, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    which = np.minimum((phi / (2.0 * math.pi) * bins).astype(int), bins - 1)
    counts = np.bincount(which, minlength=bins)
    sums = np.bincount(which, weights=n, minlength=bins)
    with np.errstate(invalid="ignore"):
        pressure = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    ideal = None
    if params is not None:
        ideal = np.asarray(nbar_eff(centers, params, profile), dtype=float)
    return PVDiagram(bin_centers=centers, x=-np.cos(centers),
                     pressure=pressure, counts=counts, ideal=ideal)


def cycle_work(pv: PVDiagram, use_ideal=False):
    """Signed loop integral of p dx over the bins in angle order.

    Positive for clockwise operation (increasing phi).  The equally spaced
    periodic grid makes the trapezoidal loop sum spectrally accurate for
    smooth cycles.  Raises if more than 5% of the bins are empty.
    """
    p = pv.ideal if use_ideal else pv.pressure
    if p is None:
        raise ValueError("no ideal curve attached to this diagram")
    bins = len(pv.bin_centers)
    if not use_ideal:
        n_empty = len(pv.empty_bins)
        if n_empty > 0.05 * bins:
            raise ValueError(f"{n_empty} of {bins} bins are empty (> 5%)")
        if n_empty:
            p = _fill_circular(p)
    dphi = 2.0 * math.pi / bins
    # dx/dphi = sin(phi) at the bin centers
    return float(np.sum(p * np.sin(pv.bin_centers)) * dphi)


def _fill_circular(p):
    # Replace isolated NaNs by circular linear interpolation of neighbors.
    p = p.copy()
    bad = np.isnan(p)
    idx = np.arange(len(p))
    good = ~bad
    p[bad] = np.interp(idx[bad], idx[good], p[good], period=len(p))
    return p


def series_rate(times, series, window=11, polyorder=2):
    """Smoothed time derivative of an output series.

    Centered Savitzky-Golay differentiation over `window` output points;
    used for the rate-of-increase curves of the ensemble moments.
    """
    times = np.asarray(times)
    dt = times[1] - times[0]
    window = min(window, len(series) - (1 - len(series) % 2))
    return savgol_filter(series, window, polyorder, deriv=1, delta=dt)
