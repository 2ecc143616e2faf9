"""Classical stochastic dynamics of the rotor engine.

The backaction-free model integrates the Ito system

    d phi = (L_z / I) dt
    d L_z = n sin(phi) dt
    d n   = -kappa(phi) [n - nbar(phi)] dt + sqrt(2 n kappa(phi) nbar(phi)) dW

with hbar = g = 1; the backaction variant adds an independent momentum
noise term driven by a second Wiener process.  The angle is kept unwrapped
(real line); wrapping happens only at the observable level.

Ensembles are seeded with a counter-based rule: trajectory i of a run with
base seed s draws from its own Philox stream with key s*2^64 + i, so
results are reproducible and independent of execution order or worker
count.  Batched time stepping is delegated to rotorengine.kernels.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import kernels
from .params import (DEFAULT_PROFILE, EngineParams, ModulationProfile,
                     kappa_eff, nbar_eff)

__all__ = [
    "ClassicalState",
    "InitSpec",
    "Trajectory",
    "EnsembleSummary",
    "TrajectoryDivergence",
    "sample_initial",
    "step_euler",
    "step_milstein",
    "step_backaction",
    "simulate_trajectory",
    "run_ensemble",
    "calibrate_dt",
    "max_stable_dt",
    "trajectory_rng",
]

SCHEMES = ("euler", "milstein")


class ClassicalState(NamedTuple):
    phi: float
    lz: float
    n: float


class TrajectoryDivergence(RuntimeError):
    """A trajectory produced a non-finite state."""

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(message or f"non-finite state at step {step_index}")


@dataclass(frozen=True)
class InitSpec:
    """Initial-condition recipe for the rotor and the mode intensity.

    kind "gaussian": phi ~ Normal(mu, 1/2k), lz ~ Normal(0, k/2) (the
    Gaussian mimic of a localized periodic wavepacket, valid for k >= 1),
    n ~ Exponential(mean nbar(phi)).
    kind "deterministic": (mu, 0, nbar(mu)) exactly.

    n0, when set, fixes the initial mode intensity instead of the
    stationary draw; n0 = 0 is the dark-mode start that matches a quantum
    run whose mode begins in vacuum.
    """

    kind: str = "gaussian"
    k: float = 10.0
    mu: float = math.pi / 2.0
    n0: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "deterministic"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "gaussian" and self.k < 1:
            raise ValueError("gaussian init requires k >= 1 "
                             "(Gaussian approximation invalid below)")
        if self.n0 is not None and self.n0 < 0:
            raise ValueError("n0 must be >= 0")


@dataclass
class Trajectory:
    times: np.ndarray        # (n_out,), strictly increasing
    states: np.ndarray       # (n_out, 3) columns phi, lz, n
    seed: int


@dataclass
class EnsembleSummary:
    """Per-time sample moments over an ensemble of trajectories.

    All moments are exact sample moments over the retained (non-diverged)
    trajectories.  `stored_phi`, when present, holds decimated angle samples
    (n_traj, n_stored) for two-time correlation analysis; `pv_snapshots`
    maps snapshot times to (phi, n) sample pairs.
    """

    times: np.ndarray
    mean_lz: np.ndarray
    var_lz: np.ndarray
    mean_phi: np.ndarray
    mean_cos: np.ndarray
    mean_sin: np.ndarray
    mean_cos2: np.ndarray
    mean_sin2: np.ndarray
    mean_n: np.ndarray
    mean_n_sin: np.ndarray
    mean_n_sin_lz: np.ndarray
    hot_contact_flux: np.ndarray       # <f_H^2(phi) (n_hot - n)>
    hot_contact_flux_cos: np.ndarray   # <f_H^2(phi) cos(phi) (n_hot - n)>
    n_traj: int
    n_excluded: int
    stored_times: Optional[np.ndarray] = None
    stored_phi: Optional[np.ndarray] = None
    pv_snapshots: dict = field(default_factory=dict)

    SERIES_COLUMNS = (
        "mean_lz", "var_lz", "mean_phi", "mean_cos", "mean_sin",
        "mean_cos2", "mean_sin2", "mean_n", "mean_n_sin", "mean_n_sin_lz",
        "hot_contact_flux", "hot_contact_flux_cos",
    )


def trajectory_rng(base_seed, index):
    """Counter-based per-trajectory generator: Philox key base_seed*2^64 + index."""
    return np.random.Generator(np.random.Philox(key=(int(base_seed) << 64) + int(index)))


def max_stable_dt(params: EngineParams):
    """Stability guard for the explicit schemes: 0.01 * min(1/kappa, sqrt(I))."""
    return 0.01 * min(1.0 / params.kappa, math.sqrt(params.inertia))


def sample_initial(init: InitSpec, params: EngineParams, rng=None,
                   profile: ModulationProfile = DEFAULT_PROFILE):
    """Draw one initial ClassicalState according to `init`.

    The stochastic variant draws, in order, phi, lz, and the mode intensity
    from the stationary law at the drawn angle (Exponential with mean
    nbar(phi)).
    """
    if init.kind == "deterministic":
        n = init.n0 if init.n0 is not None else float(
            nbar_eff(init.mu, params, profile))
        return ClassicalState(init.mu, 0.0, n)
    if rng is None:
        raise ValueError("gaussian init requires an rng")
    phi = rng.normal(init.mu, math.sqrt(0.5 / init.k))
    lz = rng.normal(0.0, math.sqrt(0.5 * init.k))
    n = init.n0 if init.n0 is not None else rng.exponential(
        float(nbar_eff(phi, params, profile)))
    return ClassicalState(phi, lz, n)


def _drift_and_diffusion(state, params, profile):
    phi, lz, n = state
    keff = float(kappa_eff(phi, params, profile))
    nbar = float(nbar_eff(phi, params, profile))
    return keff, nbar


def step_euler(state, dt, dw, params: EngineParams,
               profile: ModulationProfile = DEFAULT_PROFILE):
    """One Euler-Maruyama step; dw ~ Normal(0, dt).  Clamps n to >= 0."""
    phi, lz, n = state
    keff, nbar = _drift_and_diffusion(state, params, profile)
    new_phi = phi + lz / params.inertia * dt
    new_lz = lz + n * math.sin(phi) * dt
    new_n = n - keff * (n - nbar) * dt + math.sqrt(2.0 * n * keff * nbar) * dw
    return ClassicalState(new_phi, new_lz, max(new_n, 0.0))


def step_milstein(state, dt, dw, params: EngineParams,
                  profile: ModulationProfile = DEFAULT_PROFILE):
    """Euler step plus the Milstein correction for the intensity noise.

    The diffusion amplitude sqrt(2 n kappa(phi) nbar(phi)) is multiplicative
    in n; its Ito correction is (kappa(phi) nbar(phi)/2) (dw^2 - dt).
    """
    phi, lz, n = state
    keff, nbar = _drift_and_diffusion(state, params, profile)
    stepped = step_euler(state, dt, dw, params, profile)
    corrected = stepped.n + 0.5 * keff * nbar * (dw * dw - dt)
    return ClassicalState(stepped.phi, stepped.lz, max(corrected, 0.0))


def step_backaction(state, dt, dw, du, params: EngineParams,
                    profile: ModulationProfile = DEFAULT_PROFILE,
                    milstein=True):
    """Step with the momentum backaction noise term; dw, du independent.

    For the default profile the extra momentum increment reduces to
    -cos(phi) sqrt(kappa n (n_hot + n_cold)/2) du; a custom profile uses
    the general amplitude sqrt(2 kappa n [n_hot f_H'^2 + n_cold f_C'^2]).
    """
    phi, lz, n = state
    base = (step_milstein if milstein else step_euler)(state, dt, dw, params, profile)
    if profile.is_default:
        extra = -math.cos(phi) * math.sqrt(
            params.kappa * n * 0.5 * (params.n_hot + params.n_cold)) * du
    else:
        fhp = float(profile.f_hot_prime(phi))
        fcp = float(profile.f_cold_prime(phi))
        amp = math.sqrt(2.0 * params.kappa * n
                        * (params.n_hot * fhp * fhp + params.n_cold * fcp * fcp))
        extra = -amp * du
    return ClassicalState(base.phi, base.lz + extra, base.n)


def _advance_block_generic(phi, lz, n, dw, du, dt, params, profile,
                           milstein, backaction):
    # Vectorized fallback for custom modulation profiles.
    kappa, n_hot, n_cold = params.kappa, params.n_hot, params.n_cold
    for j in range(dw.shape[1]):
        fh = profile.f_hot(phi)
        fc = profile.f_cold(phi)
        fh2, fc2 = fh * fh, fc * fc
        fsum = fh2 + fc2
        keff = kappa * fsum
        nbar = (fh2 * n_hot + fc2 * n_cold) / fsum
        w = dw[:, j]
        dlz = n * np.sin(phi) * dt
        if backaction:
            fhp = profile.f_hot_prime(phi)
            fcp = profile.f_cold_prime(phi)
            amp = np.sqrt(2.0 * kappa * n * (n_hot * fhp * fhp + n_cold * fcp * fcp))
            dlz = dlz - amp * du[:, j]
        dn = -keff * (n - nbar) * dt + np.sqrt(2.0 * n * keff * nbar) * w
        if milstein:
            dn = dn + 0.5 * keff * nbar * (w * w - dt)
        phi += lz * (dt / params.inertia)
        lz += dlz
        np.maximum(n + dn, 0.0, out=n)


def _run_batch(params, init, batch_indices, base_seed, n_blocks, stride, dt,
               scheme, backaction, profile):
    """Integrate one batch of trajectories; returns (3, batch, n_blocks+1) snapshots."""
    batch = len(batch_indices)
    milstein = scheme == "milstein"
    gens = [trajectory_rng(base_seed, i) for i in batch_indices]

    phi = np.empty(batch)
    lz = np.empty(batch)
    n = np.empty(batch)
    for b, g in enumerate(gens):
        s = sample_initial(init, params, g, profile)
        phi[b], lz[b], n[b] = s

    snaps = np.empty((3, batch, n_blocks + 1))
    snaps[0, :, 0], snaps[1, :, 0], snaps[2, :, 0] = phi, lz, n

    sqdt = math.sqrt(dt)
    default = profile.is_default
    for blk in range(n_blocks):
        if backaction:
            noise = np.empty((batch, 2, stride))
            for b, g in enumerate(gens):
                noise[b] = g.standard_normal((2, stride))
            dw = np.ascontiguousarray(noise[:, 0, :]) * sqdt
            du = np.ascontiguousarray(noise[:, 1, :]) * sqdt
        else:
            dw = np.empty((batch, stride))
            for b, g in enumerate(gens):
                dw[b] = g.standard_normal(stride)
            dw *= sqdt
            du = None
        if default:
            kernels.advance_block(phi, lz, n, dw, du, dt, params.inertia,
                                  params.kappa, params.n_hot, params.n_cold,
                                  milstein, backaction)
        else:
            _advance_block_generic(phi, lz, n, dw, du, dt, params, profile,
                                   milstein, backaction)
        snaps[0, :, blk + 1], snaps[1, :, blk + 1], snaps[2, :, blk + 1] = phi, lz, n
    return snaps


def simulate_trajectory(params: EngineParams, init: InitSpec, t_max, dt,
                        output_stride=1, scheme="milstein", seed=0,
                        backaction=False,
                        profile: ModulationProfile = DEFAULT_PROFILE):
    """Integrate a single trajectory; deterministic in (params, init, seed).

    t_max is rounded up to a whole number of output intervals of length
    dt * output_stride.  Raises TrajectoryDivergence (with the offending
    output index) if the state leaves the finite range.
    """
    _check_run_args(params, t_max, dt, scheme)
    n_blocks = max(1, math.ceil(t_max / (dt * output_stride) - 1e-9))
    snaps = _run_batch(params, init, [0], seed, n_blocks, output_stride, dt,
                       scheme, backaction, profile)
    states = snaps[:, 0, :].T.copy()
    bad = ~np.isfinite(states).all(axis=1)
    if bad.any():
        raise TrajectoryDivergence(int(np.argmax(bad)) * output_stride)
    times = np.arange(n_blocks + 1) * (dt * output_stride)
    return Trajectory(times=times, states=states, seed=seed)


def _check_run_args(params, t_max, dt, scheme):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if not t_max > 0:
        raise ValueError("t_max must be > 0")
    guard = max_stable_dt(params)
    if dt > guard * (1 + 1e-12):
        raise ValueError(
            f"dt = {dt} exceeds the stability guard "
            f"0.01*min(1/kappa, sqrt(I)) = {guard:.3g}")


def run_ensemble(params: EngineParams, init: InitSpec, n_traj, base_seed,
                 t_max, dt=None, output_stride=1, scheme="milstein",
                 backaction=False, profile: ModulationProfile = DEFAULT_PROFILE,
                 store_stride=None, pv_times=(), workers=1, chunk_size=1024,
                 max_excluded_frac=1e-3):
    """Run a seeded Monte Carlo ensemble and reduce it to sample moments.

    Trajectory i draws from the Philox stream with key base_seed*2^64 + i,
    and chunks are reduced in index order, so the summary is a deterministic
    function of (params, init, n_traj, base_seed, chunk_size) for any worker
    count.  (chunk_size fixes the floating-point summation grouping of the
    moment reduction, so it is part of the reproducibility key.)  Diverged
    trajectories are excluded and counted; the run fails if more than
    max_excluded_frac of them are lost.

    store_stride, when set, retains every store_stride-th output sample of
    the unwrapped angle of every trajectory for two-time correlation
    analysis.  pv_times requests (phi, n) snapshots at the nearest output
    times.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if dt is None:
        dt = calibrate_dt(params, profile=profile)
    _check_run_args(params, t_max, dt, scheme)

    n_blocks = max(1, math.ceil(t_max / (dt * output_stride) - 1e-9))
    times = np.arange(n_blocks + 1) * (dt * output_stride)
    n_out = n_blocks + 1

    stored_idx = (np.arange(0, n_out, store_stride)
                  if store_stride else np.empty(0, dtype=int))
    pv_idx = {float(t): int(np.argmin(np.abs(times - t))) for t in pv_times}

    n_moments = 12
    sums = np.zeros((n_out, n_moments))
    lz2_sum = np.zeros(n_out)
    kept = 0
    excluded = 0
    stored_rows = []
    pv_parts = {t: [] for t in pv_idx}

    chunk_starts = list(range(0, n_traj, chunk_size))
    args = [(params, init, start, min(start + chunk_size, n_traj), base_seed,
             n_blocks, output_stride, dt, scheme, backaction, profile)
            for start in chunk_starts]

    def iter_chunks():
        # Chunks are reduced in index order as they arrive, so the summary
        # is identical for any worker count.
        if workers > 1 and len(args) > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=workers) as pool:
                yield from pool.map(_chunk_worker, args)
        else:
            for a in args:
                yield _chunk_worker(a)

    for snaps in iter_chunks():
        phi, lz, n = snaps
        good = np.isfinite(snaps).all(axis=(0, 2))
        excluded += int((~good).sum())
        if not good.all():
            phi, lz, n = phi[good], lz[good], n[good]
        kept += phi.shape[0]

        s = np.sin(phi)
        c = np.cos(phi)
        fh = 0.5 * (1.0 + s)
        hot_flux = fh * fh * (params.n_hot - n) if profile.is_default else \
            profile.f_hot(phi) ** 2 * (params.n_hot - n)
        sums[:, 0] += lz.sum(axis=0)
        lz2_sum += (lz * lz).sum(axis=0)
        sums[:, 2] += phi.sum(axis=0)
        sums[:, 3] += c.sum(axis=0)
        sums[:, 4] += s.sum(axis=0)
        sums[:, 5] += np.cos(2 * phi).sum(axis=0)
        sums[:, 6] += np.sin(2 * phi).sum(axis=0)
        sums[:, 7] += n.sum(axis=0)
        sums[:, 8] += (n * s).sum(axis=0)
        sums[:, 9] += (n * s * lz).sum(axis=0)
        sums[:, 10] += hot_flux.sum(axis=0)
        sums[:, 11] += (hot_flux * c).sum(axis=0)
        if store_stride:
            stored_rows.append(phi[:, stored_idx].copy())
        for t, j in pv_idx.items():
            pv_parts[t].append((phi[:, j].copy(), n[:, j].copy()))

    if excluded > max_excluded_frac * n_traj:
        raise TrajectoryDivergence(
            -1, f"{excluded} of {n_traj} trajectories diverged "
                f"(> {max_excluded_frac:.2%} allowed)")
    mean = sums / kept
    var_lz = np.maximum(lz2_sum / kept - mean[:, 0] ** 2, 0.0)

    summary = EnsembleSummary(
        times=times,
        mean_lz=mean[:, 0], var_lz=var_lz, mean_phi=mean[:, 2],
        mean_cos=mean[:, 3], mean_sin=mean[:, 4],
        mean_cos2=mean[:, 5], mean_sin2=mean[:, 6],
        mean_n=mean[:, 7], mean_n_sin=mean[:, 8], mean_n_sin_lz=mean[:, 9],
        hot_contact_flux=mean[:, 10], hot_contact_flux_cos=mean[:, 11],
        n_traj=kept, n_excluded=excluded,
    )
    if store_stride:
        summary.stored_times = times[stored_idx]
        summary.stored_phi = np.vstack(stored_rows)
    for t in pv_idx:
        phis = np.concatenate([p for p, _ in pv_parts[t]])
        ns = np.concatenate([q for _, q in pv_parts[t]])
        summary.pv_snapshots[t] = (np.mod(phis, 2.0 * math.pi), ns)
    return summary


def _chunk_worker(arg):
    (params, init, start, stop, base_seed, n_blocks, stride, dt, scheme,
     backaction, profile) = arg
    return _run_batch(params, init, range(start, stop), base_seed, n_blocks,
                      stride, dt, scheme, backaction, profile)


def calibrate_dt(params: EngineParams, dt0=1e-3, rel_tol=5e-3, seed=2024,
                 n_paths=20000, profile: ModulationProfile = DEFAULT_PROFILE):
    """Pick a step size: start from dt0 and halve until the frozen-angle
    intensity process reproduces its stationary mean within rel_tol.

    The calibration pins the angle at pi/2 (pure hot contact for the
    default profile) and compares the late-time ensemble mean of n against
    nbar(pi/2).  The hard stability guard max_stable_dt is applied on top.
    """
    phi0 = math.pi / 2.0
    keff = float(kappa_eff(phi0, params, profile))
    nbar = float(nbar_eff(phi0, params, profile))
    dt = min(dt0, max_stable_dt(params))
    if nbar == 0.0:
        return dt
    rng = np.random.Generator(np.random.Philox(key=seed))
    t_relax = 30.0 / keff
    while True:
        steps = int(round(t_relax / dt))
        n = np.full(n_paths, nbar)
        acc = 0.0
        count = 0
        for j in range(steps):
            w = rng.standard_normal(n_paths) * math.sqrt(dt)
            dn = -keff * (n - nbar) * dt + np.sqrt(2.0 * n * keff * nbar) * w
            dn += 0.5 * keff * nbar * (w * w - dt)
            np.maximum(n + dn, 0.0, out=n)
            if j >= steps // 2:
                acc += n.mean()
                count += 1
        if abs(acc / count - nbar) <= rel_tol * nbar or dt < 1e-7:
            return dt
        dt *= 0.5
