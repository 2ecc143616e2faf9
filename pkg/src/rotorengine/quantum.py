"""Open-system quantum dynamics of the rotor engine.

The Hilbert space is a truncated planar-rotor momentum ladder tensored
with a Fock-truncated harmonic mode (momentum-major ordering).  Periodic
angle operators are represented through the unitary shift e^{i phi}, whose
matrix raises the momentum quantum number by one; truncation leaves a
non-unitary defect confined to the boundary rows, which is monitored
rather than wrapped.

Provided here: operator assembly, the Lindblad generator with two
angle-gated thermal contacts, an adaptive Dormand-Prince density-matrix
integrator, a Monte Carlo wavefunction unraveling, thermodynamic powers
and entropy production, and regression-based two-time angle correlations.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigvalsh
from scipy.special import ive

from .params import (EngineParams, cycle_average, fr_momentum_rate,
                     fr_variance_rate, kappa_eff, mod_weights, nbar_eff)

__all__ = [
    "QuantumSpace",
    "OperatorSet",
    "QuantumSeries",
    "TruncationReport",
    "build_space",
    "jump_recoil_rate",
    "build_operators",
    "von_mises_state",
    "liouvillian_apply",
    "evolve_master",
    "mcwf_trajectory",
    "run_mcwf_ensemble",
    "q_powers",
    "q_entropy",
    "occupation_to_temperature",
    "regression_row",
    "two_time_grid",
    "truncation_check",
    "angle_distribution",
    "expectation",
]

DEFAULT_DIM_CAP = 400_000  # cap on dim**2, the size of the vectorized state


@dataclass(frozen=True)
class QuantumSpace:
    """Truncated rotor (x) mode Hilbert space, momentum-major ordering."""

    m_min: int
    m_max: int
    n_max: int = 8

    def __post_init__(self):
        if not (self.m_min < 0 < self.m_max):
            raise ValueError("momentum window must straddle zero")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")

    @property
    def n_momentum(self):
        return self.m_max - self.m_min + 1

    @property
    def n_fock(self):
        return self.n_max + 1

    @property
    def dim(self):
        return self.n_momentum * self.n_fock

    @property
    def m_values(self):
        return np.arange(self.m_min, self.m_max + 1)


def jump_recoil_rate(params: EngineParams):
    """Momentum-variance growth rate from the unit recoils of thermal jumps.

    Every emission or absorption event shifts the rotor momentum by one
    quantum, so the event rate sets a recoil diffusion floor that has no
    classical counterpart.  The cycle-averaged event rate (all four jump
    channels at the local steady occupation nbar_eff) is damped by the
    motional-narrowing factor min(1, 2/kappa_eff_mean): once the mode
    decays faster than the recoil is imprinted, emission and absorption
    recoils cancel in pairs.  Calibrated against measured master-equation
    variance growth; the runtime boundary-population check remains the
    hard guarantee.
    """
    nh, nc = params.n_hot, params.n_cold

    def event_rate(p):
        fh, fc = mod_weights(p)
        n = nbar_eff(p, params)
        return params.kappa * (
            fh * fh * (nh * (n + 1.0) + (nh + 1.0) * n)
            + fc * fc * (nc * (n + 1.0) + (nc + 1.0) * n))

    kappa_mean = cycle_average(lambda p: kappa_eff(p, params))
    return cycle_average(event_rate) * min(1.0, 2.0 / kappa_mean)


def build_space(params: EngineParams, k, t_max, n_max=8,
                dim_cap=DEFAULT_DIM_CAP):
    """Size the momentum window for a run of length t_max from k-localized rest.

    The upper bound covers the predicted momentum drift plus six standard
    deviations of initial spread and accumulated diffusion (classical
    momentum diffusion plus jump recoil); the lower bound covers six
    initial standard deviations, widened when the diffusive tail below
    the drifting packet reaches further down.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not t_max >= 0:
        raise ValueError("t_max must be >= 0")
    drift = fr_momentum_rate(params) * t_max
    var_rate = fr_variance_rate(params) + jump_recoil_rate(params)
    spread = math.sqrt(0.5 * k + var_rate * t_max)
    m_max = math.ceil(drift + 6.0 * spread) + 5
    m_min = min(-math.ceil(6.0 * math.sqrt(0.5 * k)) - 5,
                math.floor(drift - 6.0 * spread) - 5)
    space = QuantumSpace(m_min=m_min, m_max=max(m_max, 1), n_max=n_max)
    if space.dim ** 2 > dim_cap:
        raise ValueError(
            f"state size {space.dim}^2 = {space.dim**2} exceeds the cap "
            f"{dim_cap}; reduce t_max (momentum window scales with drift "
            f"{drift:.1f} + spread) or n_max, or raise dim_cap")
    return space


def _hermitian_part(op):
    return 0.5 * (op + op.conj().T)


@dataclass
class OperatorSet:
    """Sparse operators for one (space, params) pair, assembled once.

    `shift_up` is e^{i phi} on the full space; `a_nh` is the non-Hermitian
    drift -iH - (1/2) sum L^dag L used by both the master-equation
    integrator and the jump unraveling.
    """

    space: QuantumSpace
    params: EngineParams
    shift_up: sp.csr_matrix
    lz: sp.csr_matrix
    lz2: sp.csr_matrix
    cos_phi: sp.csr_matrix
    sin_phi: sp.csr_matrix
    f_hot: sp.csr_matrix
    f_cold: sp.csr_matrix
    num: sp.csr_matrix
    hamiltonian: sp.csr_matrix
    jumps: list
    a_nh: sp.csr_matrix
    op_work: sp.csr_matrix
    op_heat_hot: sp.csr_matrix
    op_heat_cold: sp.csr_matrix
    op_backaction: sp.csr_matrix
    op_energy: sp.csr_matrix


def build_operators(params: EngineParams, space: QuantumSpace):
    M, F = space.n_momentum, space.n_fock
    eye_r = sp.identity(M, format="csr")
    eye_f = sp.identity(F, format="csr")

    # e^{i phi} raises m by one; rows at the window edge are truncated.
    shift_r = sp.diags(np.ones(M - 1), -1, format="csr")
    cos_r = 0.5 * (shift_r + shift_r.T)
    sin_r = (shift_r - shift_r.T) / 2j
    fh_r = 0.5 * (eye_r + sin_r)
    fc_r = 0.5 * (eye_r - sin_r)
    lz_r = sp.diags(space.m_values.astype(float), format="csr")

    a_f = sp.diags(np.sqrt(np.arange(1, F, dtype=float)), 1, format="csr")
    num_f = sp.diags(np.arange(F, dtype=float), format="csr")

    def lift(rotor_op, mode_op):
        return sp.kron(rotor_op, mode_op, format="csr")

    lz = lift(lz_r, eye_f)
    lz2 = lift(lz_r @ lz_r, eye_f)
    cos_phi = lift(cos_r, eye_f)
    sin_phi = lift(sin_r, eye_f)
    num = lift(eye_r, num_f)
    hamiltonian = lift(lz_r @ lz_r / (2.0 * params.inertia), eye_f) \
        + lift(cos_r, num_f)

    kappa = params.kappa
    jumps = []
    for f_r, nbar in ((fh_r, params.n_hot), (fc_r, params.n_cold)):
        jumps.append(math.sqrt(kappa * (nbar + 1.0)) * lift(f_r, a_f))
        if nbar > 0:
            jumps.append(math.sqrt(kappa * nbar) * lift(f_r, a_f.T))
    jumps = [sp.csr_matrix(L, dtype=complex) for L in jumps]

    k_sink = sum(0.5 * (L.conj().T @ L) for L in jumps)
    a_nh = sp.csr_matrix(-1j * hamiltonian.astype(complex) - k_sink)

    # Observable operators (Hermitian parts absorb the boundary defect of
    # non-commuting angle functions).
    omega_r = params.omega0 * eye_r + cos_r
    heat_hot = kappa * lift(_hermitian_part(omega_r @ (fh_r @ fh_r)),
                            params.n_hot * eye_f - num_f)
    heat_cold = kappa * lift(_hermitian_part(omega_r @ (fc_r @ fc_r)),
                             params.n_cold * eye_f - num_f)
    anticomm = sin_r @ lz_r + lz_r @ sin_r
    op_work = lift(_hermitian_part(anticomm), num_f) / (2.0 * params.inertia)
    half_sum = 0.5 * (params.n_hot + params.n_cold)
    op_backaction = (kappa / (4.0 * params.inertia)) * lift(
        cos_r @ cos_r, half_sum * (2.0 * num_f + eye_f) + num_f)
    op_energy = lift(omega_r, num_f)

    return OperatorSet(
        space=space, params=params,
        shift_up=lift(shift_r, eye_f).astype(complex),
        lz=lz, lz2=lz2, cos_phi=cos_phi, sin_phi=sin_phi,
        f_hot=lift(fh_r, eye_f), f_cold=lift(fc_r, eye_f),
        num=num, hamiltonian=hamiltonian, jumps=jumps, a_nh=a_nh,
        op_work=sp.csr_matrix(op_work), op_heat_hot=sp.csr_matrix(heat_hot),
        op_heat_cold=sp.csr_matrix(heat_cold),
        op_backaction=sp.csr_matrix(op_backaction),
        op_energy=sp.csr_matrix(op_energy),
    )


def von_mises_state(space: QuantumSpace, k, mu, drop_tol=1e-10):
    """Pure rotor wavepacket e^{k cos(phi - mu)} (x) mode vacuum.

    Momentum coefficients are proportional to I_m(k) e^{-i m mu}; the
    window must hold all but drop_tol of the coefficient mass.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    m = space.m_values
    scaled = ive(m, k)  # I_m(k) e^{-k}, overflow-safe
    mass = np.sum(scaled ** 2) / ive(0, 2.0 * k)
    if 1.0 - mass > drop_tol:
        raise ValueError(
            f"momentum window [{space.m_min}, {space.m_max}] drops "
            f"{1.0 - mass:.2e} of the k = {k} wavepacket mass (> {drop_tol})")
    coeff = scaled * np.exp(-1j * m * mu)
    coeff /= np.linalg.norm(coeff)
    mode = np.zeros(space.n_fock, dtype=complex)
    mode[0] = 1.0
    return np.kron(coeff, mode)


def expectation(op, rho):
    """tr(op rho) for sparse op and dense rho."""
    return complex(op.multiply(rho.T).sum())


def liouvillian_apply(rho, ops: OperatorSet):
    """Right-hand side of the master equation for a (not necessarily
    Hermitian) matrix: A rho + rho A^dag + sum_k L_k rho L_k^dag."""
    a = ops.a_nh
    out = a @ rho
    out = out + (a @ rho.conj().T).conj().T
    for L in ops.jumps:
        out = out + (L @ (L @ rho.conj().T).conj().T)
    return out


# Dormand-Prince 5(4) coefficients.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])


def _integrate_dp45(rhs, y, t0, t_grid, tol, on_grid, hermitize=False,
                    max_steps=2_000_000):
    """Adaptive DP45 integration of a matrix ODE, calling on_grid(t, y) at
    every grid time (including t0 if it is the first grid point)."""
    t = t0
    gi = 0
    while gi < len(t_grid) and t_grid[gi] <= t0 + 1e-15:
        on_grid(t_grid[gi], y)
        gi += 1
    if gi >= len(t_grid):
        return y
    scale = np.abs(rhs(y)).max()
    h = min(0.1 / max(scale, 1e-12), t_grid[-1] - t)
    steps = 0
    while gi < len(t_grid):
        target = t_grid[gi]
        h = min(h, target - t)
        k = [rhs(y)]
        for i in range(1, 7):
            yi = y
            for j, a in enumerate(_DP_A[i]):
                if a != 0.0:
                    yi = yi + (h * a) * k[j]
            k.append(rhs(yi))
        y5 = y
        err = None
        for i in range(7):
            if _DP_B5[i] != 0.0:
                y5 = y5 + (h * _DP_B5[i]) * k[i]
            d = _DP_B5[i] - _DP_B4[i]
            if d != 0.0:
                err = (h * d) * k[i] if err is None else err + (h * d) * k[i]
        err_norm = np.abs(err).max()
        steps += 1
        if steps > max_steps:
            raise RuntimeError("integrator exceeded the step budget")
        if err_norm <= tol:
            t = t + h
            y = y5
            if hermitize:
                y = 0.5 * (y + y.conj().T)
            if t >= target - 1e-12 * max(1.0, abs(target)):
                on_grid(target, y)
                gi += 1
        factor = 0.9 * (tol / max(err_norm, 1e-300)) ** 0.2
        h = h * min(5.0, max(0.2, factor))
        if h < 1e-14:
            raise RuntimeError(f"step-size underflow at t = {t}")
    return y


@dataclass
class QuantumSeries:
    """Per-grid-time observables of a master-equation run."""

    times: np.ndarray
    trace: np.ndarray
    mean_lz: np.ndarray
    var_lz: np.ndarray
    mean_n: np.ndarray
    p_hot: np.ndarray
    p_cold: np.ndarray
    p_work: np.ndarray
    p_backaction: np.ndarray
    first_law_residual: np.ndarray
    purity: np.ndarray
    min_eigenvalue: np.ndarray
    boundary_mom_pop: np.ndarray
    top_fock_pop: np.ndarray
    exp_phase1: np.ndarray  # <e^{i phi}>
    exp_phase2: np.ndarray  # <e^{2 i phi}>
    entropy: Optional[np.ndarray] = None
    entropy_rate: Optional[np.ndarray] = None
    entropy_production: Optional[np.ndarray] = None
    entropy_rotor: Optional[np.ndarray] = None
    entropy_mode: Optional[np.ndarray] = None
    angle_grid: Optional[np.ndarray] = None
    angle_dist: Optional[np.ndarray] = None
    checkpoints: dict = field(default_factory=dict)


def _reduced_rotor(rho, space):
    r = rho.reshape(space.n_momentum, space.n_fock,
                    space.n_momentum, space.n_fock)
    return np.einsum("mfnf->mn", r)


def _reduced_mode(rho, space):
    r = rho.reshape(space.n_momentum, space.n_fock,
                    space.n_momentum, space.n_fock)
    return np.einsum("mfmg->fg", r)


def angle_distribution(rho, space, phi_grid, j_max=64):
    """Angle probability density from the truncated Fourier series of the
    momentum coherences, clipped at -1e-6 against truncation ringing."""
    rho_r = _reduced_rotor(rho, space)
    j_max = min(j_max, space.n_momentum - 1)
    p = np.full(len(phi_grid), np.real(np.trace(rho_r)) / (2.0 * math.pi))
    for j in range(1, j_max + 1):
        cj = np.trace(rho_r, offset=j)  # <e^{i j phi}> = sum_m rho[m, m+j]
        p += np.real(cj * np.exp(-1j * j * np.asarray(phi_grid))) / math.pi
    return np.maximum(p, -1e-6)


def occupation_to_temperature(nbar, omega0):
    """Invert nbar = 1/(e^{omega/T} - 1) at the bare frequency (k_B = 1)."""
    if nbar <= 0:
        raise ValueError("temperature defined only for occupation > 0")
    return omega0 / math.log1p(1.0 / nbar)


def q_powers(rho, ops: OperatorSet, drho=None):
    """Thermodynamic powers (P_H, P_C, P_W, P_B) and the first-law residual.

    The residual is d<omega(phi) n>/dt - (P_H + P_C - P_W) with the energy
    derivative evaluated through the Liouvillian; it vanishes up to
    truncation-boundary terms.
    """
    p_h = expectation(ops.op_heat_hot, rho).real
    p_c = expectation(ops.op_heat_cold, rho).real
    p_w = expectation(ops.op_work, rho).real
    p_b = expectation(ops.op_backaction, rho).real
    if drho is None:
        drho = liouvillian_apply(rho, ops)
    de_dt = expectation(ops.op_energy, drho).real
    return p_h, p_c, p_w, p_b, de_dt - (p_h + p_c - p_w)


def q_entropy(rho, drho, params: EngineParams, space: QuantumSpace,
              eig_floor=1e-14):
    """Von Neumann entropy, its rate, and the intrinsic production rate.

    S_int_rate = dS/dt - P_H/T_H - P_C/T_C with temperatures defined from
    the reservoir occupations at the bare mode frequency.  Requires
    n_cold > 0.  Also returns the reduced rotor and mode entropies.
    """
    if params.n_cold <= 0:
        raise ValueError("entropy bookkeeping requires n_cold > 0")
    t_hot = occupation_to_temperature(params.n_hot, params.omega0)
    t_cold = occupation_to_temperature(params.n_cold, params.omega0)

    vals, vecs = eigh(rho)
    support = vals > eig_floor
    s = float(-(vals[support] * np.log(vals[support])).sum())
    log_rho = (vecs[:, support] * np.log(vals[support])) @ vecs[:, support].conj().T
    ds_dt = float(-np.real(np.einsum("ij,ji->", drho, log_rho)))

    def _red_entropy(red):
        v = eigvalsh(red)
        v = v[v > eig_floor]
        return float(-(v * np.log(v)).sum())

    s_rotor = _red_entropy(_reduced_rotor(rho, space))
    s_mode = _red_entropy(_reduced_mode(rho, space))
    return s, ds_dt, t_hot, t_cold, s_rotor, s_mode


@dataclass
class TruncationReport:
    momentum_rows: dict       # m -> population, 3 outermost rows each side
    top_fock: float
    momentum_tol: float
    fock_tol: float

    @property
    def passed(self):
        return (all(p < self.momentum_tol for p in self.momentum_rows.values())
                and self.top_fock < self.fock_tol)

    def offenders(self):
        out = [f"momentum row m = {m}: {p:.3e}"
               for m, p in self.momentum_rows.items() if p >= self.momentum_tol]
        if self.top_fock >= self.fock_tol:
            out.append(f"top Fock level: {self.top_fock:.3e}")
        return out


def truncation_check(rho, space: QuantumSpace, momentum_tol=1e-6,
                     fock_tol=1e-6):
    """Populations of the outermost momentum rows and the top Fock level."""
    pops = np.real(np.diag(rho)).reshape(space.n_momentum, space.n_fock)
    rows = {}
    for i in range(3):
        rows[int(space.m_min + i)] = float(pops[i].sum())
        rows[int(space.m_max - i)] = float(pops[-1 - i].sum())
    return TruncationReport(momentum_rows=rows,
                            top_fock=float(pops[:, -1].sum()),
                            momentum_tol=momentum_tol, fock_tol=fock_tol)


def evolve_master(rho0, t_grid, params: EngineParams, space: QuantumSpace,
                  ops: OperatorSet = None, tol=1e-8, compute_entropy=False,
                  angle_grid=None, checkpoint_times=(), trace_tol=1e-6):
    """Integrate the master equation and record observables on t_grid.

    Adaptive embedded 4/5 integration with per-entry tolerance `tol`; the
    state is re-Hermitized after every accepted step.  Aborts if the trace
    drifts by more than trace_tol.  States at `checkpoint_times` (nearest
    grid times) are retained for two-time regression analysis.
    """
    if ops is None:
        ops = build_operators(params, space)
    t_grid = np.asarray(t_grid, dtype=float)
    rho = np.array(rho0, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())

    cp_times = {float(t_grid[int(np.argmin(np.abs(t_grid - t)))])
                for t in checkpoint_times}
    rec = {name: [] for name in (
        "trace", "mean_lz", "var_lz", "mean_n", "p_hot", "p_cold", "p_work",
        "p_backaction", "residual", "purity", "min_eig", "bnd_mom",
        "top_fock", "exp1", "exp2", "S", "dS", "Sint", "Sr", "Sm", "pphi")}
    checkpoints = {}

    def on_grid(t, rho_t):
        tr = expectation_trace = np.trace(rho_t).real
        if abs(expectation_trace - 1.0) > trace_tol:
            raise RuntimeError(
                f"trace drift {expectation_trace - 1.0:.3e} at t = {t}")
        drho = liouvillian_apply(rho_t, ops)
        p_h, p_c, p_w, p_b, resid = q_powers(rho_t, ops, drho)
        mlz = expectation(ops.lz, rho_t).real
        mlz2 = expectation(ops.lz2, rho_t).real
        rep = truncation_check(rho_t, space)
        eigs = eigvalsh(rho_t)
        rec["trace"].append(tr)
        rec["mean_lz"].append(mlz)
        rec["var_lz"].append(max(mlz2 - mlz * mlz, 0.0))
        rec["mean_n"].append(expectation(ops.num, rho_t).real)
        rec["p_hot"].append(p_h)
        rec["p_cold"].append(p_c)
        rec["p_work"].append(p_w)
        rec["p_backaction"].append(p_b)
        rec["residual"].append(resid)
        rec["purity"].append(float(np.real(np.vdot(rho_t, rho_t))))
        rec["min_eig"].append(float(eigs[0]))
        rec["bnd_mom"].append(max(rep.momentum_rows.values()))
        rec["top_fock"].append(rep.top_fock)
        rec["exp1"].append(expectation(ops.shift_up, rho_t))
        rec["exp2"].append(expectation(ops.shift_up @ ops.shift_up, rho_t))
        if compute_entropy:
            s, ds, t_h, t_c, s_r, s_m = q_entropy(rho_t, drho, params, space)
            rec["S"].append(s)
            rec["dS"].append(ds)
            rec["Sint"].append(ds - p_h / t_h - p_c / t_c)
            rec["Sr"].append(s_r)
            rec["Sm"].append(s_m)
        if angle_grid is not None:
            rec["pphi"].append(angle_distribution(rho_t, space, angle_grid))
        if float(t) in cp_times:
            checkpoints[float(t)] = rho_t.copy()

    _integrate_dp45(lambda y: liouvillian_apply(y, ops), rho, t_grid[0],
                    t_grid, tol, on_grid, hermitize=True)

    arr = {k: np.array(v) for k, v in rec.items()}
    return QuantumSeries(
        times=t_grid.copy(), trace=arr["trace"], mean_lz=arr["mean_lz"],
        var_lz=arr["var_lz"], mean_n=arr["mean_n"], p_hot=arr["p_hot"],
        p_cold=arr["p_cold"], p_work=arr["p_work"],
        p_backaction=arr["p_backaction"],
        first_law_residual=arr["residual"], purity=arr["purity"],
        min_eigenvalue=arr["min_eig"], boundary_mom_pop=arr["bnd_mom"],
        top_fock_pop=arr["top_fock"], exp_phase1=arr["exp1"],
        exp_phase2=arr["exp2"],
        entropy=arr["S"] if compute_entropy else None,
        entropy_rate=arr["dS"] if compute_entropy else None,
        entropy_production=arr["Sint"] if compute_entropy else None,
        entropy_rotor=arr["Sr"] if compute_entropy else None,
        entropy_mode=arr["Sm"] if compute_entropy else None,
        angle_grid=None if angle_grid is None else np.asarray(angle_grid),
        angle_dist=arr["pphi"] if angle_grid is not None else None,
        checkpoints=checkpoints,
    )


def regression_row(rho_t1, t1, t2_grid, ops: OperatorSet, tol=1e-8):
    """Symmetrized phase correlators C-/C+ from a checkpoint at t1.

    Propagates X = (e^{i phi} rho + rho e^{i phi})/2 with the same
    Liouvillian and traces against e^{-+ i phi} at each t2 >= t1.  Returns
    (c_minus, c_plus) arrays over t2_grid, where |c_minus|^2 estimates
    R[phi(t1) - phi(t2)] and |c_plus|^2 estimates R[phi(t1) + phi(t2)].
    """
    e_up = ops.shift_up
    x = 0.5 * (e_up @ rho_t1 + rho_t1 @ e_up)
    c_minus = []
    c_plus = []

    def on_grid(t, xt):
        c_minus.append(expectation(e_up.conj().T, xt))
        c_plus.append(expectation(e_up, xt))

    t2_grid = np.asarray(t2_grid, dtype=float)
    if np.any(t2_grid < t1 - 1e-12):
        raise ValueError("t2 grid must not precede the checkpoint time")
    _integrate_dp45(lambda y: liouvillian_apply(y, ops), x, t1, t2_grid,
                    tol, on_grid)
    return np.array(c_minus), np.array(c_plus)


def two_time_grid(series: QuantumSeries, ops: OperatorSet, tol=1e-8,
                  degenerate=1e-9):
    """Quantum two-time angle correlation matrix over the checkpoint times.

    Uses the regression correlators and the single-time R[2 phi] series of
    the run; entries where a marginal is wrapped-uniform are NaN.
    """
    times = np.array(sorted(series.checkpoints))
    idx = [int(np.argmin(np.abs(series.times - t))) for t in times]
    r2 = np.abs(series.exp_phase2[idx]) ** 2
    n = len(times)
    out = np.full((n, n), np.nan)
    for i, t1 in enumerate(times):
        c_minus, c_plus = regression_row(series.checkpoints[t1], t1,
                                         times[i:], ops, tol)
        for jj, j in enumerate(range(i, n)):
            if (1.0 - r2[i]) > degenerate and (1.0 - r2[j]) > degenerate:
                val = (abs(c_minus[jj]) ** 2 - abs(c_plus[jj]) ** 2) \
                    / math.sqrt((1.0 - r2[i]) * (1.0 - r2[j]))
                out[i, j] = out[j, i] = float(np.clip(val, -1.0, 1.0))
    return times, out


def mcwf_trajectory(psi0, t_grid, ops: OperatorSet, seed, substeps=None):
    """One Monte Carlo wavefunction trajectory; deterministic given seed.

    Deterministic drift under -iH - (1/2) sum L^dag L (fixed-step RK4),
    norm-threshold jump triggering with bisection refinement of the jump
    time, channel choice proportional to <L^dag L>, renormalization after
    each jump.  Records normalized states at the grid times; returns
    (states, jump_times, jump_channels).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    a = ops.a_nh
    psi = np.array(psi0, dtype=complex)
    psi /= np.linalg.norm(psi)

    # RK4 stability bound from a crude 1-norm estimate of the drift.
    scale = abs(a).sum(axis=0).max()
    h_max = 0.5 / float(scale)
    if substeps is not None:
        h_max = min(h_max, (t_grid[-1] - t_grid[0]) / substeps)

    def rk4(y, h):
        k1 = a @ y
        k2 = a @ (y + 0.5 * h * k1)
        k3 = a @ (y + 0.5 * h * k2)
        k4 = a @ (y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    states = []
    jump_times = []
    jump_channels = []
    threshold = rng.random()
    t = t_grid[0]
    gi = 0
    while gi < len(t_grid) and t_grid[gi] <= t + 1e-15:
        states.append(psi / np.linalg.norm(psi))
        gi += 1
    while gi < len(t_grid):
        target = t_grid[gi]
        h = min(h_max, target - t)
        trial = rk4(psi, h)
        nrm2 = float(np.real(np.vdot(trial, trial)))
        if nrm2 < threshold:
            # Bisect the jump time within [t, t + h].
            lo, hi = 0.0, h
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                cand = rk4(psi, mid)
                if float(np.real(np.vdot(cand, cand))) < threshold:
                    hi = mid
                else:
                    lo = mid
            psi = rk4(psi, hi)
            t = t + hi
            weights = np.array([float(np.real(np.vdot(L @ psi, L @ psi)))
                                for L in ops.jumps])
            total = weights.sum()
            if total <= 0:
                raise RuntimeError("norm underflow without jump channel")
            channel = int(np.searchsorted(np.cumsum(weights) / total,
                                          rng.random()))
            psi = ops.jumps[channel] @ psi
            psi /= np.linalg.norm(psi)
            jump_times.append(t)
            jump_channels.append(channel)
            threshold = rng.random()
        else:
            psi = trial
            t = t + h
        if t >= target - 1e-12 * max(1.0, abs(target)):
            states.append(psi / np.linalg.norm(psi))
            gi += 1
    return np.array(states), np.array(jump_times), np.array(jump_channels)


def run_mcwf_ensemble(psi0, t_grid, ops: OperatorSet, n_traj, base_seed):
    """Ensemble of jump trajectories; per-time means and standard errors.

    Returns a dict with mean/sem arrays for <L_z>, <n>, and the work power,
    averaged over trajectories seeded counter-based from base_seed.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    obs = {"lz": ops.lz, "n": ops.num, "p_work": ops.op_work}
    acc = {k: np.zeros((n_traj, len(t_grid))) for k in obs}
    total_jumps = 0
    for i in range(n_traj):
        seed = (int(base_seed) << 64) + i
        states, jt, jc = mcwf_trajectory(psi0, t_grid, ops, seed)
        total_jumps += len(jt)
        for k, op in obs.items():
            acc[k][i] = np.real(np.einsum("ti,ti->t", states.conj(),
                                          (op @ states.T).T))
    out = {"times": t_grid.copy(), "n_traj": n_traj,
           "total_jumps": total_jumps}
    for k in obs:
        out[f"mean_{k}"] = acc[k].mean(axis=0)
        out[f"sem_{k}"] = acc[k].std(axis=0, ddof=1) / math.sqrt(n_traj) \
            if n_traj > 1 else np.zeros(len(t_grid))
    return out
