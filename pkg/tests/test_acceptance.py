"""Acceptance gate: one test per release criterion.

Each test prints exactly one "[criterion NN] PASS/FAIL" line with the
measured numbers, then asserts.  The suite is expensive (roughly an hour
on one core); run it with `pytest tests/test_acceptance.py -v -s`.
Criteria 1-12 exercise the Python package alone; criterion 13 drives the
plotting front end in frontend/.
"""

import json
import math
import os
import shutil
import subprocess

import numpy as np
import pytest
from scipy import stats

from rotorengine import kernels, quantum
from rotorengine.classical import InitSpec, run_ensemble
from rotorengine.cli import run_experiment
from rotorengine.config import parse_config
from scipy.integrate import cumulative_trapezoid

from rotorengine.observables import (cycle_work, efficiency, heat_power,
                                     pv_accumulate, work_power)
from rotorengine.params import (EngineParams, carnot_floor, nbar_eff,
                                work_per_cycle)

P_FAST = EngineParams(inertia=1.0, kappa=100.0, n_hot=1.0, n_cold=0.0)
P_SLOW = EngineParams(inertia=1.0, kappa=1.0, n_hot=1.0, n_cold=0.0)
P_HIGH = EngineParams(inertia=1000.0, kappa=1.0, n_hot=1.0, n_cold=0.0)
P_LOW = EngineParams(inertia=10.0, kappa=10.0, n_hot=1.0, n_cold=0.0)
INIT = InitSpec(k=10.0)  # gaussian packet at mu = pi/2
INIT_DET = InitSpec(kind="deterministic")  # (pi/2, 0, nbar(pi/2))
# classical companion of the quantum runs: the quantum mode starts in
# vacuum, so the matched classical ensemble starts dark (n = 0), not at
# the stationary intensity draw
INIT_DARK = InitSpec(k=10.0, n0=0.0)


def _report(num, ok, detail):
    print(f"\n[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def _slope(t, y, t_lo, t_hi):
    m = (t >= t_lo) & (t <= t_hi)
    return np.polyfit(t[m], y[m], 1)[0]


# ----------------------------------------------------------- shared runs


@pytest.fixture(scope="module")
def fast_ensemble():
    # kappa = 100, N = 1e4, horizon 30: criteria 1 and 2.  Deterministic
    # init: a momentum-spread packet inflates var(L_z) ballistically
    # (trajectories at different omega accumulate different gains), which
    # buries the diffusive rate under test.
    return run_ensemble(P_FAST, INIT_DET, n_traj=10_000, base_seed=1001,
                        t_max=30.0, dt=1e-4, output_stride=1000)


@pytest.fixture(scope="module")
def fast_bulk():
    # kappa = 100, N = 1e5: the fast PV loop (criterion 3) and the
    # efficiency-vs-momentum law (criterion 4) share this run
    return run_ensemble(P_FAST, INIT_DET, n_traj=100_000, base_seed=1103,
                        t_max=30.0, dt=1e-4, output_stride=1000,
                        pv_times=(30.0,))


@pytest.fixture(scope="module")
def high_inertia_pair():
    # horizon chosen so the recoil-sized momentum window fits the size cap
    space = quantum.build_space(P_HIGH, INIT.k, 9.0)
    ops = quantum.build_operators(P_HIGH, space)
    psi = quantum.von_mises_state(space, INIT.k, INIT.mu)
    grid = np.linspace(0.0, 9.0, 37)
    # tol 1e-9: at 1e-8 the integrator leaves eigenvalues near -4e-8,
    # past the -1e-8 positivity bound of the sanity suite
    q = quantum.evolve_master(psi, grid, P_HIGH, space, ops, tol=1e-9)
    c = run_ensemble(P_HIGH, INIT_DARK, n_traj=30_000, base_seed=1007,
                     t_max=9.0, dt=1e-3, output_stride=250)
    return q, c


@pytest.fixture(scope="module")
def low_inertia_runs():
    # recoil diffusion dominates the window here: dim 882 needs a raised cap
    space = quantum.build_space(P_LOW, INIT.k, 12.0, dim_cap=800_000)
    ops = quantum.build_operators(P_LOW, space)
    psi = quantum.von_mises_state(space, INIT.k, INIT.mu)
    grid = np.linspace(0.0, 12.0, 49)
    q = quantum.evolve_master(psi, grid, P_LOW, space, ops, tol=1e-8)
    plain = run_ensemble(P_LOW, INIT_DARK, n_traj=20_000, base_seed=1008,
                         t_max=12.0, dt=1e-3, output_stride=250)
    noisy = run_ensemble(P_LOW, INIT_DARK, n_traj=20_000, base_seed=1009,
                         t_max=12.0, dt=1e-3, output_stride=250,
                         backaction=True)
    return q, plain, noisy


@pytest.fixture(scope="module")
def entropy_run():
    p = EngineParams(inertia=10.0, kappa=10.0, n_hot=1.0, n_cold=1e-3)
    space = quantum.build_space(p, INIT.k, 3.0)
    ops = quantum.build_operators(p, space)
    psi = quantum.von_mises_state(space, INIT.k, INIT.mu)
    grid = np.linspace(0.0, 3.0, 121)
    return quantum.evolve_master(psi, grid, p, space, ops, tol=1e-8,
                                 compute_entropy=True)


@pytest.fixture(scope="module")
def small_instance():
    # 40 momentum states x 4 Fock levels, shared by criteria 6 and 11
    space = quantum.QuantumSpace(m_min=-19, m_max=20, n_max=3)
    ops = quantum.build_operators(P_LOW, space)
    psi = quantum.von_mises_state(space, INIT.k, INIT.mu, drop_tol=1e-9)
    grid = np.linspace(0.0, 5.0, 6)
    master = quantum.evolve_master(psi, grid, P_LOW, space, ops, tol=1e-8)
    mc = quantum.run_mcwf_ensemble(psi, grid, ops, n_traj=500,
                                   base_seed=1011)
    return master, mc


# ------------------------------------------------------------- criteria


def test_criterion_01_momentum_rate(fast_ensemble):
    slope = _slope(fast_ensemble.times, fast_ensemble.mean_lz, 5.0, 30.0)
    ok = abs(slope - 0.2929) <= 0.05 * 0.2929
    _report(1, ok, f"<L_z> slope on t in [5, 30] = {slope:.5f} "
                   f"(target 0.2929 +- 5%)")


def test_criterion_02_variance_rate(fast_ensemble):
    slope = _slope(fast_ensemble.times, fast_ensemble.var_lz, 5.0, 30.0)
    ok = abs(slope - 0.00558) <= 0.15 * 0.00558
    _report(2, ok, f"var(L_z) slope on t in [5, 30] = {slope:.6f} "
                   f"(target 0.00558 +- 15%)")


def test_criterion_03_pv_work_fractions(fast_bulk):
    slow = run_ensemble(P_SLOW, INIT_DET, n_traj=100_000, base_seed=1004,
                        t_max=30.0, dt=1e-3, output_stride=1000,
                        pv_times=(30.0,))
    results = {}
    for params, s, target, tol in ((P_FAST, fast_bulk, 0.98, 0.03),
                                   (P_SLOW, slow, 0.27, 0.05)):
        phi, n = s.pv_snapshots[30.0]
        frac = cycle_work(pv_accumulate(phi, n)) / work_per_cycle(params)
        results[params.kappa] = (frac, target, tol)
    ok = all(abs(f - t) <= tol for f, t, tol in results.values())
    detail = ", ".join(f"kappa={k:g}: area/W_cyc = {f:.3f} "
                       f"(target {t} +- {tol})"
                       for k, (f, t, tol) in results.items())
    _report(3, ok, detail)


def test_criterion_04_efficiency_law(fast_bulk):
    # Efficiency is a per-cycle quantity: instantaneous power ratios blow
    # up whenever the heat intake crosses zero within the cycle.  Measure
    # eta as dW/dQ over a sliding one-cycle window of the accumulated mean
    # angle, against the closed form at the heat-weighted mean momentum of
    # the same window.
    s = fast_bulk
    t = s.times
    pw = work_power(s, P_FAST)
    ph = heat_power(s, P_FAST)
    W = cumulative_trapezoid(pw, t, initial=0.0)
    Q = cumulative_trapezoid(ph, t, initial=0.0)
    theta = cumulative_trapezoid(s.mean_lz / P_FAST.inertia, t, initial=0.0)
    x = s.mean_lz / (P_FAST.inertia * P_FAST.kappa)
    xQ = cumulative_trapezoid(x * ph, t, initial=0.0)

    scale = 2.0 / P_FAST.omega0
    floor = carnot_floor(P_FAST)
    rels, etas = [], []
    for i in range(len(t)):
        th = theta[i]
        if not (theta[0] <= th - np.pi and th + np.pi <= theta[-1]):
            continue
        t1 = float(np.interp(th - np.pi, theta, t))
        t2 = float(np.interp(th + np.pi, theta, t))
        dq = np.interp(t2, t, Q) - np.interp(t1, t, Q)
        eta = (np.interp(t2, t, W) - np.interp(t1, t, W)) / dq
        etas.append(eta)
        x_bar = (np.interp(t2, t, xQ) - np.interp(t1, t, xQ)) / dq
        if 0.01 <= x_bar <= 0.08:
            rels.append(abs(eta / scale / (3.5672 * x_bar) - 1.0))
    rels = np.array(rels)
    # sub-check: the measured (per-cycle) efficiency never reaches the
    # reversible bound
    below = (np.array(etas) < floor).all()
    ok = rels.size > 0 and rels.max() <= 0.10 and bool(below)
    _report(4, ok, f"max |eta / (3.5672 x) - 1| = {rels.max():.3f} over "
                   f"{rels.size} one-cycle windows with x in [0.01, 0.08] "
                   f"(<= 0.10); eta below carnot floor everywhere: {below}")


def test_criterion_05_integrator_orders():
    # frozen angle via huge inertia; shared Wiener increments across levels
    rng = np.random.Generator(np.random.Philox(key=500))
    batch, t_end, ref_lvl = 2000, 1.0, 13
    dt_ref = t_end / 2 ** ref_lvl
    dw = rng.standard_normal((batch, 2 ** ref_lvl)) * math.sqrt(dt_ref)

    def advance(block, dt, milstein):
        phi = np.full(batch, math.pi / 2)
        lz = np.zeros(batch)
        n = np.ones(batch)
        kernels.advance_block(phi, lz, n, block, None, dt, 1e12, 1.0, 1.0,
                              0.0, milstein, False)
        return n

    n_ref = advance(dw, dt_ref, True)
    slopes = {}
    for name, milstein in (("euler", False), ("milstein", True)):
        errs, dts = [], []
        for lvl in (9, 8, 7, 6):
            coarse = dw.reshape(batch, 2 ** lvl, -1).sum(axis=2)
            errs.append(np.mean(np.abs(advance(coarse, t_end / 2 ** lvl,
                                               milstein) - n_ref)))
            dts.append(t_end / 2 ** lvl)
        slopes[name] = np.polyfit(np.log2(dts), np.log2(errs), 1)[0]

    # stationary law at a generic frozen angle
    p = EngineParams(inertia=1e12, kappa=1.0, n_hot=1.0, n_cold=0.0)
    phi0 = 1.0
    nbar = float(nbar_eff(phi0, p))
    rng = np.random.Generator(np.random.Philox(key=501))
    nb, dt = 5000, 2e-3
    phi = np.full(nb, phi0)
    lz = np.zeros(nb)
    n = np.full(nb, nbar)
    for _ in range(4):  # burn-in, 12 time units
        blk = rng.standard_normal((nb, int(3.0 / dt))) * math.sqrt(dt)
        kernels.advance_block(phi, lz, n, blk, None, dt, 1e12, 1.0, 1.0,
                              0.0, True, False)
    samples = []
    for _ in range(200):  # 1e6 samples spaced two time units apart
        blk = rng.standard_normal((nb, int(2.0 / dt))) * math.sqrt(dt)
        kernels.advance_block(phi, lz, n, blk, None, dt, 1e12, 1.0, 1.0,
                              0.0, True, False)
        samples.append(n.copy())
    ks = stats.kstest(np.concatenate(samples), "expon",
                      args=(0.0, nbar)).statistic

    ok = (abs(slopes["euler"] - 0.5) <= 0.15
          and abs(slopes["milstein"] - 1.0) <= 0.15 and ks < 0.01)
    _report(5, ok, f"strong orders euler = {slopes['euler']:.3f} "
                   f"(0.5 +- 0.15), milstein = {slopes['milstein']:.3f} "
                   f"(1.0 +- 0.15); KS vs Exponential = {ks:.4f} (< 0.01)")


def test_criterion_06_quantum_sanity(high_inertia_pair, low_inertia_runs,
                                     entropy_run, small_instance):
    runs = {"high-inertia": high_inertia_pair[0],
            "low-inertia": low_inertia_runs[0],
            "entropy": entropy_run,
            "small": small_instance[0]}
    tol = 1e-8
    problems = []
    worst = {"trace": 0.0, "eig": 0.0, "residual": 0.0, "boundary": 0.0}
    for name, s in runs.items():
        checks = {
            "trace": (np.abs(s.trace - 1.0).max(), 1e-8),
            "eig": (-s.min_eigenvalue.min(), 1e-8),
            "residual": (np.abs(s.first_law_residual).max(), 10 * tol),
            "boundary": (max(s.boundary_mom_pop.max(), s.top_fock_pop.max()),
                         1e-6),
        }
        if (s.p_backaction < 0).any():
            problems.append(f"{name}: P_B < 0")
        for key, (value, bound) in checks.items():
            worst[key] = max(worst[key], value)
            if value >= bound:
                problems.append(f"{name}: {key} = {value:.3e} "
                                f"(bound {bound:.0e})")
    ok = not problems
    _report(6, ok, f"worst |tr-1| = {worst['trace']:.2e}, "
                   f"worst -min_eig = {worst['eig']:.2e}, "
                   f"worst residual = {worst['residual']:.2e}, "
                   f"worst boundary pop = {worst['boundary']:.2e}"
                   + ("" if ok else "; " + "; ".join(problems)))


def test_criterion_07_high_inertia_convergence(high_inertia_pair):
    q, c = high_inertia_pair
    # classical output every 0.25 time units matches the quantum grid
    ci = [int(round(t / 0.25)) for t in q.times]
    assert np.allclose(c.times[ci], q.times)
    m = q.times >= 5.0  # below the 5% floor the bound is vacuous (noise)
    rel = np.abs(q.mean_lz[m] - c.mean_lz[ci][m]) / np.abs(c.mean_lz[ci][m])
    ok = rel.max() <= 0.05
    _report(7, ok, f"max |<L_z>_q / <L_z>_c - 1| = {rel.max():.4f} "
                   f"over t in [5, 9] (<= 0.05)")


def test_criterion_08_low_inertia_noise_ordering(low_inertia_runs):
    q, plain, noisy = low_inertia_runs
    ci = [int(round(t / 0.25)) for t in q.times]
    m = q.times >= 5.0
    vq = q.var_lz[m]
    vp = plain.var_lz[ci][m]
    vb = noisy.var_lz[ci][m]
    se = math.sqrt(2.0 / (plain.n_traj - 1))  # relative SE of a variance
    above = (vq - vp > 3.0 * se * np.maximum(vq, vp)).all()
    between = ((vb > vp) & (vb < vq)).all()
    ok = bool(above and between)
    _report(8, ok, f"quantum var exceeds classical by 3 sigma at all "
                   f"t >= 5: {above}; backaction strictly between: "
                   f"{between} (min/max ratio (vb-vp)/(vq-vp) = "
                   f"{((vb - vp) / (vq - vp)).min():.2f}/"
                   f"{((vb - vp) / (vq - vp)).max():.2f})")


def test_criterion_09_quantum_efficiency_below_classical(low_inertia_runs):
    q, plain, _ = low_inertia_runs
    ci = [int(round(t / 0.25)) for t in q.times]
    eta_c = efficiency(plain, P_LOW)[ci]
    with np.errstate(invalid="ignore"):
        eta_q = np.where(q.p_hot > 0, q.p_work / q.p_hot, np.nan)
    m = (q.times > 0) & np.isfinite(eta_c) & np.isfinite(eta_q)
    gap = eta_c[m] - eta_q[m]
    ok = bool(m.any()) and (gap > 0).all()
    _report(9, ok, f"eta_classical - eta_quantum in "
                   f"[{gap.min():.2e}, {gap.max():.2e}] over {m.sum()} "
                   f"matched times (all > 0)")


def test_criterion_10_entropy_production(entropy_run):
    s = entropy_run
    # t = 0 is excluded: the init state is pure, so dS/dt (and with it the
    # intrinsic production) is +infinity there; any regularized number the
    # solver reports at that single point is an artifact of the eigenvalue
    # floor, not a finite rate.
    m = s.times > 0
    rate = s.entropy_production[m]
    times = s.times[m]
    positive = (rate > 0).all()
    i_min = int(np.argmin(rate))
    t_min = times[i_min]
    # 7.7e-4 per unit of 1/kappa time; kappa = 10 in these units
    target = 7.7e-4 * 10.0
    in_band = target / 2.0 <= rate[i_min] <= target * 2.0
    near = abs(t_min - 0.1 * math.sqrt(10.0)) <= 0.3
    ok = bool(positive and in_band and near)
    _report(10, ok, f"S_int rate > 0 everywhere: {positive}; "
                    f"min = {rate[i_min]:.2e} at t = {t_min:.3f} "
                    f"(target {target:.2e} x/2, near 0.316)")


def test_criterion_11_mcwf_matches_master(small_instance):
    master, mc = small_instance
    refs = {"lz": master.mean_lz, "n": master.mean_n,
            "p_work": master.p_work}
    worst = 0.0
    ok = True
    for key, ref in refs.items():
        gap = np.abs(mc[f"mean_{key}"] - ref)
        bound = 2.0 * mc[f"sem_{key}"] + 1e-9
        ok = ok and (gap <= bound).all()
        worst = max(worst, (gap / (mc[f"sem_{key}"] + 0.5e-9)).max())
    _report(11, ok, f"500 trajectories vs master equation: worst z-score "
                    f"= {worst:.2f} (<= 2 at every grid time, "
                    f"{mc['total_jumps']} jumps)")


CLASSICAL_RERUN = """
[experiment]
kind = classical
name = rerun_c

[engine]
inertia = 1.0
kappa = 100.0
n_hot = 1.0
n_cold = 0.0

[init]
kind = gaussian
k = 10.0

[integrator]
dt = 1e-4

[schedule]
t_max = 0.2
output_stride = 100
store_stride = 10
pv_times = 0.2

[ensemble]
n_traj = 200
base_seed = 99

[output]
observables = series, pv, correlation
"""

MCWF_RERUN = """
[experiment]
kind = quantum-mcwf
name = rerun_q

[engine]
inertia = 10.0
kappa = 10.0
n_hot = 1.0
n_cold = 0.0

[init]
k = 10.0

[integrator]
n_max = 2

[schedule]
t_max = 1.0
output_points = 5

[ensemble]
n_traj = 20
base_seed = 98

[output]
observables = series
"""


def test_criterion_12_byte_identical_reruns(tmp_path):
    mismatches = []
    n_files = 0
    for text in (CLASSICAL_RERUN, MCWF_RERUN):
        spec = parse_config(text)
        dirs = []
        for run in ("a", "b"):
            root = tmp_path / f"{spec.name}_{run}"
            run_experiment(spec, str(root), quiet=True)
            dirs.append(root / spec.out_dir)
        with open(dirs[0] / "manifest.json") as fh:
            names = json.load(fh)["outputs"]
        for name in names:
            n_files += 1
            if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                mismatches.append(f"{spec.name}/{name}")
    ok = not mismatches
    _report(12, ok, f"{n_files} CSVs byte-identical across reruns"
                    + ("" if ok else f"; mismatched: {mismatches}"))


def test_criterion_13_figure_recipes():
    frontend = os.path.join(os.path.dirname(__file__), "..", "frontend")
    if not os.path.isdir(frontend):
        _report(13, False, "frontend/ package is missing")
    npm = shutil.which("npm")
    if npm is None:
        _report(13, False, "npm is not available")
    if not os.path.isdir(os.path.join(frontend, "node_modules")):
        install = subprocess.run([npm, "ci", "--no-audit", "--no-fund"],
                                 cwd=frontend, capture_output=True, text=True)
        if install.returncode != 0:
            _report(13, False, f"npm ci failed: {install.stderr[-400:]}")
    proc = subprocess.run([npm, "test", "--silent"], cwd=frontend,
                          capture_output=True, text=True)
    ok = proc.returncode == 0
    tail = (proc.stdout + proc.stderr)[-400:].replace("\n", " ")
    _report(13, ok, "frontend figure-recipe suite "
                    + ("passed" if ok else f"failed: {tail}"))
