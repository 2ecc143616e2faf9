import math

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import ive

from rotorengine.params import EngineParams
from rotorengine.quantum import (QuantumSpace, angle_distribution,
                                 build_operators, build_space, evolve_master,
                                 expectation, liouvillian_apply,
                                 occupation_to_temperature, q_entropy,
                                 q_powers, regression_row, run_mcwf_ensemble,
                                 truncation_check, two_time_grid,
                                 von_mises_state)

P_SMALL = EngineParams(inertia=10.0, kappa=1.0, n_hot=0.5, n_cold=0.0)


def _random_rho(space, seed=0):
    rng = np.random.Generator(np.random.Philox(key=seed))
    a = rng.normal(size=(space.dim, space.dim)) \
        + 1j * rng.normal(size=(space.dim, space.dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestSpace:
    def test_window_must_straddle_zero(self):
        with pytest.raises(ValueError):
            QuantumSpace(m_min=1, m_max=5)
        with pytest.raises(ValueError):
            QuantumSpace(m_min=-5, m_max=5, n_max=0)

    def test_dims(self):
        s = QuantumSpace(m_min=-3, m_max=4, n_max=2)
        assert s.n_momentum == 8 and s.n_fock == 3 and s.dim == 24
        assert s.m_values[0] == -3 and s.m_values[-1] == 4

    def test_build_space_grows_with_time(self):
        s0 = build_space(P_SMALL, k=10, t_max=0.0)
        s1 = build_space(P_SMALL, k=10, t_max=100.0, dim_cap=10**8)
        assert s1.m_max > s0.m_max
        assert s1.m_min <= s0.m_min  # diffusion can outrun the upward drift

    def test_build_space_cap(self):
        with pytest.raises(ValueError, match="cap"):
            build_space(P_SMALL, k=10, t_max=100.0, dim_cap=10000)
        with pytest.raises(ValueError):
            build_space(P_SMALL, k=0.5, t_max=1.0)


class TestOperators:
    def test_shift_commutator(self):
        # [e^{i phi}, L_z] = -e^{i phi}, exact including boundary rows
        space = QuantumSpace(m_min=-4, m_max=4, n_max=2)
        ops = build_operators(P_SMALL, space)
        comm = ops.shift_up @ ops.lz - ops.lz @ ops.shift_up
        assert abs(comm + ops.shift_up).max() == 0.0

    def test_weights_partition_identity(self):
        space = QuantumSpace(m_min=-4, m_max=4, n_max=2)
        ops = build_operators(P_SMALL, space)
        eye = np.eye(space.dim)
        assert np.allclose((ops.f_hot + ops.f_cold).toarray(), eye)

    def test_hermiticity(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        ops = build_operators(P_SMALL, space)
        for op in (ops.hamiltonian, ops.num, ops.op_work, ops.op_heat_hot,
                   ops.op_heat_cold, ops.op_backaction, ops.op_energy):
            d = op.toarray()
            assert np.allclose(d, d.conj().T)

    def test_jump_count_and_rates(self):
        space = QuantumSpace(m_min=-2, m_max=2, n_max=1)
        assert len(build_operators(P_SMALL, space).jumps) == 3  # cold n=0
        p = EngineParams(inertia=1.0, kappa=1.0, n_hot=0.5, n_cold=0.1)
        assert len(build_operators(p, space).jumps) == 4

    def test_liouvillian_matches_dense_oracle(self):
        # independent dense assembly of the same generator
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        p = EngineParams(inertia=3.0, kappa=2.0, n_hot=0.8, n_cold=0.2)
        ops = build_operators(p, space)
        M, F = space.n_momentum, space.n_fock

        shift = np.diag(np.ones(M - 1), -1)
        cos_r = 0.5 * (shift + shift.T)
        sin_r = (shift - shift.T) / 2j
        lz_r = np.diag(space.m_values.astype(float))
        a_f = np.diag(np.sqrt(np.arange(1, F)), 1)
        num_f = np.diag(np.arange(F, dtype=float))
        h = np.kron(lz_r @ lz_r / (2 * p.inertia), np.eye(F)) \
            + np.kron(cos_r, num_f)
        fh = 0.5 * (np.eye(M) + sin_r)
        fc = 0.5 * (np.eye(M) - sin_r)
        ls = []
        for f, nb in ((fh, p.n_hot), (fc, p.n_cold)):
            ls.append(math.sqrt(p.kappa * (nb + 1)) * np.kron(f, a_f))
            ls.append(math.sqrt(p.kappa * nb) * np.kron(f, a_f.T))

        rho = _random_rho(space, seed=1)
        oracle = -1j * (h @ rho - rho @ h)
        for L in ls:
            oracle += L @ rho @ L.conj().T \
                - 0.5 * (L.conj().T @ L @ rho + rho @ L.conj().T @ L)
        got = liouvillian_apply(rho, ops)
        assert np.allclose(got, oracle, atol=1e-12)
        assert abs(np.trace(got)) < 1e-12  # trace preserving

    def test_expectation_matches_trace(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        ops = build_operators(P_SMALL, space)
        rho = _random_rho(space, seed=2)
        assert expectation(ops.lz, rho) == pytest.approx(
            np.trace(ops.lz.toarray() @ rho), abs=1e-12)

    def test_residual_is_energy_balance_gap(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        ops = build_operators(P_SMALL, space)
        rho = _random_rho(space, seed=3)
        p_h, p_c, p_w, p_b, resid = q_powers(rho, ops)
        de = expectation(ops.op_energy, liouvillian_apply(rho, ops)).real
        assert resid == pytest.approx(de - (p_h + p_c - p_w), abs=1e-12)
        assert p_b > 0.0  # positive operator against a full-rank state


class TestInitialState:
    def test_normalized_vacuum_mode(self):
        space = QuantumSpace(m_min=-12, m_max=12, n_max=3)
        psi = von_mises_state(space, k=2.0, mu=0.7)
        assert np.linalg.norm(psi) == pytest.approx(1.0)
        pops = np.abs(psi.reshape(space.n_momentum, space.n_fock)) ** 2
        assert pops[:, 1:].sum() == 0.0  # mode starts in vacuum

    def test_momentum_profile(self):
        space = QuantumSpace(m_min=-12, m_max=12, n_max=1)
        k = 2.0
        psi = von_mises_state(space, k, mu=0.0)
        c = psi.reshape(space.n_momentum, space.n_fock)[:, 0].real
        i0 = space.n_momentum // 2
        # coefficient ratios follow the Bessel ladder I_m(k)/I_0(k)
        for m in (1, 2, 3):
            assert c[i0 + m] / c[i0] == pytest.approx(
                ive(m, k) / ive(0, k), rel=1e-12)
            assert c[i0 + m] == pytest.approx(c[i0 - m], rel=1e-12)

    def test_undersized_window_rejected(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=1)
        with pytest.raises(ValueError, match="mass"):
            von_mises_state(space, k=9.0, mu=0.0)

    def test_angle_density_matches_exponential_form(self):
        space = QuantumSpace(m_min=-10, m_max=10, n_max=1)
        k, mu = 2.0, 1.1
        psi = von_mises_state(space, k, mu)
        rho = np.outer(psi, psi.conj())
        grid = np.linspace(0, 2 * math.pi, 50, endpoint=False)
        p = angle_distribution(rho, space, grid)
        expect = np.exp(2 * k * (np.cos(grid - mu) - 1)) \
            / (2 * math.pi * ive(0, 2 * k))
        assert np.allclose(p, expect, atol=1e-6)
        mass = np.trapezoid(np.append(p, p[0]), np.append(grid, 2 * math.pi))
        assert mass == pytest.approx(1.0, abs=1e-9)


class TestMasterEquation:
    def _run(self, params, space, k=1.0, mu=math.pi / 2, t_max=2.0, n_t=5,
             **kw):
        psi = von_mises_state(space, k, mu, drop_tol=1e-6)
        grid = np.linspace(0.0, t_max, n_t)
        return evolve_master(psi, grid, params, space, **kw)

    def test_state_quality_invariants(self):
        space = QuantumSpace(m_min=-6, m_max=6, n_max=3)
        s = self._run(P_SMALL, space, tol=1e-8)
        assert np.allclose(s.trace, 1.0, atol=1e-7)
        assert (s.purity <= 1.0 + 1e-9).all()
        assert (s.min_eigenvalue > -1e-7).all()
        assert s.mean_n[-1] > s.mean_n[0]  # vacuum mode heats up

    def test_frozen_rotor_thermalizes_to_hot_occupation(self):
        # huge inertia pins the packet at the hot contact
        p = EngineParams(inertia=1e9, kappa=1.0, n_hot=0.2, n_cold=0.0)
        space = QuantumSpace(m_min=-13, m_max=13, n_max=5)
        s = self._run(p, space, k=4.0, t_max=8.0, n_t=5, tol=1e-7)
        assert s.mean_n[-1] == pytest.approx(0.2, rel=0.02)

    def test_equal_occupations_give_no_torque(self):
        # mirror symmetry phi -> -phi holds when both contacts are equal
        p = EngineParams(inertia=5.0, kappa=1.0, n_hot=0.3, n_cold=0.3)
        space = QuantumSpace(m_min=-6, m_max=6, n_max=2)
        s = self._run(p, space, k=1.0, mu=0.0, t_max=2.0, tol=1e-9)
        assert np.abs(s.mean_lz).max() < 1e-7

    def test_near_closed_dynamics_stays_pure(self):
        p = EngineParams(inertia=2.0, kappa=1e-12, n_hot=1.0, n_cold=0.0)
        space = QuantumSpace(m_min=-6, m_max=6, n_max=1)
        s = self._run(p, space, k=1.0, t_max=1.0, tol=1e-10)
        assert s.purity[-1] == pytest.approx(1.0, abs=1e-8)
        assert np.allclose(s.mean_lz, s.mean_lz[0], atol=1e-8)

    def test_entropy_series(self):
        p = EngineParams(inertia=5.0, kappa=1.0, n_hot=0.5, n_cold=0.1)
        space = QuantumSpace(m_min=-6, m_max=6, n_max=3)
        s = self._run(p, space, t_max=1.0, tol=1e-8, compute_entropy=True)
        assert s.entropy[0] == pytest.approx(0.0, abs=1e-9)  # pure start
        assert s.entropy[-1] > 0.01
        # subadditivity of the reduced entropies
        assert (s.entropy <= s.entropy_rotor + s.entropy_mode + 1e-9).all()
        # second law for the intrinsic production rate
        assert (s.entropy_production[1:] > -1e-8).all()

    def test_checkpoints_land_on_grid(self):
        space = QuantumSpace(m_min=-6, m_max=6, n_max=2)
        s = self._run(P_SMALL, space, t_max=2.0, n_t=5,
                      checkpoint_times=(0.0, 1.02, 2.0))
        assert sorted(s.checkpoints) == [0.0, 1.0, 2.0]
        for rho in s.checkpoints.values():
            assert np.trace(rho).real == pytest.approx(1.0, abs=1e-7)


class TestEntropyHelpers:
    def test_temperature_roundtrip(self):
        t = occupation_to_temperature(0.5, 100.0)
        assert 1.0 / (math.exp(100.0 / t) - 1.0) == pytest.approx(0.5)
        with pytest.raises(ValueError):
            occupation_to_temperature(0.0, 100.0)

    def test_pure_and_mixed_limits(self):
        p = EngineParams(inertia=1.0, kappa=1.0, n_hot=0.5, n_cold=0.1)
        space = QuantumSpace(m_min=-2, m_max=2, n_max=1)
        ops = build_operators(p, space)
        psi = von_mises_state(space, 1.0, 0.0, drop_tol=1e-2)
        rho = np.outer(psi, psi.conj())
        s, ds, t_h, t_c, s_r, s_m = q_entropy(
            rho, liouvillian_apply(rho, ops), p, space)
        assert s == pytest.approx(0.0, abs=1e-10)
        assert t_h > t_c > 0
        mixed = np.eye(space.dim, dtype=complex) / space.dim
        s, _, _, _, s_r, s_m = q_entropy(
            mixed, liouvillian_apply(mixed, ops), p, space)
        assert s == pytest.approx(math.log(space.dim), rel=1e-10)
        assert s_r == pytest.approx(math.log(space.n_momentum), rel=1e-10)
        assert s_m == pytest.approx(math.log(space.n_fock), rel=1e-10)

    def test_entropy_requires_cold_occupation(self):
        space = QuantumSpace(m_min=-2, m_max=2, n_max=1)
        rho = np.eye(space.dim, dtype=complex) / space.dim
        with pytest.raises(ValueError, match="n_cold"):
            q_entropy(rho, rho, P_SMALL, space)


class TestTruncationReport:
    def test_boundary_concentration_flagged(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        rho = np.zeros((space.dim, space.dim), dtype=complex)
        rho[-1, -1] = 1.0  # all weight at (m_max, n_max)
        rep = truncation_check(rho, space)
        assert not rep.passed
        text = "\n".join(rep.offenders())
        assert "momentum row m = 3" in text and "top Fock" in text

    def test_interior_state_passes(self):
        space = QuantumSpace(m_min=-3, m_max=3, n_max=2)
        rho = np.zeros((space.dim, space.dim), dtype=complex)
        rho[space.n_fock * 3, space.n_fock * 3] = 1.0  # m = 0, n = 0
        assert truncation_check(rho, space).passed


class TestTwoTime:
    def test_regression_matches_unitary_oracle(self):
        # nearly closed system: compare against dense expm propagation
        p = EngineParams(inertia=2.0, kappa=1e-12, n_hot=1.0, n_cold=0.0)
        space = QuantumSpace(m_min=-6, m_max=6, n_max=1)
        ops = build_operators(p, space)
        psi = von_mises_state(space, 2.0, 0.4, drop_tol=1e-6)
        rho = np.outer(psi, psi.conj())
        e_up = ops.shift_up.toarray()
        x0 = 0.5 * (e_up @ rho + rho @ e_up)
        t2 = np.array([0.0, 0.5, 1.0])
        c_minus, c_plus = regression_row(rho, 0.0, t2, ops, tol=1e-10)
        h = ops.hamiltonian.toarray()
        for i, t in enumerate(t2):
            u = expm(-1j * h * t)
            xt = u @ x0 @ u.conj().T
            assert c_minus[i] == pytest.approx(
                np.trace(e_up.conj().T @ xt), abs=1e-7)
            assert c_plus[i] == pytest.approx(
                np.trace(e_up @ xt), abs=1e-7)

    def test_grid_is_symmetric_with_unit_diagonal(self):
        space = QuantumSpace(m_min=-6, m_max=6, n_max=2)
        ops = build_operators(P_SMALL, space)
        psi = von_mises_state(space, 1.0, math.pi / 2, drop_tol=1e-6)
        grid = np.linspace(0.0, 1.0, 3)
        s = evolve_master(psi, grid, P_SMALL, space, ops=ops, tol=1e-9,
                          checkpoint_times=grid)
        times, vals = two_time_grid(s, ops, tol=1e-9)
        assert np.array_equal(times, grid)
        assert np.allclose(vals, vals.T, atol=1e-9)
        assert (np.abs(vals) <= 1.0).all()
        assert np.allclose(np.diag(vals), 1.0, atol=0.02)

    def test_rejects_backward_grid(self):
        space = QuantumSpace(m_min=-2, m_max=2, n_max=1)
        ops = build_operators(P_SMALL, space)
        rho = np.eye(space.dim, dtype=complex) / space.dim
        with pytest.raises(ValueError):
            regression_row(rho, 1.0, [0.5], ops)


class TestMCWF:
    def test_trajectory_deterministic(self):
        space = QuantumSpace(m_min=-4, m_max=4, n_max=2)
        ops = build_operators(P_SMALL, space)
        psi = von_mises_state(space, 1.0, math.pi / 2, drop_tol=1e-6)
        grid = np.linspace(0.0, 2.0, 5)
        from rotorengine.quantum import mcwf_trajectory
        a = mcwf_trajectory(psi, grid, ops, seed=12)
        b = mcwf_trajectory(psi, grid, ops, seed=12)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])
        assert np.allclose(np.linalg.norm(a[0], axis=1), 1.0)

    def test_ensemble_matches_master(self):
        space = QuantumSpace(m_min=-4, m_max=4, n_max=2)
        ops = build_operators(P_SMALL, space)
        psi = von_mises_state(space, 1.0, math.pi / 2, drop_tol=1e-6)
        grid = np.linspace(0.0, 2.0, 5)
        master = evolve_master(psi, grid, P_SMALL, space, ops=ops, tol=1e-9)
        mc = run_mcwf_ensemble(psi, grid, ops, n_traj=300, base_seed=17)
        assert mc["total_jumps"] > 0
        for key, ref in (("lz", master.mean_lz), ("n", master.mean_n)):
            gap = np.abs(mc[f"mean_{key}"] - ref)
            assert (gap <= 4.0 * mc[f"sem_{key}"] + 1e-3).all()
