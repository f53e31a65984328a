import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, strategies as st

from xxladder.evolve import KrylovConvergenceError, Propagator, evolve_bose_densities, evolve_unitary, propagate_sector
from xxladder.evolve.unitary import krylov_step, lanczos
from xxladder.hilbert import PureState, enumerate_sector, epr_seeded_state, product_state
from xxladder.model import CouplingTable, build_bose_hubbard, build_xx_chain, build_xx_ladder, hamiltonian_matrix, mhz

from conftest import random_vector

TABLE = CouplingTable.device()


def random_chain(n, rng, detune=True):
    m = build_xx_chain(n, list(rng.uniform(8, 15, n - 1)))
    return replace(m, detunings=mhz(rng.normal(0, 3, n))) if detune else m


class TestTwoSite:
    def test_rabi_flop(self):
        m = build_xx_chain(2, 12.3)
        J = mhz(12.3)
        t = np.linspace(0, 100, 201)
        states = evolve_unitary(m, product_state(0b01, 2), t)
        n0 = np.array([s.occupations()[0] for s in states])
        np.testing.assert_allclose(n0, np.cos(J * t) ** 2, atol=1e-12)

    def test_first_zero_and_period(self):
        J = mhz(12.3)
        first_zero = math.pi / (2 * J)
        assert first_zero == pytest.approx(20.33, abs=0.01)
        assert 2 * first_zero == pytest.approx(1 / (2 * 0.0123), rel=1e-12)  # 40.65 ns period
        psi = evolve_unitary(build_xx_chain(2, 12.3), product_state(0b01, 2), [first_zero])[0]
        assert psi.occupations()[0] == pytest.approx(0.0, abs=1e-20)

    def test_t_zero_is_identity(self, rng):
        m = random_chain(6, rng)
        v = random_vector(64, rng)
        psi = evolve_unitary(m, PureState.from_full(v), [0.0])[0]
        np.testing.assert_allclose(psi.to_full(), v, atol=1e-14)


class TestInvariants:
    @given(st.integers(3, 8), st.integers(0, 2**32 - 1))
    def test_norm_number_energy(self, n, seed):
        rng = np.random.default_rng(seed)
        m = random_chain(n, rng)
        v = random_vector(1 << n, rng)
        t = np.linspace(0, 300, 31)
        H = hamiltonian_matrix(m).toarray()
        states = evolve_unitary(m, PureState.from_full(v), t)
        e0 = np.vdot(v, H @ v).real
        n0 = PureState.from_full(v).occupations().sum()
        for s in states:
            w = s.to_full()
            assert s.norm() == pytest.approx(1.0, abs=1e-10)
            assert s.occupations().sum() == pytest.approx(n0, abs=1e-10)
            assert np.vdot(w, H @ w).real == pytest.approx(e0, abs=1e-9)

    def test_sector_preserved(self, rng):
        m = random_chain(8, rng)
        psi = product_state(0b00110101, 8)
        for s in evolve_unitary(m, psi, np.linspace(0, 100, 11)):
            assert s.basis is psi.basis

    def test_full_space_matches_expm(self, rng):
        m = random_chain(5, rng)
        v = random_vector(32, rng)
        H = hamiltonian_matrix(m).toarray()
        for t, s in zip([0.0, 7.5, 60.0], evolve_unitary(m, PureState.from_full(v), [0.0, 7.5, 60.0])):
            np.testing.assert_allclose(s.to_full(), la.expm(-1j * H * t) @ v, atol=1e-11)

    def test_multisector_relative_phase(self, rng):
        m = random_chain(6, rng)
        psi = epr_seeded_state((2, 3), 0b000001, 6)
        H = hamiltonian_matrix(m).toarray()
        v = psi.to_full()
        for t, s in zip([13.0, 150.0], evolve_unitary(m, psi, [13.0, 150.0])):
            np.testing.assert_allclose(s.to_full(), la.expm(-1j * H * t) @ v, atol=1e-11)

    def test_unsorted_times_rejected(self):
        with pytest.raises(ValueError):
            evolve_unitary(build_xx_chain(2, 1.0), product_state(1, 2), [1.0, 0.5])
        with pytest.raises(ValueError):
            evolve_unitary(build_xx_chain(2, 1.0), product_state(1, 2), [-1.0])


class TestKrylov:
    def test_matches_dense_at_924(self):
        m = build_xx_chain(12, TABLE)
        sec = enumerate_sector(12, 6)
        block = product_state(0b010101010101, 12).amplitudes
        t = np.arange(0, 301, 10.0)
        dense = propagate_sector(m, sec, block, t, Propagator(method="dense-eig"))
        kry = propagate_sector(m, sec, block, t, Propagator(method="krylov"))
        assert np.max(np.abs(dense - kry)) <= 1e-9

    def test_ladder_random_state(self, rng):
        m = replace(build_xx_ladder(6, TABLE, TABLE), detunings=mhz(rng.normal(0, 2, 12)))
        sec = enumerate_sector(12, 5)
        block = random_vector(sec.dim, rng)
        t = [0.0, 3.0, 50.0, 51.0, 200.0]
        dense = propagate_sector(m, sec, block, t, Propagator(method="dense-eig"))
        kry = propagate_sector(m, sec, block, t, Propagator(method="krylov", krylov_dim=12))
        assert np.max(np.abs(dense - kry)) <= 1e-9

    def test_auto_threshold(self):
        p = Propagator(dense_threshold=100)
        assert p.use_dense(100) and not p.use_dense(101)

    def test_lanczos_is_orthonormal(self, rng):
        H = hamiltonian_matrix(build_xx_chain(10, TABLE), enumerate_sector(10, 5))
        V, alpha, beta = lanczos(H, random_vector(252, rng), 30)
        np.testing.assert_allclose(V.conj() @ V.T, np.eye(len(V)), atol=1e-12)
        T = np.diag(alpha) + np.diag(beta[:-1], 1) + np.diag(beta[:-1], -1)
        np.testing.assert_allclose(V.conj() @ (H @ V.T), T, atol=1e-10)

    def test_lucky_breakdown(self):
        H = hamiltonian_matrix(build_xx_chain(2, 10.0), enumerate_sector(2, 1))
        V, alpha, beta = lanczos(H, np.array([1.0, 0.0], complex), 30)
        assert len(V) == 2 and beta[-1] == 0.0

    def test_unreachable_tolerance(self, rng):
        H = hamiltonian_matrix(build_xx_chain(10, TABLE), enumerate_sector(10, 5))
        with pytest.raises(KrylovConvergenceError):
            krylov_step(H, random_vector(252, rng), 10.0, Propagator(method="krylov", krylov_dim=4, krylov_tol=1e-300))

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            Propagator(krylov_dim=3)
        with pytest.raises(ValueError):
            Propagator(dense_threshold=0)
        with pytest.raises(ValueError):
            Propagator(method="rk4")


class TestBose:
    def test_hard_core_matches_spin(self):
        spin = build_xx_chain(5, 12.0)
        bose = build_bose_hubbard(spin, -50.0, 2)
        t = np.linspace(0, 100, 21)
        a = evolve_bose_densities(bose, [1, 0, 1, 0, 1], t)
        b = np.array([s.occupations() for s in evolve_unitary(spin, product_state(0b10101, 5), t)])
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_particle_number(self):
        bose = build_bose_hubbard(build_xx_chain(4, 12.0), -200.0, 3)
        n = evolve_bose_densities(bose, [1, 0, 1, 0], np.linspace(0, 80, 9))
        np.testing.assert_allclose(n.sum(axis=1), 2.0, atol=1e-12)

    def test_bad_occupation(self):
        bose = build_bose_hubbard(build_xx_chain(3, 12.0), -200.0, 2)
        with pytest.raises(ValueError):
            evolve_bose_densities(bose, [2, 0, 0], [0.0])
