import math
from dataclasses import replace

import numpy as np
import pytest

from xxladder import device
from xxladder.evolve import (
    NoiseModel,
    TrajectoryPlan,
    collapse_operators,
    evolve_lindblad_dense,
    evolve_trajectories,
    evolve_unitary,
)
from xxladder.hilbert import DensityMatrix, PureState, epr_seeded_state, partial_trace, product_state
from xxladder.model import SpinModel, build_xx_chain, mhz

from conftest import random_density_matrix, random_vector


def single_site():
    return SpinModel(1, (), np.zeros(1), topology="custom")


PLUS = np.full((2, 2), 0.5, dtype=complex)


class TestCollapseOperators:
    def test_dephasing_prefactor(self):
        ops = collapse_operators(NoiseModel(t2star=[2000.0, 5000.0]), 2)
        site, op, pref = ops[0]
        assert site == 0 and pref == pytest.approx(1 / math.sqrt(4000.0))
        np.testing.assert_array_equal(op, np.diag([1.0, -1.0]))

    def test_disabled(self):
        assert collapse_operators(NoiseModel.off(), 12) == []

    def test_chain_table(self):
        t2 = [device.T2STAR_US[q] * 1e3 for q in device.site_qubits("chain", 12)]
        ops = collapse_operators(NoiseModel(t2star=t2), 12)
        assert len(ops) == 12 and [o[0] for o in ops] == list(range(12))

    def test_relaxation(self):
        ops = collapse_operators(NoiseModel(t1=[1000.0], t2star=[500.0], channels=("dephasing", "relaxation")), 1)
        assert len(ops) == 2
        assert ops[1][2] == pytest.approx(1e-3 ** 0.5)

    @pytest.mark.parametrize("kw", [dict(t2star=[-1.0]), dict(t2star=None), dict(channels=("relaxation",)), dict(t2star=[1.0], channels=("leakage",))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            NoiseModel(**kw)


class TestDenseLindblad:
    def test_single_qubit_dephasing(self):
        T2 = 2000.0
        t = np.linspace(0, 6000, 61)
        rhos = evolve_lindblad_dense(single_site(), NoiseModel(t2star=[T2]), DensityMatrix((0,), PLUS), t)
        coh = np.array([r.matrix[0, 1] for r in rhos])
        np.testing.assert_allclose(coh, 0.5 * np.exp(-t / T2), atol=1e-8)
        half = evolve_lindblad_dense(single_site(), NoiseModel(t2star=[T2]), DensityMatrix((0,), PLUS), [0.0, T2 * math.log(2)])
        assert abs(half[1].matrix[0, 1]) == pytest.approx(0.25, abs=1e-8)

    def test_relaxation_monotone(self):
        T1 = 1500.0
        noise = NoiseModel(t1=[T1], t2star=[1e9], channels=("dephasing", "relaxation"))
        t = np.linspace(0, 5000, 51)
        rhos = evolve_lindblad_dense(single_site(), noise, DensityMatrix((0,), np.diag([0, 1.0])), t)
        n = np.array([r.matrix[1, 1].real for r in rhos])
        assert np.all(np.diff(n) < 0)
        np.testing.assert_allclose(n, np.exp(-t / T1), atol=1e-8)

    def test_zero_rates_reproduce_unitary(self, rng):
        m = replace(build_xx_chain(4, [11.0, 12.5, 13.0]), detunings=mhz([0.5, -1.0, 0.0, 2.0]))
        v = random_vector(16, rng)
        t = np.linspace(0, 120, 13)
        rhos = evolve_lindblad_dense(m, NoiseModel.off(), DensityMatrix.from_pure(PureState.from_full(v)), t)
        for r, s in zip(rhos, evolve_unitary(m, PureState.from_full(v), t)):
            w = s.to_full()
            np.testing.assert_allclose(r.matrix, np.outer(w, w.conj()), atol=1e-8)

    def test_diagonal_state_static_without_hamiltonian(self, rng):
        m = SpinModel(3, (), np.zeros(3))
        rho0 = np.diag(rng.dirichlet(np.ones(8))).astype(complex)
        rhos = evolve_lindblad_dense(m, NoiseModel(t2star=[900.0, 1500.0, 2100.0]), DensityMatrix((0, 1, 2), rho0), [0, 500, 3000])
        for r in rhos:
            np.testing.assert_allclose(r.matrix, rho0, atol=1e-12)

    def test_physicality_bounds(self, rng):
        m = build_xx_chain(4, 12.0)
        noise = NoiseModel(t1=[3000.0] * 4, t2star=[800.0, 1200.0, 2000.0, 600.0], channels=("dephasing", "relaxation"))
        rho0 = DensityMatrix(tuple(range(4)), random_density_matrix(16, rng, rank=2))
        for r in evolve_lindblad_dense(m, noise, rho0, np.linspace(0, 2000, 41)):
            r.validate(herm_tol=1e-9, trace_tol=1e-9, eig_tol=1e-7)

    def test_site_cap(self):
        with pytest.raises(ValueError):
            evolve_lindblad_dense(build_xx_chain(9, 1.0), NoiseModel.off(), DensityMatrix.from_pure(product_state(1, 9)), [0, 1])


def dense_densities(model, noise, psi, t):
    rhos = evolve_lindblad_dense(model, noise, DensityMatrix.from_pure(psi), t)
    n = model.num_sites
    return np.array([[partial_trace(r, [i]).matrix[1, 1].real for i in range(n)] for r in rhos]), rhos


class TestTrajectories:
    def test_zero_rates_exact(self):
        m = build_xx_chain(5, 12.0)
        psi = product_state(0b10101, 5)
        t = np.linspace(0, 100, 11)
        res = evolve_trajectories(m, NoiseModel.off(), psi, t, TrajectoryPlan(num_trajectories=3, seed=1))
        exact = np.array([s.occupations() for s in evolve_unitary(m, psi, t)])
        np.testing.assert_allclose(res.densities, exact, atol=1e-12)
        assert res.num_jumps == 0
        assert np.all(res.densities_stderr < 1e-12)

    def test_deterministic(self):
        m = build_xx_chain(4, 12.0)
        args = (m, NoiseModel(t2star=[300.0] * 4), product_state(0b0101, 4), np.linspace(0, 200, 21))
        a = evolve_trajectories(*args, TrajectoryPlan(50, seed=7))
        b = evolve_trajectories(*args, TrajectoryPlan(50, seed=7))
        c = evolve_trajectories(*args, TrajectoryPlan(50, seed=8))
        assert a.densities.tobytes() == b.densities.tobytes()
        assert a.rho[5].matrix.tobytes() == b.rho[5].matrix.tobytes()
        assert not np.array_equal(a.densities, c.densities)

    @pytest.mark.parametrize("channels", [("dephasing",), ("dephasing", "relaxation")])
    def test_matches_dense(self, channels):
        m = build_xx_chain(4, [12.0, 13.0, 11.5])
        noise = NoiseModel(t1=[400.0, 600.0, 500.0, 700.0], t2star=[250.0, 400.0, 300.0, 350.0], channels=channels)
        psi = product_state(0b0101, 4)
        t = np.linspace(0, 300, 16)
        dense, rhos = dense_densities(m, noise, psi, t)
        res = evolve_trajectories(m, noise, psi, t, TrajectoryPlan(800, seed=3))
        late = t >= 30
        z = np.abs(res.densities - dense)[late] / (res.densities_stderr[late] + 1e-6)
        assert np.mean(z < 3) >= 0.95 and z.max() < 5
        # reduced states agree to statistical accuracy as well
        err = max(np.abs(res.rho[k].matrix - rhos[k].matrix).max() for k in range(len(t)))
        assert err < 0.08

    def test_epr_multisector_relaxation(self):
        m = build_xx_chain(3, 12.0)
        noise = NoiseModel(t1=[200.0] * 3, t2star=[400.0] * 3, channels=("dephasing", "relaxation"))
        psi = epr_seeded_state((0, 1), 0, 3)
        t = np.linspace(0, 400, 9)
        dense, _ = dense_densities(m, noise, psi, t)
        res = evolve_trajectories(m, noise, psi, t, TrajectoryPlan(600, seed=11))
        assert np.abs(res.densities - dense).max() < 5 * res.densities_stderr.max() + 1e-6
        for r in res.rho:
            assert np.trace(r.matrix).real == pytest.approx(1.0, abs=1e-12)

    def test_site_states_consistent(self):
        m = build_xx_chain(4, 12.0)
        res = evolve_trajectories(m, NoiseModel(t2star=[500.0] * 4), product_state(0b0011, 4), np.linspace(0, 100, 6), TrajectoryPlan(40))
        for k in range(6):
            for i in range(4):
                np.testing.assert_allclose(res.site_rho[k, i], partial_trace(res.rho[k], [i]).matrix, atol=1e-12)
                assert res.site_rho[k, i, 1, 1].real == pytest.approx(res.densities[k, i], abs=1e-12)
