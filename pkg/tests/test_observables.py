import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, strategies as st

from xxladder.evolve import evolve_unitary
from xxladder.hilbert import DensityMatrix, PureState, epr_seeded_state, partial_trace, product_state
from xxladder.model import CouplingTable, build_xx_chain, build_xx_ladder, hamiltonian_matrix, mhz
from xxladder.observables import (
    TimeSeries,
    beta_for_energy,
    gibbs_state,
    local_density,
    operator_distance,
    page_value,
    site_averaged_distance,
    solve_beta,
    thermal_reference,
    time_average,
    tripartite_mi,
    volume_law_fit,
    von_neumann_entropy,
)

from conftest import random_density_matrix, random_vector

NEEL = 0b010101010101


def haar_unitary(d, rng):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


class TestDensity:
    def test_groups_at_t0(self):
        psi = product_state(NEEL, 12)
        assert local_density(psi, range(0, 12, 2)) == 1.0
        assert local_density(psi, range(1, 12, 2)) == 0.0

    def test_density_matrix_route(self, rng):
        psi = PureState.from_full(random_vector(16, rng))
        dm = DensityMatrix.from_pure(psi)
        assert local_density(dm, [0, 3]) == pytest.approx(local_density(psi, [0, 3]))

    def test_empty_group(self):
        with pytest.raises(ValueError):
            local_density(product_state(1, 2), [])

    def test_group_weighted_sum_conserved(self):
        m = build_xx_chain(10, 12.2)
        psi = product_state(0b0101010101, 10)
        up, down = list(range(0, 10, 2)), list(range(1, 10, 2))
        for s in evolve_unitary(m, psi, np.linspace(0, 300, 16)):
            nu, nd = local_density(s, up), local_density(s, down)
            assert 0 <= nu <= 1 and 0 <= nd <= 1
            assert (len(up) * nu + len(down) * nd) / 10 == pytest.approx(0.5, abs=1e-10)


class TestGibbs:
    def test_beta_zero_for_product_states(self):
        H = hamiltonian_matrix(build_xx_chain(6, CouplingTable.device()))
        beta = solve_beta(H, product_state(0b010101, 6))
        assert abs(beta) < 1e-12

    def test_beta_zero_state(self):
        H = hamiltonian_matrix(build_xx_chain(3, 10.0))
        np.testing.assert_allclose(gibbs_state(H, 0.0).state.matrix, np.eye(8) / 8)

    def test_ground_state_target(self):
        H = replace(build_xx_chain(3, 10.0), detunings=mhz([1.0, -2.0, 0.5]))
        Hm = hamiltonian_matrix(H).toarray()
        evals, V = la.eigh(Hm)
        beta = solve_beta(Hm, V[:, 0])
        g = gibbs_state(Hm, beta).state.matrix
        assert beta > 100
        assert abs(np.trace(g @ Hm).real - evals[0]) < 1e-9 * np.abs(evals).max()

    @given(st.floats(-0.9, 0.9), st.integers(0, 2**32 - 1))
    def test_energy_matched(self, frac, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(6, 6))
        H = A + A.T
        evals = la.eigvalsh(H)
        edge = evals[-1] if frac > 0 else evals[0]
        target = evals.mean() + abs(frac) * (edge - evals.mean())
        beta = beta_for_energy(evals, target)
        w = np.exp(-beta * (evals - evals.min() if beta > 0 else evals - evals.max()))
        e = np.dot(w, evals) / w.sum()
        assert abs(e - target) < 1e-9 * np.abs(evals).max()

    def test_outside_spectrum(self):
        with pytest.raises(ValueError):
            beta_for_energy([-1.0, 0.0, 1.0], 2.0)

    def test_thermal_reference_matches_full_gibbs(self):
        m = replace(build_xx_chain(5, 12.0), detunings=mhz([3.0, -1.0, 0.0, 2.0, -4.0]))
        psi = product_state(0b00011, 5)
        ref = thermal_reference(m, psi)
        H = hamiltonian_matrix(m)
        assert ref.beta == pytest.approx(solve_beta(H, psi), rel=1e-9)
        g = gibbs_state(H, ref.beta).state
        for i in range(5):
            np.testing.assert_allclose(ref.site_states()[i], partial_trace(g, [i]).matrix, atol=1e-12)

    def test_thermal_reference_infinite_temperature(self):
        ref = thermal_reference(build_xx_ladder(6, 12.3, 13.6), product_state(NEEL, 12))
        assert ref.beta == 0.0
        np.testing.assert_allclose(ref.site_occupations, 0.5)


class TestDistance:
    def test_excited_against_mixed(self):
        assert operator_distance(np.diag([0.0, 1.0]), np.eye(2) / 2) == pytest.approx(0.5)

    def test_self(self, rng):
        r = random_density_matrix(4, rng)
        assert operator_distance(r, r) == 0.0

    def test_half_trace_distance_single_site(self, rng):
        a, b = random_density_matrix(2, rng), random_density_matrix(2, rng)
        half_trace = 0.5 * np.abs(la.eigvalsh(a - b)).sum()
        assert operator_distance(a, b) == pytest.approx(half_trace, abs=1e-14)

    @given(st.integers(0, 2**32 - 1))
    def test_unitary_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_density_matrix(4, rng), random_density_matrix(4, rng)
        U = haar_unitary(4, rng)
        rot = lambda r: U @ r @ U.conj().T
        assert operator_distance(rot(a), rot(b)) == pytest.approx(operator_distance(a, b), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            operator_distance(np.eye(2) / 2, np.eye(4) / 4)

    def test_site_average_neel(self):
        assert site_averaged_distance(product_state(NEEL, 12)) == pytest.approx(0.5)


class TestEntropy:
    def test_projector(self):
        assert von_neumann_entropy(np.diag([1.0, 0.0])) == 0.0

    def test_mixed(self):
        assert von_neumann_entropy(np.eye(2) / 2) == pytest.approx(math.log(2))

    def test_epr_site(self):
        assert von_neumann_entropy(partial_trace(epr_seeded_state((0, 1), 0, 2), [0])) == pytest.approx(math.log(2))

    @given(st.integers(2, 10), st.integers(0, 2**32 - 1))
    def test_complement_equality_and_bounds(self, n, seed):
        rng = np.random.default_rng(seed)
        psi = PureState.from_full(random_vector(1 << n, rng))
        A = sorted(rng.choice(n, size=rng.integers(1, n), replace=False).tolist())
        Ac = [s for s in range(n) if s not in A]
        sa = von_neumann_entropy(partial_trace(psi, A))
        assert sa == pytest.approx(von_neumann_entropy(partial_trace(psi, Ac)), abs=1e-9)
        assert -1e-12 <= sa <= min(len(A), len(Ac)) * math.log(2) + 1e-12

    def test_twelve_qubit_bipartitions(self, rng):
        psi = PureState.from_full(random_vector(1 << 12, rng))
        for l in range(1, 12):
            A = list(range(l))
            assert von_neumann_entropy(partial_trace(psi, A)) == pytest.approx(
                von_neumann_entropy(partial_trace(psi, range(l, 12))), abs=1e-9)


class TestPage:
    def test_half_system(self):
        assert page_value(6, 12) == pytest.approx(math.log(64) - 0.5)
        assert page_value(6, 12) == pytest.approx(3.6589, abs=1e-4)

    def test_single_site(self):
        assert page_value(1, 12) == pytest.approx(math.log(2) - 2 / 4096)
        assert page_value(1, 12) == pytest.approx(0.6927, abs=1e-4)

    def test_full_system_edge(self):
        assert page_value(4, 4) == pytest.approx(4 * math.log(2) - 8)

    def test_range(self):
        with pytest.raises(ValueError):
            page_value(0, 4)

    @staticmethod
    def exact_page(l, N):
        m, n = 2**l, 2 ** (N - l)
        return sum(1 / k for k in range(n + 1, m * n + 1)) - (m - 1) / (2 * n)

    def test_haar_average(self, rng):
        # Monte Carlo against the exact finite-size mean; the closed form is its large-n limit
        vals = [von_neumann_entropy(partial_trace(PureState.from_full(random_vector(64, rng)), [0, 1])) for _ in range(400)]
        se = np.std(vals) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - self.exact_page(2, 6)) < 3 * se

    def test_closed_form_close_to_exact(self):
        assert abs(page_value(6, 12) - self.exact_page(6, 12)) < 1e-3
        assert abs(page_value(2, 6) - self.exact_page(2, 6)) < 0.01


class TestTMI:
    def test_epr_seed_zero(self):
        psi = epr_seeded_state((0, 1), 0, 12)
        assert abs(tripartite_mi(psi, [0], [1], [2, 3, 4])) < 1e-12

    def test_product_zero(self):
        assert abs(tripartite_mi(product_state(0b10110, 5), [0], [1, 4], [2])) < 1e-12

    def test_ghz_is_zero(self):
        ghz = np.zeros(8, complex)
        ghz[0] = ghz[7] = 1 / math.sqrt(2)
        # every proper marginal has entropy ln 2 and the whole is pure
        assert tripartite_mi(PureState.from_full(ghz), [0], [1], [2]) == pytest.approx(0.0, abs=1e-12)

    def test_parity_mixture(self):
        # uniform mixture over (a, b, a xor b): single sites ln2, pairs and the whole 2 ln2
        diag = np.zeros(8)
        for a in (0, 1):
            for b in (0, 1):
                diag[a | (b << 1) | ((a ^ b) << 2)] = 0.25
        rho = DensityMatrix((0, 1, 2), np.diag(diag))
        assert tripartite_mi(rho, [0], [1], [2]) == pytest.approx(-math.log(2), abs=1e-12)

    def test_invalid_partition(self):
        rho = partial_trace(product_state(0, 4), [0, 1, 2])
        with pytest.raises(ValueError):
            tripartite_mi(rho, [0], [0], [2])
        with pytest.raises(ValueError):
            tripartite_mi(rho, [0], [1], [3])


class TestTimeSeries:
    def test_constant(self):
        ts = TimeSeries(np.arange(10.0), {"x": np.full(10, 3.5)})
        assert time_average(ts, 4.0)["x"] == 3.5

    def test_window(self):
        ts = TimeSeries(np.arange(5.0), {"x": np.arange(5.0)})
        assert time_average(ts, 2.0)["x"] == 3.0

    def test_empty_window(self):
        with pytest.raises(ValueError):
            time_average(TimeSeries([0.0, 1.0], {"x": [1, 2]}), 5.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeSeries([1.0, 0.0], {"x": [1, 2]})
        with pytest.raises(ValueError):
            TimeSeries([0.0, 1.0], {"x": [1, 2, 3]})


class TestVolumeLaw:
    def test_exact_line(self):
        fit = volume_law_fit([1, 2, 3, 4], [0.5, 1.1, 1.7, 2.3])
        assert fit.slope == pytest.approx(0.6) and fit.intercept == pytest.approx(-0.1)
        assert fit.residual_norm < 1e-12

    def test_page_slope(self):
        # the l = 5, 6 points bend below the line, so the fit sits under ln 2
        fit = volume_law_fit(range(1, 7), [page_value(l, 12) for l in range(1, 7)])
        assert fit.slope == pytest.approx(0.610572, abs=1e-6)
        assert abs(fit.slope - math.log(2)) / math.log(2) < 0.15

    def test_degenerate(self):
        with pytest.raises(ValueError):
            volume_law_fit([2, 2], [1.0, 1.1])
        with pytest.raises(ValueError):
            volume_law_fit([1], [1.0])
