import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxlattice import (
    PI,
    ConfigError,
    DensityMatrix,
    DephasingRates,
    NumericalError,
    StateVector,
    build_lattice,
    evolve_unitary,
    fidelity,
    hamiltonian_single_excitation,
    lindblad_evolve,
    with_vacuum,
)

TIMES = np.linspace(0.0, 4 * PI, 65)


class TestDensityMatrix:
    def test_validation(self):
        with pytest.raises(ConfigError):
            DensityMatrix(np.diag([0.6, 0.6]))  # trace 1.2
        with pytest.raises(ConfigError):
            DensityMatrix(np.array([[0.5, 0.9], [0.9, 0.5]]))  # negative eigenvalue
        with pytest.raises(ConfigError):
            DensityMatrix(np.array([[0.5, 0.1], [0.3, 0.5]]))  # not Hermitian

    def test_single_excitation_builder(self):
        lat = build_lattice(1, [0])
        rho = DensityMatrix.single_excitation(lat, "A,2")
        assert rho.dim == 5
        assert rho.matrix[4, 4] == 1.0
        assert rho.site_populations()[3] == 1.0


class TestDephasingRates:
    def test_nonnegative(self):
        with pytest.raises(ConfigError):
            DephasingRates(np.array([0.1, -0.2]))

    def test_from_map(self):
        lat = build_lattice(1, [0])
        rates = DephasingRates.from_map(lat, {"up,1": 0.3}, default=0.1)
        assert rates.values.tolist() == [0.1, 0.3, 0.1, 0.1]


class TestLindbladEvolution:
    def test_zero_rates_match_unitary(self):
        lat = build_lattice(2, [PI, PI])
        h = hamiltonian_single_excitation(lat)
        result = lindblad_evolve(
            with_vacuum(h),
            DephasingRates.uniform(7, 0.0),
            DensityMatrix.single_excitation(lat, "A,2"),
            TIMES,
        )
        exact = evolve_unitary(h, StateVector.from_site(lat, "A,2"), TIMES)
        assert np.abs(result.trace.populations - exact.populations).max() < 1e-7

    def test_pure_dephasing_analytic_decay(self):
        gamma = 0.8
        rho0 = DensityMatrix.from_pure(np.array([1.0, 1.0]) / math.sqrt(2))
        times = np.linspace(0.0, 5.0, 21)
        result = lindblad_evolve(np.zeros((2, 2)), [gamma], rho0, times, keep_states=True)
        for t, dm in zip(times, result.states):
            assert abs(dm.matrix[0, 1] - 0.5 * math.exp(-gamma * t / 2)) < 1e-8
            assert abs(dm.matrix[0, 0] - 0.5) < 1e-10
        assert np.all(np.diff(result.coherence_norms) <= 1e-12)

    def test_trace_and_positivity(self):
        lat = build_lattice(2, [PI, PI])
        result = lindblad_evolve(
            with_vacuum(hamiltonian_single_excitation(lat)),
            DephasingRates.uniform(7, 0.01),
            DensityMatrix.single_excitation(lat, "A,2"),
            TIMES,
            keep_states=True,
        )
        for dm in result.states:
            assert abs(dm.matrix.trace().real - 1.0) < 1e-6
            assert np.linalg.eigvalsh(dm.matrix).min() > -1e-6

    def test_populations_frozen_when_hamiltonian_vanishes(self):
        rng = np.random.default_rng(11)
        vec = rng.normal(size=4) + 1j * rng.normal(size=4)
        rho0 = DensityMatrix.from_pure(vec / np.linalg.norm(vec))
        result = lindblad_evolve(
            np.zeros((4, 4)), [0.2, 0.5, 0.05], rho0, np.linspace(0, 3, 13), keep_states=True
        )
        pops = result.trace.populations
        assert np.abs(pops - pops[0]).max() < 1e-9
        mags = np.array([np.abs(dm.matrix) for dm in result.states])
        assert np.all(np.diff(mags, axis=0) <= 1e-12)

    def test_rk4_fourth_order(self):
        lat = build_lattice(1, [0])
        h = with_vacuum(hamiltonian_single_excitation(lat))
        rho0 = DensityMatrix.single_excitation(lat, "A,1")
        rates = DephasingRates.uniform(4, 0.1)

        def final_state(step):
            run = lindblad_evolve(h, rates, rho0, [2.0], max_step=step, keep_states=True)
            return run.states[-1].matrix

        reference = final_state(0.025)
        err_h = np.abs(final_state(0.2) - reference).max()
        err_h2 = np.abs(final_state(0.1) - reference).max()
        assert 14.0 < err_h / err_h2 < 18.0

    def test_trace_drift_raises(self):
        lat = build_lattice(1, [0], J=3.0)
        h = with_vacuum(hamiltonian_single_excitation(lat))
        rho0 = DensityMatrix.single_excitation(lat, "A,1")
        with pytest.raises(NumericalError, match="trace drifted"):
            lindblad_evolve(h, DephasingRates.uniform(4, 0.1), rho0, [50.0], max_step=1.1)

    def test_dimension_checks(self):
        lat = build_lattice(1, [0])
        rho0 = DensityMatrix.single_excitation(lat, "A,1")
        with pytest.raises(ConfigError):
            lindblad_evolve(np.zeros((4, 4)), [0.1] * 3, rho0, [1.0])
        with pytest.raises(ConfigError):
            lindblad_evolve(np.zeros((5, 5)), [0.1] * 3, rho0, [1.0])

    def test_coherence_column_in_csv(self, tmp_path):
        lat = build_lattice(1, [PI])
        run = lindblad_evolve(
            with_vacuum(hamiltonian_single_excitation(lat)),
            DephasingRates.uniform(4, 0.05),
            DensityMatrix.single_excitation(lat, "A,1"),
            np.linspace(0, 2, 9),
            site_labels=("A,1", "up,1", "dn,1", "A,2"),
        )
        path = tmp_path / "open.csv"
        run.trace.write_csv(path, {"coherence_norm": run.coherence_norms})
        header = path.read_text().splitlines()[0]
        assert header == "Jt,n_A1,n_up1,n_dn1,n_A2,coherence_norm"

    def test_extra_collapse_hook(self):
        # Relaxation |1><0| ... |0><1| empties the excited state.
        decay = np.zeros((2, 2))
        decay[0, 1] = math.sqrt(0.5)
        rho0 = DensityMatrix.from_pure([0.0, 1.0])
        run = lindblad_evolve(np.zeros((2, 2)), [0.0], rho0, [0.0, 4.0], extra_collapse=[decay])
        assert run.trace.populations[-1, 0] == pytest.approx(math.exp(-0.5 * 4.0), abs=1e-6)


class TestFidelity:
    def test_equal_distributions(self):
        n = np.array([0.25, 0.25, 0.5])
        assert fidelity(n, n) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_supports(self):
        assert fidelity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_half_overlap(self):
        assert fidelity([0.5, 0.5], [1.0, 0.0]) == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ConfigError):
            fidelity([-0.1, 1.1], [0.5, 0.5])

    def test_renormalizes_with_warning(self):
        with pytest.warns(UserWarning, match="renormalizing"):
            value = fidelity([0.5, 0.4995], [0.5, 0.5])
        assert value == pytest.approx(1.0, abs=1e-6)

    def test_rejects_badly_normalized(self):
        with pytest.raises(ConfigError):
            fidelity([0.5, 0.3], [0.5, 0.5])

    @given(
        st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8),
        st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=50, deadline=None)
    def test_bounds_and_permutation_equivariance(self, a, b, rand):
        size = min(len(a), len(b))
        n = np.array(a[:size]) / sum(a[:size])
        n_th = np.array(b[:size]) / sum(b[:size])
        value = fidelity(n, n_th)
        assert 0.0 <= value <= 1.0
        perm = list(range(size))
        rand.shuffle(perm)
        assert fidelity(n[perm], n_th[perm]) == pytest.approx(value, abs=1e-12)
