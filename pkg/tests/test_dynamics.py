import math

import numpy as np
import pytest

from fluxlattice import (
    PI,
    ConfigError,
    EffectiveModelKind,
    PopulationTrace,
    StateVector,
    antisymmetric_detunings,
    build_lattice,
    caged_sites,
    effective_model,
    evolve_lattice,
    evolve_unitary,
    hamiltonian_single_excitation,
    pm_basis_transform,
    pm_labels,
    pm_transform_matrix,
    verify_equivalence,
)
from fluxlattice.lattice import SiteId, site_labels

SQRT2 = math.sqrt(2.0)
TIMES = np.linspace(0.0, 4 * PI, 201)


def lattice_with_delta(l, flux, delta):
    return build_lattice(l, [flux] * l, antisymmetric_detunings(l, delta))


class TestUnitaryEvolution:
    def test_zero_flux_plaquette_closed_form(self):
        trace = evolve_lattice(build_lattice(1, [0]), "A,1", TIMES)
        t = TIMES
        exact = np.stack(
            [np.cos(t) ** 4, np.sin(2 * t) ** 2 / 4, np.sin(2 * t) ** 2 / 4, np.sin(t) ** 4],
            axis=1,
        )
        assert np.abs(trace.populations - exact).max() < 1e-12

    def test_pi_flux_plaquette_closed_form(self):
        trace = evolve_lattice(build_lattice(1, [PI]), "A,1", TIMES)
        t = TIMES
        exact = np.stack(
            [
                np.cos(SQRT2 * t) ** 2,
                np.sin(SQRT2 * t) ** 2 / 2,
                np.sin(SQRT2 * t) ** 2 / 2,
                np.zeros_like(t),
            ],
            axis=1,
        )
        assert np.abs(trace.populations - exact).max() < 1e-12

    def test_time_zero_returns_initial_populations(self):
        lat = build_lattice(2, [PI, PI])
        psi = StateVector.from_site(lat, "up,2")
        trace = evolve_unitary(hamiltonian_single_excitation(lat), psi, [0.0])
        assert np.abs(trace.populations[0] - psi.populations()).max() < 1e-15

    def test_norm_conserved(self):
        trace = evolve_lattice(lattice_with_delta(2, PI, SQRT2), "A,1", TIMES)
        assert np.abs(trace.populations.sum(axis=1) - 1.0).max() < 1e-9

    def test_energy_conserved(self):
        lat = lattice_with_delta(2, 0.0, 0.3)
        h = hamiltonian_single_excitation(lat)
        from fluxlattice.dynamics import evolve_amplitudes

        states = evolve_amplitudes(h, StateVector.from_site(lat, "A,2"), TIMES)
        energy = np.real(np.einsum("ti,ij,tj->t", states.conj(), h.matrix, states))
        assert np.abs(energy - energy[0]).max() < 1e-9 * max(1.0, abs(energy[0]))

    def test_dimension_mismatch(self):
        lat = build_lattice(1, [0])
        with pytest.raises(ConfigError):
            evolve_unitary(hamiltonian_single_excitation(lat), np.array([1.0, 0, 0]), [0.0])

    def test_times_must_be_sorted(self):
        lat = build_lattice(1, [0])
        psi = StateVector.from_site(lat, "A,1")
        with pytest.raises(ConfigError):
            evolve_unitary(hamiltonian_single_excitation(lat), psi, [1.0, 0.5])


class TestStateAndTrace:
    def test_state_norm_enforced(self):
        with pytest.raises(ConfigError):
            StateVector(np.array([1.0, 0.5]))

    def test_trace_row_sums_enforced(self):
        with pytest.raises(ConfigError):
            PopulationTrace(np.array([0.0]), np.array([[0.7, 0.7]]))

    def test_trace_csv_roundtrip(self, tmp_path):
        trace = evolve_lattice(build_lattice(1, [PI]), "A,1", np.linspace(0, 1, 5))
        path = tmp_path / "t.csv"
        trace.write_csv(path)
        header, *rows = path.read_text().strip().splitlines()
        assert header == "Jt,n_A1,n_up1,n_dn1,n_A2"
        assert len(rows) == 5
        parsed = PopulationTrace.from_json_dict(trace.to_json_dict())
        assert np.allclose(parsed.populations, trace.populations)


class TestBellBasis:
    def test_arm_site_maps_to_bell_pair(self):
        lat = build_lattice(1, [0])
        psi = pm_basis_transform(StateVector.from_site(lat, "up,1"))
        expected = np.zeros(4)
        expected[1] = expected[2] = 1 / SQRT2
        assert np.allclose(psi.amplitudes, expected, atol=1e-15)

    def test_involution(self):
        rng = np.random.default_rng(3)
        vec = rng.normal(size=7) + 1j * rng.normal(size=7)
        vec /= np.linalg.norm(vec)
        twice = pm_basis_transform(pm_basis_transform(vec))
        assert np.abs(twice - vec).max() < 1e-12

    def test_zero_flux_transform_decouples_minus_states(self):
        h = hamiltonian_single_excitation(build_lattice(2, [0, 0]))
        hp = pm_basis_transform(h).matrix
        labels = pm_labels(2)
        for j, label in enumerate(labels):
            if label.startswith("-"):
                assert np.abs(hp[j]).max() < 1e-12
                assert np.abs(hp[:, j]).max() < 1e-12

    def test_pi_flux_transform_is_block_diagonal(self):
        h = hamiltonian_single_excitation(build_lattice(2, [PI, PI]))
        hp = pm_basis_transform(h).matrix
        labels = pm_labels(2)
        blocks = [("A,1", "+,1"), ("-,1", "A,2", "+,2"), ("-,2", "A,3")]
        block_of = {lbl: i for i, blk in enumerate(blocks) for lbl in blk}
        for i, a in enumerate(labels):
            for j, b in enumerate(labels):
                if block_of[a] != block_of[b]:
                    assert abs(hp[i, j]) < 1e-12

    def test_bad_dimension(self):
        with pytest.raises(ConfigError):
            pm_transform_matrix(5)


class TestEffectiveModel:
    def test_pi_with_sqrt2_detuning_is_homogeneous_chain(self):
        model = effective_model(lattice_with_delta(2, PI, SQRT2), SQRT2)
        assert model.kind is EffectiveModelKind.CHAIN
        assert len(model.sites) == 7
        assert all(abs(abs(s) - SQRT2) < 1e-12 for _, _, s in model.couplings)
        (component,) = model.components()
        assert component == frozenset(model.sites)

    def test_pi_without_detuning_gives_blocks(self):
        model = effective_model(build_lattice(2, [PI, PI]), 0.0)
        assert model.kind is EffectiveModelKind.BLOCKS
        parts = {tuple(sorted(c)) for c in model.components()}
        assert parts == {("+,1", "A,1"), ("+,2", "-,1", "A,2"), ("-,2", "A,3")}

    def test_pi_with_general_detuning_is_trimer(self):
        delta = 2 * SQRT2
        model = effective_model(lattice_with_delta(2, PI, delta), delta)
        assert model.kind is EffectiveModelKind.TRIMER
        inter = [s for a, b, s in model.couplings if {a[0], b[0]} == {"+", "-"}]
        assert all(abs(s - delta) < 1e-12 for s in inter)

    def test_zero_flux_is_chain_with_dangling_minus(self):
        model = effective_model(lattice_with_delta(2, 0.0, 0.4), 0.4)
        assert model.kind is EffectiveModelKind.CHAIN
        # Minus states hang off the chain through the detuning coupling only.
        minus_partners = {
            (a if b.startswith("-") else b)
            for a, b, _ in model.couplings
            if a.startswith("-") or b.startswith("-")
        }
        assert minus_partners == {"+,1", "+,2"}

    def test_mixed_flux_rejected(self):
        with pytest.raises(ConfigError):
            effective_model(build_lattice(2, [0, PI]), 0.0)

    def test_wrong_detuning_pattern_rejected(self):
        lat = build_lattice(1, [PI], {"up,1": 0.5})
        with pytest.raises(ConfigError):
            effective_model(lat, 0.5)


class TestEquivalence:
    @pytest.mark.parametrize("flux,delta", [(0.0, 0.0), (PI, 0.0), (PI, SQRT2)])
    def test_full_vs_effective(self, flux, delta):
        lat = lattice_with_delta(2, flux, delta)
        for site in lat.sites:
            dev = verify_equivalence(lat, delta, StateVector.from_site(lat, site), TIMES)
            assert dev < 1e-8, (flux, delta, site.label, dev)

    def test_time_zero_deviation_vanishes(self):
        lat = build_lattice(2, [0, 0])
        dev = verify_equivalence(lat, 0.0, StateVector.from_site(lat, "A,2"), [0.0])
        assert dev < 1e-15


class TestCagingAndFlatBand:
    def test_caged_sites_from_central_spine(self):
        allowed = caged_sites(2, "A,2")
        assert sorted(s.label for s in allowed) == ["A,2", "dn,1", "dn,2", "up,1", "up,2"]

    def test_populations_confined_to_cage(self):
        lat = build_lattice(3, [PI] * 3)
        trace = evolve_lattice(lat, "A,2", TIMES)
        allowed = {s.label for s in caged_sites(3, "A,2")}
        for label in site_labels(3):
            if label not in allowed:
                assert trace.column(label.replace(",", ",")).max() < 1e-9

    def test_edge_sites_stay_dark(self):
        trace = evolve_lattice(build_lattice(2, [PI, PI]), "A,2", TIMES)
        assert trace.column("A,1").max() < 1e-9
        assert trace.column("A,3").max() < 1e-9

    def test_flat_band_state_is_stationary(self):
        lat = build_lattice(2, [0, 0])
        amp = np.zeros(7, dtype=complex)
        amp[lat.site_index("up,1")] = 1 / SQRT2
        amp[lat.site_index("dn,1")] = -1 / SQRT2
        trace = evolve_unitary(hamiltonian_single_excitation(lat), StateVector(amp), TIMES)
        assert np.abs(trace.populations - trace.populations[0]).max() < 1e-9

    def test_bulk_block_revival(self):
        lat = build_lattice(2, [PI, PI])
        trace = evolve_lattice(lat, "A,2", [0.0, PI])
        assert np.abs(trace.populations[1] - trace.populations[0]).max() < 1e-8
