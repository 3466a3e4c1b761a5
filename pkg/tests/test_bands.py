import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxlattice import (
    PI,
    ConfigError,
    NumericalError,
    band_structure,
    build_lattice,
    effective_model,
    antisymmetric_detunings,
    hamiltonian_single_excitation,
    rhombic_bloch,
    rhombic_bloch_model,
    trimer_bloch,
    trimer_bloch_model,
    wilson_loop_phase,
    zak_phase,
)

SQRT2 = math.sqrt(2.0)


class TestRhombicBloch:
    def test_matrix_elements(self):
        k = 0.7
        h = rhombic_bloch(k, J=1.3, flux=PI)
        assert h[0, 1] == pytest.approx(-1.3 * (1 + np.exp(-1j * k)))
        assert h[0, 2] == pytest.approx(-1.3 * (1 - np.exp(-1j * k)))
        assert np.allclose(np.diag(h), 0.0)
        assert np.allclose(h, h.conj().T)

    @given(st.floats(-PI, PI))
    @settings(max_examples=40, deadline=None)
    def test_pi_flux_spectrum_flat(self, k):
        energies = np.linalg.eigvalsh(rhombic_bloch(k, 1.0, PI))
        assert np.allclose(energies, [-2.0, 0.0, 2.0], atol=1e-10)

    @given(st.floats(-PI, PI))
    @settings(max_examples=40, deadline=None)
    def test_zero_flux_has_zero_mode(self, k):
        energies = np.linalg.eigvalsh(rhombic_bloch(k, 1.0, 0.0))
        assert np.abs(energies).min() < 1e-10

    def test_zero_flux_band_touching_at_zone_edge(self):
        energies = np.linalg.eigvalsh(rhombic_bloch(PI, 1.0, 0.0))
        assert np.abs(energies).max() < 1e-10

    def test_invalid_flux(self):
        with pytest.raises(ConfigError):
            rhombic_bloch(0.0, 1.0, 0.5)

    def test_periodicity(self):
        model = rhombic_bloch_model(1.0, PI)
        assert np.abs(model(0.3) - model(0.3 + 2 * PI)).max() < 1e-12


class TestBandStructure:
    def test_pi_flux_flat_bands(self):
        bs = band_structure(rhombic_bloch_model(1.0, PI), 512)
        assert bs.bandwidths().max() < 1e-10
        assert np.allclose(bs.energies[0], [-2.0, 0.0, 2.0], atol=1e-10)

    def test_zero_flux_dispersion(self):
        bs = band_structure(rhombic_bloch_model(1.0, 0.0), 512)
        widths = bs.bandwidths()
        assert widths[1] < 1e-10
        at_zero = np.linalg.eigvalsh(rhombic_bloch(0.0, 1.0, 0.0))
        assert at_zero[0] == pytest.approx(-2 * SQRT2, abs=1e-10)
        assert at_zero[2] == pytest.approx(2 * SQRT2, abs=1e-10)
        assert bs.energies[:, 0].min() >= -2 * SQRT2 - 1e-10
        assert bs.energies[:, 2].max() <= 2 * SQRT2 + 1e-10

    def test_trimer_decoupled_cells_are_flat(self):
        bs = band_structure(trimer_bloch_model(1.0, 0.0), 128)
        assert bs.bandwidths().max() < 1e-12
        assert np.allclose(bs.energies[0], [-2.0, 0.0, 2.0], atol=1e-12)

    def test_trimer_uniform_chain_is_gapless(self):
        def min_gap(n_k):
            bs = band_structure(trimer_bloch_model(1.0, SQRT2), n_k)
            return (bs.energies[:, 1] - bs.energies[:, 0]).min()

        coarse, fine = min_gap(1024), min_gap(4096)
        assert coarse < 1e-2
        assert fine < coarse / 2

    def test_trimer_corner_matrix(self):
        h = trimer_bloch(0.0, 1.0, SQRT2)
        direct = np.array(
            [[0, -SQRT2, SQRT2], [-SQRT2, 0, -SQRT2], [SQRT2, -SQRT2, 0]], dtype=complex
        )
        assert np.allclose(h, direct)
        assert np.allclose(np.linalg.eigvalsh(h), np.linalg.eigvalsh(direct))

    def test_needs_three_points(self):
        with pytest.raises(ConfigError):
            band_structure(rhombic_bloch_model(), 2)


class TestZakPhase:
    @pytest.mark.parametrize("factor,expected", [(0.5, 0.0), (2.0, PI)])
    def test_quantized_values(self, factor, expected):
        result = zak_phase(trimer_bloch_model(1.0, factor * SQRT2), 0, 256)
        assert result.snapped == pytest.approx(expected)
        assert abs(result.raw - expected) < 0.05

    def test_gap_closure_raises(self):
        with pytest.raises(NumericalError, match="not gapped"):
            zak_phase(trimer_bloch_model(1.0, SQRT2), 0, 256)

    def test_quantization_across_transition(self):
        snapped = []
        for factor in (0.2, 0.5, 0.8, 1.2, 1.5, 2.0):
            result = zak_phase(trimer_bloch_model(1.0, factor * SQRT2), 0, 512)
            assert abs(result.raw - result.snapped) < 0.05
            snapped.append(result.snapped)
        assert snapped == [0.0, 0.0, 0.0, PI, PI, PI]

    def test_grid_convergence(self):
        for factor in (0.5, 1.5):
            z1 = zak_phase(trimer_bloch_model(1.0, factor * SQRT2), 0, 256).raw
            z2 = zak_phase(trimer_bloch_model(1.0, factor * SQRT2), 0, 512).raw
            assert abs(z1 - z2) < 1e-3

    def test_gauge_invariance(self):
        model = trimer_bloch_model(1.0, 2 * SQRT2)
        ks = -PI + 2 * PI * np.arange(128) / 128
        vectors = np.empty((128, 3), dtype=complex)
        for i, k in enumerate(ks):
            vectors[i] = np.linalg.eigh(model(k))[1][:, 0]
        base = wilson_loop_phase(vectors)
        rng = np.random.default_rng(5)
        phases = np.exp(1j * rng.uniform(0, 2 * PI, size=128))
        assert abs(wilson_loop_phase(vectors * phases[:, None]) - base) < 1e-8

    def test_band_index_and_grid_validation(self):
        model = trimer_bloch_model(1.0, 2 * SQRT2)
        with pytest.raises(ConfigError):
            zak_phase(model, 3, 256)
        with pytest.raises(ConfigError):
            zak_phase(model, 0, 32)


class TestRealSpaceConsistency:
    def test_open_lattice_spectrum_matches_flat_band_values(self):
        lat = build_lattice(10, [PI] * 10)
        energies = np.linalg.eigvalsh(hamiltonian_single_excitation(lat).matrix)
        allowed = np.array([-2.0, -SQRT2, 0.0, SQRT2, 2.0])
        distances = np.abs(energies[:, None] - allowed[None, :]).min(axis=1)
        assert distances.max() < 1e-9

    def test_trimer_ring_matches_bloch_spectrum(self):
        # 8-cell ring built from the real-space trimer couplings versus the
        # Bloch spectrum at the commensurate momenta.
        cells, delta = 8, 0.6 * SQRT2
        model = effective_model(
            build_lattice(cells, [PI] * cells, antisymmetric_detunings(cells, delta)), delta
        )
        index = {label: i for i, label in enumerate(model.sites)}
        dim = len(model.sites)
        h = np.zeros((dim, dim), dtype=complex)
        for a, b, s in model.couplings:
            h[index[a], index[b]] += s
            h[index[b], index[a]] += s
        # Close the chain into a ring: identify the two edge sites with the
        # missing bulk partners of a periodic cell pattern.
        h[index["A,1"], index[f"-,{cells}"]] += -SQRT2
        h[index[f"-,{cells}"], index["A,1"]] += -SQRT2
        h[index[f"A,{cells + 1}"], :] = 0
        h[:, index[f"A,{cells + 1}"]] = 0
        ring = np.delete(np.delete(h, index[f"A,{cells + 1}"], 0), index[f"A,{cells + 1}"], 1)
        real_space = np.sort(np.linalg.eigvalsh(ring))
        bloch = np.sort(
            np.concatenate(
                [
                    np.linalg.eigvalsh(trimer_bloch(2 * PI * m / cells, 1.0, delta))
                    for m in range(cells)
                ]
            )
        )
        assert np.allclose(real_space, bloch, atol=1e-9)
