import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from carleman_lab.grid_ops import BCKind, dirichlet_grid, make_grid
from carleman_lab.reference import ShockProfile
from carleman_lab.spectral import (
    SpectrumError,
    cascade_compare,
    dft_field,
    energy_spectrum,
    idft_field,
    kappa_bounds,
    loglog_slope,
    octave_bands,
    odd_extension,
    transform_length,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def dft_oracle(u):
    N = len(u)
    kappa = np.arange(-(N // 2), N - N // 2)
    j = np.arange(N)
    return kappa, np.array([np.sum(u * np.exp(-2j * np.pi * k * j / N)) / N for k in kappa])


class TestDFT:
    @pytest.mark.parametrize("N", [4, 7, 16, 33])
    def test_matches_direct_sum(self, N):
        u = np.random.default_rng(N).standard_normal(N)
        k, m = dft_field(u)
        k_ref, m_ref = dft_oracle(u)
        np.testing.assert_array_equal(k, k_ref)
        np.testing.assert_allclose(m, m_ref, atol=1e-12)

    def test_single_mode(self):
        N = 8
        u = np.cos(2 * np.pi * 3 * np.arange(N) / N)
        k, m = dft_field(u)
        np.testing.assert_allclose(np.abs(m[k == 3]), 0.5)
        np.testing.assert_allclose(np.abs(m[k == -3]), 0.5)

    @given(u=arrays(float, st.integers(2, 64), elements=finite))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip(self, u):
        np.testing.assert_allclose(idft_field(dft_field(u)[1]).real, u, atol=1e-10)


class TestEnergySpectrum:
    @given(u=arrays(float, st.integers(2, 64), elements=finite))
    @settings(max_examples=100, deadline=None)
    def test_parseval(self, u):
        s = energy_spectrum(u)
        assert s.norm_total == pytest.approx(s.mean_square, rel=1e-10, abs=1e-12)

    @given(u=arrays(float, 32, elements=finite), shift=st.integers(0, 31))
    @settings(max_examples=50, deadline=None)
    def test_shift_invariant(self, u, shift):
        np.testing.assert_allclose(energy_spectrum(np.roll(u, shift)).energy, energy_spectrum(u).energy, atol=1e-9)

    def test_sine_energy(self):
        M = 32
        s = energy_spectrum(np.sin(2 * np.pi * 5 * np.arange(M) / M))
        assert s.energy[5] == pytest.approx(0.5)
        assert np.delete(s.energy, 5).max() < 1e-28

    def test_nyquist_mode(self):
        s = energy_spectrum(np.array([1.0, -1.0, 1.0, -1.0]))
        np.testing.assert_allclose(s.energy, [0, 0, 1.0], atol=1e-15)

    def test_dirichlet_sine_lands_on_one_mode(self):
        N = 15
        g = dirichlet_grid(1, N, 0.0, 1.0)
        u = np.sin(np.pi * 3 * g.nodes())
        s = energy_spectrum(u, g)
        assert s.kappa_nyquist == N + 1
        assert np.argmax(s.energy) == 3
        assert s.energy[3] / s.norm_total == pytest.approx(1.0, abs=1e-12)

    def test_odd_extension_layouts(self):
        u = np.array([1.0, 2.0])
        np.testing.assert_array_equal(odd_extension(u, BCKind.DIRICHLET), [0, 1, 2, 0, -2, -1])
        np.testing.assert_array_equal(odd_extension(u, BCKind.OPEN), [1, 2, -2, -1])
        np.testing.assert_array_equal(odd_extension(u, BCKind.PERIODIC), u)

    def test_period_and_wavenumber(self):
        g = make_grid(1, 16, 1.5, ["periodic"])
        s = energy_spectrum(np.ones(16), g)
        assert s.period == pytest.approx(16 * g.dx)
        assert s.physical_wavenumber()[1] == pytest.approx(2 * np.pi / s.period)


class TestKappaBounds:
    def test_periodic_64(self):
        assert kappa_bounds(64, 1.0) == (1, 32)
        assert kappa_bounds(64) == (1, 21)

    def test_dirichlet_counts_extension(self):
        g = dirichlet_grid(1, 31, 0.0, 1.0)
        assert transform_length(g) == 64
        assert kappa_bounds(g) == (1, 21)

    def test_open(self):
        assert kappa_bounds(make_grid(1, 16, 1.0, ["open"]), 0.5) == (1, 8)

    @pytest.mark.parametrize("frac", [0.0, 1.5, -0.1])
    def test_bad_fraction(self, frac):
        with pytest.raises(SpectrumError):
            kappa_bounds(64, frac)


class TestOctaves:
    def test_bands(self):
        assert octave_bands(1, 21) == [("1-1", 1, 1), ("2-3", 2, 3), ("4-7", 4, 7), ("8-15", 8, 15), ("16-21", 16, 21)]


class TestCascade:
    def spectra(self):
        out = []
        for N in (15, 31, 63):
            g = dirichlet_grid(1, N, 0.0, 1.0)
            x = g.nodes()
            out.append(energy_spectrum(np.sin(np.pi * x) + 0.1 * np.sin(5 * np.pi * x), g))
        return out

    def test_identical_series_zero_deviation(self):
        s = self.spectra()[2]
        c = cascade_compare([s, s])
        assert all(r.deviation == 0.0 and not r.flag for r in c.rows)

    def test_reference_defaults_to_finest(self):
        c = cascade_compare(self.spectra())
        assert c.reference_index == 2
        assert c.common_band == (1, 10)
        assert {r.series_id for r in c.rows} == {0, 1}

    def test_resolved_modes_agree(self):
        c = cascade_compare(self.spectra())
        # both modes are exact discrete sines, so the coarse spectra match the fine one
        assert c.deviation(0, "all") < 1e-12
        assert not c.under_resolved(0)

    def test_single_band_relative_deviation(self):
        a = self.spectra()[2]
        b = energy_spectrum(np.sqrt(2) * np.sin(np.pi * dirichlet_grid(1, 63, 0.0, 1.0).nodes()), a.grid)
        assert cascade_compare([b, a], reference_index=1).deviation(0, "1-1") == pytest.approx(
            abs(b.energy[1] - a.energy[1]) / a.energy[1]
        )

    def test_flags_missing_top_band(self):
        fine = self.spectra()[2]
        g = dirichlet_grid(1, 15, 0.0, 1.0)
        coarse = energy_spectrum(np.sin(np.pi * g.nodes()), g)
        rich = energy_spectrum(
            sum(np.sin(k * np.pi * fine.grid.nodes()) / k for k in range(1, 12)), fine.grid
        )
        c = cascade_compare([coarse, rich])
        assert c.under_resolved(0)

    def test_rejects_single(self):
        with pytest.raises(SpectrumError):
            cascade_compare(self.spectra()[:1])

    def test_rejects_coarse_reference(self):
        with pytest.raises(SpectrumError):
            cascade_compare(self.spectra(), reference_index=0)

    def test_rejects_mixed_domains(self):
        s = self.spectra()
        g = dirichlet_grid(1, 31, 0.0, 2.0)
        other = energy_spectrum(np.sin(np.pi * g.nodes()), g)
        with pytest.raises(SpectrumError):
            cascade_compare([s[2], other])


class TestSlope:
    def test_power_law(self):
        M = 256
        k = np.arange(1, M // 2)
        x = np.arange(M) / M
        u = sum(np.sin(2 * np.pi * kk * x) * kk**-1.5 for kk in k)
        s = energy_spectrum(u)
        assert loglog_slope(s, 2, 40) == pytest.approx(-3.0, abs=1e-9)

    def test_steady_shock_minus_two(self):
        g = dirichlet_grid(1, 4096, -5.0, 5.0, 1.0, -1.0)
        u = ShockProfile(1.0, -1.0, 0.05)(g.nodes())
        s = energy_spectrum(u, g)
        assert loglog_slope(s, 2, 10, 4) == pytest.approx(-2.0, abs=0.05)
