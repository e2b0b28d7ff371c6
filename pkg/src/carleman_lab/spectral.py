"""Discrete Fourier energy spectra and cascade comparisons.

Non-periodic fields are odd-extended before transforming. A Dirichlet field
(u_1..u_N) with zero traces becomes the 2(N+1)-periodic signal
(0, u_1..u_N, 0, -u_N..-u_1), so the boundaries add no artificial jump.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid_ops import BCKind, GridSpec

DEFAULT_DEALIAS = 2.0 / 3.0


class SpectrumError(ValueError):
    """Spectra cannot be compared or computed as requested."""


def dft_field(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modes û(κ) = (1/N) Σ_j u_j e^{-2πiκj/N} for κ = -N/2 .. N/2-1 (ascending)."""
    u = np.asarray(u)
    N = u.shape[-1]
    kappa = np.fft.fftshift(np.fft.fftfreq(N, 1.0 / N)).astype(int)
    return kappa, np.fft.fftshift(np.fft.fft(u) / N, axes=-1)


def idft_field(modes: np.ndarray) -> np.ndarray:
    """Inverse of ``dft_field`` (modes in ascending κ order)."""
    modes = np.asarray(modes)
    return np.fft.ifft(np.fft.ifftshift(modes, axes=-1) * modes.shape[-1])


def odd_extension(u: np.ndarray, kind: BCKind) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if kind is BCKind.PERIODIC:
        return u
    if kind is BCKind.DIRICHLET:
        return np.concatenate([[0.0], u, [0.0], -u[::-1]])
    return np.concatenate([u, -u[::-1]])


@dataclass(frozen=True)
class SpectrumSeries:
    """E(κ) for κ = 0 .. M/2 of an M-sample periodic signal."""

    kappa: np.ndarray
    energy: np.ndarray
    norm_total: float
    mean_square: float
    period: float
    grid: GridSpec | None = None

    @property
    def kappa_nyquist(self) -> int:
        return int(self.kappa[-1])

    def physical_wavenumber(self) -> np.ndarray:
        return 2.0 * np.pi * self.kappa / self.period


def energy_spectrum(
    u: np.ndarray, grid: GridSpec | None = None, kind: BCKind | None = None
) -> SpectrumSeries:
    """Modal energy E(0) = |û_0|², E(κ) = |û_κ|² + |û_{-κ}|².

    The boundary kind comes from ``grid`` (axis 0) unless given; without
    either the field is taken as periodic with unit spacing.
    """
    if kind is None:
        kind = grid.bc[0].kind if grid is not None else BCKind.PERIODIC
    kind = BCKind(kind)
    signal = odd_extension(u, kind)
    M = signal.size
    coeffs = np.fft.fft(signal) / M
    power = np.abs(coeffs) ** 2
    half = M // 2
    energy = np.empty(half + 1)
    energy[0] = power[0]
    energy[1:half] = power[1:half] + power[M - half + 1 :][::-1][: half - 1]
    # for even M the Nyquist mode has no partner
    energy[half] = power[half] if M % 2 == 0 else power[half] + power[half + 1]
    dx = grid.dx if grid is not None else 1.0
    return SpectrumSeries(
        kappa=np.arange(half + 1),
        energy=energy,
        norm_total=float(energy.sum()),
        mean_square=float(np.mean(signal**2)),
        period=M * dx,
        grid=grid,
    )


def transform_length(grid: GridSpec) -> int:
    kind = grid.bc[0].kind
    if kind is BCKind.PERIODIC:
        return grid.N
    if kind is BCKind.DIRICHLET:
        return 2 * (grid.N + 1)
    return 2 * grid.N


def kappa_bounds(grid: GridSpec | int, dealias_fraction: float = DEFAULT_DEALIAS) -> tuple[int, int]:
    """(κ_min, κ_max) in mode units with κ_max = floor(fraction · κ_nyquist).

    An integer argument is treated as the length of a periodic signal.
    """
    if not 0 < dealias_fraction <= 1:
        raise SpectrumError(f"dealias fraction must be in (0, 1], got {dealias_fraction}")
    M = grid if isinstance(grid, (int, np.integer)) else transform_length(grid)
    nyq = M // 2
    return 1, int(math.floor(dealias_fraction * nyq + 1e-12))


def physical_wavenumber(kappa, grid: GridSpec) -> np.ndarray:
    return 2.0 * np.pi * np.asarray(kappa, dtype=float) / grid.period(0)


def octave_bands(k_lo: int, k_hi: int) -> list[tuple[str, int, int]]:
    bands, lo = [], k_lo
    while lo <= k_hi:
        hi = min(2 * lo - 1, k_hi)
        bands.append((f"{lo}-{hi}", lo, hi))
        lo = 2 * lo
    return bands


@dataclass(frozen=True)
class BandDeviation:
    series_id: int
    band: str
    deviation: float
    flag: bool


@dataclass(frozen=True)
class CascadeComparison:
    rows: tuple[BandDeviation, ...]
    common_band: tuple[int, int]
    reference_index: int
    threshold: float

    def deviation(self, series_id: int, band: str) -> float:
        for r in self.rows:
            if r.series_id == series_id and r.band == band:
                return r.deviation
        raise KeyError((series_id, band))

    def under_resolved(self, series_id: int) -> bool:
        return self.deviation(series_id, "top_third") > self.threshold


def _band_deviation(E: np.ndarray, E_ref: np.ndarray, lo: int, hi: int) -> float:
    ref = E_ref[lo : hi + 1]
    denom = ref.sum()
    diff = np.abs(E[lo : hi + 1] - ref).sum()
    # bands holding only round-off energy of the reference carry no information
    noise = 64 * np.finfo(float).eps * E_ref.sum()
    if denom <= noise:
        return 0.0 if diff <= noise else math.inf
    return float(diff / denom)


def cascade_compare(
    spectra: Sequence[SpectrumSeries],
    reference_index: int | None = None,
    dealias_fraction: float = DEFAULT_DEALIAS,
    threshold: float = 0.5,
) -> CascadeComparison:
    """Energy-weighted relative deviation Σ|E - E_ref| / Σ E_ref per band.

    Bands are octaves of the common resolved range, the whole range ("all")
    and its upper third ("top_third"). A series is flagged when its top-third
    deviation exceeds ``threshold``.
    """
    if len(spectra) < 2:
        raise SpectrumError("need at least two spectra")
    sizes = [s.kappa_nyquist for s in spectra]
    if reference_index is None:
        reference_index = int(np.argmax(sizes))
    if sizes[reference_index] != max(sizes):
        raise SpectrumError("reference must be the finest spectrum")
    periods = np.array([s.period for s in spectra])
    if np.any(np.abs(periods - periods[0]) > 1e-9 * abs(periods[0])):
        raise SpectrumError(f"spectra come from different domains: periods {periods.tolist()}")
    k_hi = min(kappa_bounds(2 * s.kappa_nyquist, dealias_fraction)[1] for s in spectra)
    top_lo = max(1, int(math.floor(2 * k_hi / 3)) + 1)
    bands = octave_bands(1, k_hi) + [("all", 1, k_hi), ("top_third", top_lo, k_hi)]
    ref = spectra[reference_index].energy
    rows = []
    for i, s in enumerate(spectra):
        if i == reference_index:
            continue
        for name, lo, hi in bands:
            dev = _band_deviation(s.energy, ref, lo, hi)
            rows.append(BandDeviation(i, name, dev, dev > threshold))
    return CascadeComparison(tuple(rows), (1, k_hi), reference_index, threshold)


def loglog_slope(series: SpectrumSeries, k_lo: int, k_hi: int, step: int = 1) -> float:
    """Least-squares slope of log E against log κ over κ in [k_lo, k_hi]."""
    k = np.arange(k_lo, k_hi + 1, step)
    E = series.energy[k]
    keep = E > 0
    return float(np.polyfit(np.log(k[keep]), np.log(E[keep]), 1)[0])
