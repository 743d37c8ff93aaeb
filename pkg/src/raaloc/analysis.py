"""Closed-form SNR evolution, equilibrium, link budget, and tracking bounds.

Everything here is algebra on the eigen-spectrum of the round-trip operator;
no signal-level simulation.  The per-direction SNR recursion

    SNR_j[k] = SNR_j_max * (SNR_j[k-1] + 1) / (N + sum_i SNR_i[k-1])

describes how the iterative beamformer concentrates power, with
SNR_j[1] = SNR_j_max * |x_j[0]|^2 set by the initial beam.  Reflected node
noise is neglected here (it arrives attenuated by the return channel); the
signal-level simulator keeps it, which is one reason the two agree only to
within a fraction of a dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import noise_variances
from .geometry import RfParams


@dataclass(frozen=True, eq=False)
class SnrSpectrum:
    """Per-direction SNR maxima lambda_j^2 / sigma_w^2 for an N-element array.

    ``maxima`` may list only the leading nonzero directions; the remaining
    N - len(maxima) directions are implicitly zero.  Ordering must be
    non-increasing.
    """

    maxima: np.ndarray  # linear, descending
    n_elements: int

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.maxima, dtype=float))
        if m.size > self.n_elements:
            raise ValueError("more maxima than array directions")
        if np.any(m < 0):
            raise ValueError("SNR maxima must be >= 0")
        if np.any(np.diff(m) > 0):
            raise ValueError("maxima must be non-increasing")
        object.__setattr__(self, "maxima", m)

    @property
    def padded(self) -> np.ndarray:
        """Maxima padded with zeros to the full direction count."""
        out = np.zeros(self.n_elements)
        out[: self.maxima.size] = self.maxima
        return out


@dataclass(frozen=True, eq=False)
class SnrTrace:
    """Recursion output: per-direction SNRs and the decision SNR, k = 1..k_max."""

    snr: np.ndarray      # (k_max, N)
    snr_dec: np.ndarray  # (k_max,)

    @property
    def k_max(self) -> int:
        return self.snr.shape[0]

    def fractions(self) -> np.ndarray:
        """Per-direction power fractions |x_j[k]|^2 implied by the trace.

        |x_j[k]|^2 = (SNR_j[k] + 1) / (N + sum_i SNR_i[k]); each row sums
        to one exactly.
        """
        n = self.snr.shape[1]
        denom = n + self.snr.sum(axis=1, keepdims=True)
        return (self.snr + 1.0) / denom


def uniform_fractions(n: int) -> np.ndarray:
    """Expected power split of a random unit beamformer, |x_j[0]|^2 = 1/N."""
    return np.full(n, 1.0 / n)


def snr_recursion(spectrum: SnrSpectrum, initial_fractions: np.ndarray,
                  k_max: int) -> SnrTrace:
    """Iterate the per-direction SNR recursion for k = 1..k_max.

    ``initial_fractions`` are |x_j[0]|^2 over all N directions and must sum
    to one within 1e-9.  The decision SNR is

        SNR_dec[k] = ( sum_j SNR_j[k] / sqrt(SNR_j_max) )^2

    restricted to directions with a nonzero maximum.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    fractions = np.asarray(initial_fractions, dtype=float)
    n = spectrum.n_elements
    if fractions.shape != (n,):
        raise ValueError(f"need {n} initial fractions, got {fractions.shape}")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"initial fractions sum to {fractions.sum()}, expected 1")
    maxima = spectrum.padded
    snr = np.zeros((k_max, n))
    snr[0] = maxima * fractions
    for k in range(1, k_max):
        prev = snr[k - 1]
        snr[k] = maxima * (prev + 1.0) / (n + prev.sum())
    active = maxima > 0
    snr_dec = snr[:, active] / np.sqrt(maxima[active])
    snr_dec = snr_dec.sum(axis=1) ** 2
    return SnrTrace(snr=snr, snr_dec=snr_dec)


def equilibrium_snr(snr_max: float, n: int) -> float:
    """Positive fixed point of the rank-one recursion x = S(x+1)/(x+N).

    x = ((S - N) + sqrt((S - N)^2 + 4S)) / 2; approaches S for S/N >> 1 and
    S/N for S/N << 1.
    """
    if snr_max <= 0:
        raise ValueError("snr_max must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    d = snr_max - n
    return 0.5 * (d + math.sqrt(d * d + 4.0 * snr_max))


def max_and_bootstrap_snr(rf: RfParams, n: int, m: int,
                          distance: float) -> tuple[float, float]:
    """Paraxial LOS link budget: peak SNR and its random-init bootstrap value.

    SNR_max = P_T g^2 N^2 M^2 G_A^2 G_RAA^2 lambda^4 / (sigma_w^2 (4 pi d)^4)
    and SNR_boot = SNR_max / N.  The fourth-power distance law is the price
    of the two-way backscatter link; N and M enter squared, so the node-side
    aperture M is the cheaper lever (it does not dilute the bootstrap SNR).
    """
    if n < 1 or m < 1 or distance <= 0:
        raise ValueError("n, m must be >= 1 and distance positive")
    sigma_w2 = noise_variances(rf).sigma_w2
    lam = rf.wavelength
    snr_max = (rf.tx_power * rf.raa_gain ** 2 * n ** 2 * m ** 2
               * rf.element_gain_trx ** 2 * rf.element_gain_raa ** 2 * lam ** 4
               / (sigma_w2 * (4.0 * np.pi * distance) ** 4))
    return snr_max, snr_max / n


def correlation_coefficient(v1: np.ndarray, v2: np.ndarray) -> float:
    """Beam correlation rho = |<v1, v2>| of two unit-norm beamformers."""
    v1 = np.asarray(v1)
    v2 = np.asarray(v2)
    if v1.shape != v2.shape:
        raise ValueError("vectors must have equal length")
    for v in (v1, v2):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise ValueError("inputs must be unit norm")
    return float(abs(np.vdot(v1, v2)))


def approx_beam_correlation(n: int, angle: float) -> float:
    """Small-angle beam correlation of an N-element half-wavelength ULA.

    rho ~ sinc(N sin(angle) / 2) with sinc(x) = sin(pi x)/(pi x); accurate
    to a couple of percent inside the main lobe.
    """
    return float(np.sinc(n * np.sin(angle) / 2.0))


def tracking_benefit(rho: float, n: int) -> bool:
    """Whether reusing the previous beam beats a fresh random draw.

    Strict criterion rho > 1/N: the reused beam must retain more of the
    peak SNR than the 1/N a random beamformer captures on average.
    """
    if not 0.0 <= rho <= 1.0 + 1e-12:
        raise ValueError("rho must lie in [0, 1]")
    return rho > 1.0 / n


def max_tracking_speed(distance: float, n: int, tau: float) -> float:
    """Fastest transverse motion for which beam reuse still helps.

    v < 2 d sqrt(6 (N - 1)) / (pi tau N sqrt(N)), from the main-lobe Taylor
    expansion of the beam correlation with sin(phi) ~ v tau / d.  Larger
    arrays decorrelate faster, so the bound drops with N; the node-side
    element count never enters.
    """
    if distance <= 0 or tau <= 0:
        raise ValueError("distance and tau must be positive")
    if n < 2:
        raise ValueError("n must be >= 2")
    return 2.0 * distance * math.sqrt(6.0 * (n - 1)) / (math.pi * tau * n * math.sqrt(n))
