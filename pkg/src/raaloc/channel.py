"""Forward channel matrices, the modified round-trip operator, and thermal noise.

The forward channel between an N-element transceiver and an M-element
backscatter array is the M x N matrix H.  For pure line of sight it is the
rank-one outer product of the two array responses scaled by the one-way
free-space amplitude; a clustered Rician surrogate adds NLOS components for
multipath studies.  The conjugating reflection turns the round trip into the
Hermitian PSD operator A = sqrt(P_T) * g * H^H H whose top eigenvector is the
optimum transmit beamformer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry, RfParams, array_response

BOLTZMANN = 1.380649e-23
"""Boltzmann constant in J/K."""

REFERENCE_TEMPERATURE = 290.0
"""Noise reference temperature in K."""


@dataclass(frozen=True)
class NoiseModel:
    """Thermal noise variances (W) at the transceiver and at the RAA."""

    sigma_w2: float    # transceiver, kappa*T0*F_trx*W
    sigma_eta2: float  # RAA, kappa*T0*F_raa*W

    def __post_init__(self):
        if self.sigma_w2 <= 0 or self.sigma_eta2 <= 0:
            raise ValueError("noise variances must be positive")


def noise_variances(rf: RfParams) -> NoiseModel:
    """Thermal noise power kappa*T0*F*W for both ends of the link."""
    kt = BOLTZMANN * REFERENCE_TEMPERATURE * rf.bandwidth
    return NoiseModel(sigma_w2=kt * rf.noise_figure_trx,
                      sigma_eta2=kt * rf.noise_figure_raa)


@dataclass(frozen=True)
class Path:
    """Single delay-free propagation path.

    ``gain`` is the per-element complex amplitude (applied to unnormalized
    steering vectors with unit-modulus entries).
    """

    gain: complex
    departure_angle: float  # at the transceiver, rad
    arrival_angle: float    # at the RAA, rad


@dataclass(frozen=True)
class PathSet:
    """Collection of paths with an LOS flag and a Rician K-factor (linear).

    When ``los`` is true the first path is the line-of-sight component.
    """

    paths: tuple[Path, ...]
    los: bool = True
    k_factor: float = math.inf

    def __post_init__(self):
        if len(self.paths) == 0:
            raise ValueError("PathSet needs at least one path")
        if not all(np.isfinite(p.gain) for p in self.paths):
            raise ValueError("path gains must be finite")
        if self.k_factor < 0:
            raise ValueError("K-factor must be >= 0")


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Forward channel H (raa elements x trx elements) in factored form.

    H = left @ diag(coeffs) @ right^H, one column pair per propagation path
    with unit-norm array responses in the columns and the per-path complex
    amplitudes in ``coeffs``.  The dense matrix is materialized lazily via
    ``h``; the factored form is what the simulator consumes, since it makes
    the round-trip operator and the reflected-noise statistics cheap.
    """

    left: np.ndarray    # (M, P) arrival responses
    coeffs: np.ndarray  # (P,) path amplitudes
    right: np.ndarray   # (N, P) departure responses
    distance: float = float("nan")
    departure_angle: float = float("nan")
    arrival_angle: float = float("nan")

    @property
    def shape(self):
        return self.left.shape[0], self.right.shape[0]

    @property
    def rank_bound(self) -> int:
        return self.coeffs.size

    @property
    def h(self) -> np.ndarray:
        """Dense M x N channel matrix."""
        cached = getattr(self, "_h", None)
        if cached is None:
            cached = (self.left * self.coeffs) @ self.right.conj().T
            object.__setattr__(self, "_h", cached)
        return cached


def los_channel(rf: RfParams, trx: ArrayGeometry, raa: ArrayGeometry,
                distance: float, departure_angle: float,
                arrival_angle: float) -> ChannelMatrix:
    """Free-space LOS channel H = sqrt(N*M*G_A*G_RAA) * (lambda/4 pi d) * u v^H.

    ``u`` is the RAA response at the arrival angle and ``v`` the transceiver
    response at the departure angle; the result has rank one with top
    singular value sqrt(N*M*G_A*G_RAA)*lambda/(4 pi d).  Far-field
    separation is assumed, not enforced.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    lam = rf.wavelength
    amp = math.sqrt(trx.size * raa.size * rf.element_gain_trx * rf.element_gain_raa)
    amp *= lam / (4.0 * np.pi * distance)
    u = np.conj(array_response(raa, arrival_angle, lam))
    v = array_response(trx, departure_angle, lam)
    return ChannelMatrix(left=u[:, None], coeffs=np.array([amp + 0j]),
                         right=v[:, None], distance=distance,
                         departure_angle=departure_angle, arrival_angle=arrival_angle)


def multipath_channel(rf: RfParams, trx: ArrayGeometry, raa: ArrayGeometry,
                      paths: PathSet) -> ChannelMatrix:
    """Clustered multipath channel, one factored term per path.

    H is rescaled so that its Frobenius power equals N*M times the sum of
    per-path powers exactly; cross terms between non-orthogonal paths
    therefore redistribute, never add, power.  A single LOS path with the
    free-space per-element gain reproduces ``los_channel``.
    """
    lam = rf.wavelength
    n, m = trx.size, raa.size
    gain_scale = math.sqrt(rf.element_gain_trx * rf.element_gain_raa)
    left = np.column_stack(
        [np.conj(array_response(raa, p.arrival_angle, lam)) for p in paths.paths])
    right = np.column_stack(
        [array_response(trx, p.departure_angle, lam) for p in paths.paths])
    coeffs = np.array([p.gain for p in paths.paths]) * gain_scale * math.sqrt(n * m)
    # Frobenius power from the Gram matrices, without materializing H.
    gu = left.conj().T @ left
    gv = right.conj().T @ right
    s = np.conj(coeffs)[:, None] * gu * coeffs[None, :]
    fro2 = float(np.real(np.sum(s * gv.T)))
    target = n * m * gain_scale ** 2 * sum(abs(p.gain) ** 2 for p in paths.paths)
    if fro2 > 0:
        coeffs = coeffs * math.sqrt(target / fro2)
    los = paths.paths[0] if paths.los else None
    return ChannelMatrix(
        left=left, coeffs=coeffs, right=right,
        departure_angle=los.departure_angle if los else float("nan"),
        arrival_angle=los.arrival_angle if los else float("nan"))


def round_trip_operator(h, tx_power: float, raa_gain: float) -> np.ndarray:
    """Modified round-trip operator A = sqrt(P_T) * g * H^H H (N x N, Hermitian PSD).

    Accepts a ChannelMatrix or a bare matrix.  The eigenvectors of A
    coincide with the right singular vectors of H; for a rank-one LOS
    channel the single nonzero eigenvalue is sqrt(P_T)*g*sigma_1**2.
    """
    scale = math.sqrt(tx_power) * raa_gain
    if isinstance(h, ChannelMatrix):
        c = h.coeffs
        s = np.conj(c)[:, None] * (h.left.conj().T @ h.left) * c[None, :]
        a = (h.right @ s) @ h.right.conj().T
        return scale * 0.5 * (a + a.conj().T)
    mat = np.asarray(h)
    return scale * (mat.conj().T @ mat)


def sample_cn(variance: float, n, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussians with the given total variance.

    Real and imaginary parts each carry variance/2.  ``n`` may be an int or
    a shape tuple.  Reproducible for a fixed generator state.
    """
    if variance < 0:
        raise ValueError("variance must be >= 0")
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


@dataclass(frozen=True)
class MultipathParams:
    """Knobs of the clustered Rician surrogate used for multipath runs.

    ``k_factor`` (linear) sets the LOS-to-total-NLOS power ratio; the NLOS
    power is split evenly over ``n_clusters`` clusters whose departure and
    arrival angles are drawn uniformly within +-``angle_spread``.
    """

    k_factor: float = 10.0 ** 1.3   # 13 dB
    n_clusters: int = 4
    angle_spread: float = math.radians(60.0)

    def __post_init__(self):
        if self.k_factor <= 0:
            raise ValueError("k_factor must be positive")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")


def draw_cluster_angles(rng: np.random.Generator,
                        params: MultipathParams) -> tuple[np.ndarray, np.ndarray]:
    """Departure/arrival angle pairs for the NLOS clusters of one link."""
    departures = rng.uniform(-params.angle_spread, params.angle_spread, params.n_clusters)
    arrivals = rng.uniform(-params.angle_spread, params.angle_spread, params.n_clusters)
    return departures, arrivals


def surrogate_pathset(rng: np.random.Generator, rf: RfParams, distance: float,
                      departure_angle: float, arrival_angle: float,
                      params: MultipathParams,
                      cluster_departures: np.ndarray,
                      cluster_arrivals: np.ndarray) -> PathSet:
    """One multipath realization: geometric LOS plus Rayleigh-faded clusters.

    The LOS per-element amplitude is lambda/(4 pi d); each cluster gain is a
    fresh CN draw with power |los|^2 / (K * n_clusters), so cluster fading
    varies per call while the cluster geometry stays fixed.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    los_amp = rf.wavelength / (4.0 * np.pi * distance)
    paths = [Path(gain=complex(los_amp), departure_angle=departure_angle,
                  arrival_angle=arrival_angle)]
    cluster_var = los_amp ** 2 / (params.k_factor * params.n_clusters)
    gains = sample_cn(cluster_var, params.n_clusters, rng)
    for g, dep, arr in zip(gains, cluster_departures, cluster_arrivals):
        paths.append(Path(gain=complex(g), departure_angle=float(dep),
                          arrival_angle=float(arr)))
    return PathSet(paths=tuple(paths), los=True, k_factor=params.k_factor)
