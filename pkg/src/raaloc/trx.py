"""MIMO transceiver engine: blind iterative beamforming and detection.

Each interrogation symbol the transceiver transmits its current beamformer,
collects the conjugated backscatter, and uses the normalized conjugate of the
received vector as the next beamformer.  In the noiseless data-free limit this
is exactly the power method on the round-trip operator, so the beam converges
to the strongest channel eigenvector without any channel estimation.  On
detection the beamformer is frozen, the angle of arrival is read off the DFT
peak of the received vector, and the node ID is demodulated over one code
period.  Searches for further nodes run in the orthogonal complement of the
beamformers already found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelMatrix, round_trip_operator, sample_cn
from .geometry import ArrayGeometry


@dataclass(frozen=True, eq=False)
class TrxConfig:
    """Detection thresholds and search settings.

    ``eta1`` (linear SNR) and ``eta2`` (linear power ratio) implement the
    two-part detection rule: received SNR above eta1 while the step-to-step
    growth has fallen below eta2.  ``initial_beamformer`` switches the init
    strategy from a random draw to reuse of a previous beam.
    """

    eta1: float
    eta2: float
    max_iterations: int = 30
    initial_beamformer: np.ndarray | None = None
    aoa_oversampling: int = 1

    def __post_init__(self):
        if self.eta1 <= 0:
            raise ValueError("eta1 must be positive")
        if self.eta2 <= 1:
            raise ValueError("eta2 must exceed 1")
        if self.max_iterations < 2:
            raise ValueError("max_iterations must be >= 2 (detection needs a predecessor)")
        if self.aoa_oversampling < 1:
            raise ValueError("aoa_oversampling must be >= 1")


@dataclass(frozen=True)
class IdMatch:
    """Best cyclic correlation over a codebook: (sequence index, lag, score)."""

    index: int
    lag: int
    score: float


@dataclass(frozen=True, eq=False)
class InterrogationResult:
    """Outcome of one interrogation run.

    ``beamformer`` is the frozen beamformer at detection, or the last search
    beamformer when no detection occurred.  ``snr_trace`` holds gamma[k] =
    ||y[k]||^2 / sigma_w^2 for every exchanged symbol, ID symbols included.
    """

    detected: bool
    detect_iteration: int | None
    beamformer: np.ndarray
    aoa: float | None
    snr_trace: np.ndarray
    symbols: np.ndarray | None = None
    matched_id: IdMatch | None = None
    max_basis_leakage: float | None = None


@dataclass(frozen=True, eq=False)
class DeflationBasis:
    """Orthonormal collection of previously detected beamformers."""

    matrix: np.ndarray  # (n, r), complex

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise ValueError("basis must be a 2-D matrix")
        object.__setattr__(self, "matrix", m)
        r = m.shape[1]
        if r and np.max(np.abs(m.conj().T @ m - np.eye(r))) > 1e-10:
            raise ValueError("basis columns must be orthonormal")

    @classmethod
    def empty(cls, n: int) -> "DeflationBasis":
        return cls(matrix=np.zeros((n, 0), dtype=complex))

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    def with_vector(self, v: np.ndarray) -> "DeflationBasis":
        """Basis extended by ``v`` orthonormalized against the current columns."""
        residual = np.asarray(v, dtype=complex)
        residual = residual - self.matrix @ (self.matrix.conj().T @ residual)
        norm = np.linalg.norm(residual)
        if norm < 1e-12:
            raise ValueError("vector lies in the span of the basis")
        return DeflationBasis(matrix=np.column_stack([self.matrix, residual / norm]))


def init_beamformer(n: int, rng: np.random.Generator,
                    previous: np.ndarray | None = None) -> np.ndarray:
    """Unit-norm starting beamformer: random CN draw or a renormalized reuse."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if previous is not None:
        prev = np.asarray(previous, dtype=complex)
        if prev.shape != (n,):
            raise ValueError(f"previous beamformer has length {prev.shape}, expected {n}")
        norm = np.linalg.norm(prev)
        if norm == 0:
            raise ValueError("previous beamformer must be nonzero")
        return prev / norm
    x = sample_cn(1.0, n, rng)
    return x / np.linalg.norm(x)


def step_update(y: np.ndarray) -> np.ndarray:
    """Next beamformer x = conj(y) / ||y||."""
    y = np.asarray(y)
    norm = np.linalg.norm(y)
    if norm == 0:
        raise ValueError("no received signal")
    return np.conj(y) / norm


def deflate(y: np.ndarray, basis: DeflationBasis) -> np.ndarray:
    """Beamformer update restricted to the orthogonal complement of ``basis``.

    x = (I - B B^H) conj(y), normalized.  With an empty basis this equals
    ``step_update``.
    """
    ystar = np.conj(np.asarray(y))
    b = basis.matrix
    residual = ystar - b @ (b.conj().T @ ystar)
    norm = np.linalg.norm(residual)
    if norm <= 1e-12 * np.linalg.norm(ystar):
        raise ValueError("no residual signal outside the deflation basis")
    return residual / norm


def detect(gamma_k: float, gamma_prev: float, config: TrxConfig) -> bool:
    """Two-part detection rule, both conditions strict.

    True iff gamma_k > eta1 and gamma_k / gamma_prev < eta2 (SNR high enough
    and no longer climbing significantly).
    """
    gamma_k = float(gamma_k)
    gamma_prev = float(gamma_prev)
    if not gamma_k > config.eta1:
        return False
    ratio = gamma_k / gamma_prev if gamma_prev > 0 else math.inf
    return ratio < config.eta2


def collapse_to_inplane(y: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Coherent sum of a planar response over the out-of-plane axis.

    The out-of-plane factor of a planar steering vector is constant across
    elements, so summing each in-plane row combines it coherently and
    returns an nx-length vector ready for the linear-array AoA estimator.
    """
    y = np.asarray(y)
    if y.size != geometry.size:
        raise ValueError("vector length does not match geometry")
    if geometry.is_linear:
        return y
    return y.reshape(geometry.nx, geometry.ny).sum(axis=1)


def estimate_aoa(y: np.ndarray, spacing: float | None = None,
                 wavelength: float | None = None, oversampling: int = 1) -> float:
    """Angle of arrival from the DFT peak of the received vector.

    Computes the (zero-padded) DFT of conj(y), maps the strongest bin through
    the centered-bin convention i' in [-floor(N'/2), ceil(N'/2)) with
    N' = len(y) * oversampling, and returns

        arcsin( (2 * i' / N') * lambda / (2 * spacing) ).

    With the default half-wavelength spacing the scale factor is one and an
    on-grid angle is recovered exactly.  Magnitude ties break toward the
    smaller |i'|.
    """
    y = np.asarray(y)
    n = y.size
    if n < 1:
        raise ValueError("empty vector")
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    scale = 1.0 if (spacing is None or wavelength is None) else wavelength / (2.0 * spacing)
    npad = n * oversampling
    q = np.fft.fft(np.conj(y), npad)
    iprime = np.rint(np.fft.fftfreq(npad) * npad).astype(int)
    sin_grid = scale * 2.0 * iprime / npad
    mags = np.abs(q)
    mags[np.abs(sin_grid) > 1.0] = -1.0  # unreachable directions (spacing < lambda/2)
    peak = np.max(mags)
    candidates = np.flatnonzero(mags == peak)
    best = min(candidates, key=lambda i: (abs(int(iprime[i])), int(iprime[i])))
    return float(np.arcsin(sin_grid[best]))


def demodulate(x_prev: np.ndarray, y: np.ndarray) -> complex:
    """Decision variable u = x_prev^H conj(y); noiseless it equals exp(-j*phi)."""
    return complex(np.vdot(x_prev, np.conj(y)))


def _phase_reference(symbols: np.ndarray) -> float:
    """Common carrier phase of an antipodal packet, estimated by squaring.

    Squaring strips the +-1 modulation; the halved angle leaves a residual
    pi ambiguity that the cyclic ID search resolves by polarity.
    """
    acc = np.sum(symbols ** 2)
    if acc == 0:
        return 0.0
    return 0.5 * float(np.angle(acc))


def correlate_id(symbols, codebook: list) -> IdMatch:
    """Cyclic ID search over a PN codebook.

    The complex symbols are phase-normalized, hard-decided to +-1, and
    circularly correlated against every codebook sequence at all lags and
    both polarities.  Returns the (index, lag) with the largest correlation
    magnitude; the signed score is normalized to [-1, 1], its sign carrying
    the unresolved packet polarity.
    """
    if not codebook:
        raise ValueError("empty codebook")
    k = len(codebook[0])
    if any(len(seq) != k for seq in codebook):
        raise ValueError("codebook sequences must share one length")
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.size < k:
        raise ValueError(f"need at least {k} symbols, got {symbols.size}")
    s = symbols[:k]
    hard = np.where(np.real(s * np.exp(-1j * _phase_reference(s))) >= 0, 1.0, -1.0)
    hard_fft = np.conj(np.fft.fft(hard))
    best: IdMatch | None = None
    for index, seq in enumerate(codebook):
        corr = np.fft.ifft(np.fft.fft(seq.symbols.astype(float)) * hard_fft).real
        lag = int(np.argmax(np.abs(corr)))
        score = float(corr[lag] / k)
        if best is None or abs(score) > abs(best.score):
            best = IdMatch(index=index, lag=lag, score=score)
    return best


def _gaussian_root(gram: np.ndarray) -> np.ndarray:
    """Matrix F with F F^H = gram, for drawing correlated complex Gaussians."""
    try:
        jitter = 1e-14 * max(float(np.trace(gram).real), 1.0)
        return np.linalg.cholesky(gram + jitter * np.eye(gram.shape[0]))
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(gram)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True, eq=False)
class BackscatterLink:
    """One retro-directive node as seen by the transceiver.

    ``a_matrix`` is the N x N modified round-trip operator driving the
    iteration.  The node's own receiver noise comes back attenuated through
    the return channel; for factored channels it is drawn exactly in the
    path subspace via ``noise_map`` (the M-element noise vector enters the
    received signal only through H^H, so the projection loses nothing).
    Operator-only links (abstract matrix experiments) carry no reflected
    noise.
    """

    a_matrix: np.ndarray
    noise_map: np.ndarray | None = None   # (N, P): maps CN(0, I_P) draws
    forward: np.ndarray | None = None     # dense fallback (M, N)
    raa_gain: float = 1.0
    id_phases: np.ndarray | None = None
    cycle_offset: int = 0
    raa_noise_variance: float = 0.0
    name: str = ""

    @classmethod
    def from_channel(cls, channel, tx_power: float, raa_gain: float,
                     id_phases: np.ndarray | None = None, cycle_offset: int = 0,
                     raa_noise_variance: float = 0.0, name: str = "") -> "BackscatterLink":
        a = round_trip_operator(channel, tx_power, raa_gain)
        if isinstance(channel, ChannelMatrix):
            noise_map = None
            if raa_noise_variance > 0:
                # g * H^H eta = g * right diag(conj(c)) (left^H eta), and
                # left^H eta ~ CN(0, sigma_eta^2 * left^H left).
                root = _gaussian_root(channel.left.conj().T @ channel.left)
                noise_map = (raa_gain * math.sqrt(raa_noise_variance)
                             * (channel.right * np.conj(channel.coeffs)) @ root)
            return cls(a_matrix=a, noise_map=noise_map, raa_gain=raa_gain,
                       id_phases=id_phases, cycle_offset=cycle_offset,
                       raa_noise_variance=raa_noise_variance, name=name)
        return cls(a_matrix=a, forward=np.asarray(channel), raa_gain=raa_gain,
                   id_phases=id_phases, cycle_offset=cycle_offset,
                   raa_noise_variance=raa_noise_variance, name=name)

    @classmethod
    def from_operator(cls, a: np.ndarray, id_phases: np.ndarray | None = None,
                      cycle_offset: int = 0, name: str = "") -> "BackscatterLink":
        return cls(a_matrix=np.asarray(a, dtype=complex), id_phases=id_phases,
                   cycle_offset=cycle_offset, name=name)

    @property
    def n_elements(self) -> int:
        return self.a_matrix.shape[0]

    def symbol_phase(self, k: int) -> float:
        if self.id_phases is None:
            return 0.0
        return float(self.id_phases[(k + self.cycle_offset) % len(self.id_phases)])

    def _reflected_noise(self, count: int, rng) -> np.ndarray | None:
        """(count, N) reflected-noise rows, or None when the node is noiseless."""
        if self.noise_map is not None:
            z = sample_cn(1.0, (count, self.noise_map.shape[1]), rng)
            return z @ self.noise_map.T
        if self.forward is None or self.raa_noise_variance <= 0:
            return None
        eta = sample_cn(self.raa_noise_variance, (count, self.forward.shape[0]), rng)
        return self.raa_gain * (eta @ np.conj(self.forward))

    def respond(self, x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
        """Contribution of this node to conj(y[k]) for beamformer ``x``."""
        out = np.exp(-1j * self.symbol_phase(k)) * (self.a_matrix @ x)
        noise = self._reflected_noise(1, rng)
        return out if noise is None else out + noise[0]

    def respond_block(self, x: np.ndarray, ks: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
        """Batched contributions for a frozen beamformer over symbol indices ``ks``."""
        phases = np.array([self.symbol_phase(int(k)) for k in ks])
        out = np.exp(-1j * phases)[:, None] * (self.a_matrix @ x)[None, :]
        noise = self._reflected_noise(len(ks), rng)
        return out if noise is None else out + noise


def _gamma(y_star: np.ndarray, sigma_w2: float) -> float:
    power = float(np.vdot(y_star, y_star).real)
    return power / sigma_w2 if sigma_w2 > 0 else math.inf


def run_interrogation(links, config: TrxConfig, sigma_w2: float,
                      rng: np.random.Generator, *,
                      codebook: list | None = None,
                      basis: DeflationBasis | None = None,
                      trx_geometry: ArrayGeometry | None = None,
                      wavelength: float | None = None) -> InterrogationResult:
    """One full interrogation: search, detect, estimate AoA, extract the ID.

    Runs transmit -> backscatter (all nodes superpose) -> receive -> update
    until the detection rule fires or ``max_iterations`` is reached.  The
    channel is held fixed across the run; per-symbol variation enters only
    through the nodes' ID phases and the noise.  On detection the beamformer
    freezes and one code period of further symbol exchanges feeds the cyclic
    ID search.  A deflation basis restricts the search to the orthogonal
    complement of already-detected beams.
    """
    links = list(links)
    if not links:
        raise ValueError("need at least one link")
    n = links[0].n_elements
    if any(l.n_elements != n for l in links):
        raise ValueError("links disagree on transceiver element count")
    if sigma_w2 < 0:
        raise ValueError("sigma_w2 must be >= 0")

    x = init_beamformer(n, rng, previous=config.initial_beamformer)
    if basis is not None and basis.size:
        x = deflate(np.conj(x), basis)  # start inside the search subspace

    trace: list[float] = []
    leakage = 0.0 if basis is not None and basis.size else None
    detected = False
    kbar: int | None = None

    for k in range(1, config.max_iterations + 1):
        y_star = np.zeros(n, dtype=complex)
        for link in links:
            y_star += link.respond(x, k, rng)
        y_star += sample_cn(sigma_w2, n, rng)
        gamma = _gamma(y_star, sigma_w2)
        trace.append(gamma)
        y = np.conj(y_star)
        x = deflate(y, basis) if basis is not None and basis.size else step_update(y)
        if leakage is not None:
            leakage = max(leakage, float(np.linalg.norm(basis.matrix.conj().T @ x)))
        if k >= 2 and detect(gamma, trace[-2], config):
            detected = True
            kbar = k
            break

    aoa = None
    symbols = None
    matched = None
    if detected:
        if trx_geometry is not None and wavelength is not None:
            y_lin = collapse_to_inplane(np.conj(x), trx_geometry)
            aoa = estimate_aoa(y_lin, spacing=trx_geometry.spacing_for(wavelength),
                               wavelength=wavelength,
                               oversampling=config.aoa_oversampling)
        n_id = _id_symbol_count(links, codebook)
        if n_id:
            ks = np.arange(kbar + 1, kbar + 1 + n_id)
            block = np.zeros((n_id, n), dtype=complex)
            for link in links:
                block += link.respond_block(x, ks, rng)
            block += sample_cn(sigma_w2, (n_id, n), rng)
            trace.extend(_gamma(row, sigma_w2) for row in block)
            symbols = block @ np.conj(x)  # u[k] = x^H conj(y[k])
            if codebook:
                matched = correlate_id(symbols, codebook)

    return InterrogationResult(detected=detected, detect_iteration=kbar,
                               beamformer=x, aoa=aoa,
                               snr_trace=np.asarray(trace, dtype=float),
                               symbols=symbols, matched_id=matched,
                               max_basis_leakage=leakage)


def _id_symbol_count(links, codebook) -> int:
    if codebook:
        return len(codebook[0])
    lengths = [len(l.id_phases) for l in links if l.id_phases is not None]
    return max(lengths) if lengths else 0


def detect_all(links, config: TrxConfig, sigma_w2: float,
               rng: np.random.Generator, *, codebook: list | None = None,
               max_nodes: int | None = None,
               trx_geometry: ArrayGeometry | None = None,
               wavelength: float | None = None) -> list[InterrogationResult]:
    """Repeated interrogation with deflation to separate multiple nodes.

    Each pass searches the orthogonal complement of the beamformers found so
    far and stops at the first pass without a detection.
    """
    links = list(links)
    n = links[0].n_elements
    basis = DeflationBasis.empty(n)
    results: list[InterrogationResult] = []
    passes = max_nodes if max_nodes is not None else len(links)
    for p in range(passes):
        cfg = config if p == 0 else replace(config, initial_beamformer=None)
        res = run_interrogation(links, cfg, sigma_w2, rng, codebook=codebook,
                                basis=basis, trx_geometry=trx_geometry,
                                wavelength=wavelength)
        results.append(res)
        if not res.detected:
            break
        basis = basis.with_vector(res.beamformer)
    return results
