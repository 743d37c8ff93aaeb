"""The retro-directive node: conjugate backscatter, ID phase modulation, PN codes.

A retro-directive array re-radiates the conjugate of what it receives, scaled
by its gain and rotated by a common data phase, so the reflection departs
toward the arrival direction without any processing at the node.  Nodes
identify themselves by cyclically repeating a binary phase sequence; maximal
length sequences give the two-valued periodic autocorrelation that makes the
cyclic ID search unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ArrayGeometry

# Feedback tap exponents of known-primitive polynomials, one per register
# length.  Every generation run re-verifies the full period, so a bad entry
# cannot slip through silently.
MSEQUENCE_TAPS: dict[int, tuple[int, ...]] = {
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
}


@dataclass(frozen=True)
class PnSequence:
    """Periodic binary ID sequence.

    ``chips`` are 0/1; the backscatter phase alphabet is antipodal,
    phi[k] = pi * b[k], so chip 0 maps to symbol +1 and chip 1 to -1.
    """

    chips: tuple[int, ...]

    def __post_init__(self):
        if len(self.chips) < 1:
            raise ValueError("sequence must have at least one chip")
        if any(c not in (0, 1) for c in self.chips):
            raise ValueError("chips must be 0 or 1")

    def __len__(self) -> int:
        return len(self.chips)

    @property
    def phases(self) -> np.ndarray:
        """Phase sequence phi[k] = pi * b[k] in rad."""
        return np.pi * np.asarray(self.chips, dtype=float)

    @property
    def symbols(self) -> np.ndarray:
        """Antipodal +-1 alphabet, +1 for chip 0."""
        return 1 - 2 * np.asarray(self.chips, dtype=int)


def generate_msequence(register_len: int, taps: tuple[int, ...] | None = None,
                       seed_state: tuple[int, ...] | None = None) -> PnSequence:
    """Maximal-length sequence from a Fibonacci LFSR.

    Args:
        register_len: register length L; the period is 2**L - 1.
        taps: feedback polynomial exponents including L (e.g. (5, 3) for
            x^5 + x^3 + 1).  Defaults to the shipped table for L in 5..13.
        seed_state: initial register bits, any nonzero pattern; all ones
            by default.

    Raises:
        ValueError: if the taps are not primitive, detected by the state
            failing to traverse a full period of 2**L - 1 distinct values.
    """
    if taps is None:
        if register_len not in MSEQUENCE_TAPS:
            raise ValueError(
                f"no default taps for register length {register_len}; "
                f"table covers {sorted(MSEQUENCE_TAPS)}")
        taps = MSEQUENCE_TAPS[register_len]
    if any(t < 1 or t > register_len for t in taps) or len(set(taps)) != len(taps):
        raise ValueError("taps must be distinct exponents in 1..register_len")
    if seed_state is None:
        seed_state = (1,) * register_len
    if len(seed_state) != register_len or not any(seed_state):
        raise ValueError("seed state must be a nonzero pattern of register_len bits")

    period = 2 ** register_len - 1
    state = list(int(b) & 1 for b in seed_state)
    start = tuple(state)
    seen_start = 0
    chips = []
    for _ in range(period):
        chips.append(state[-1])
        fb = 0
        for t in taps:
            fb ^= state[t - 1]
        state = [fb] + state[:-1]
        if tuple(state) == start:
            seen_start += 1
    if seen_start != 1 or tuple(state) != start:
        raise ValueError(
            f"taps {taps} are not primitive for register length {register_len} "
            f"(state period shorter than {period})")
    return PnSequence(chips=tuple(chips))


def find_primitive_taps(register_len: int, count: int) -> list[tuple[int, ...]]:
    """Enumerate ``count`` distinct primitive tap sets for one register length.

    Brute-force search over feedback polynomials x^L + ... + 1, validated by
    the full-period check in ``generate_msequence``.  Used when a scenario
    needs more distinct m-sequence IDs than the shipped table provides.
    """
    found = []
    for mask in range(1, 2 ** (register_len - 1)):
        taps = tuple([register_len] +
                     [t for t in range(register_len - 1, 0, -1) if mask >> (t - 1) & 1])
        try:
            generate_msequence(register_len, taps=taps)
        except ValueError:
            continue
        found.append(taps)
        if len(found) == count:
            return found
    raise ValueError(
        f"only {len(found)} primitive polynomials exist for register "
        f"length {register_len}, requested {count}")


def random_binary_sequence(length: int, rng: np.random.Generator) -> PnSequence:
    """Uniform random binary ID of arbitrary length (non-m-sequence codes)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return PnSequence(chips=tuple(int(b) for b in rng.integers(0, 2, size=length)))


def backscatter(z: np.ndarray, gain: float, phase: float) -> np.ndarray:
    """Conjugating reflection r = g * exp(j*phase) * conj(z).

    Element-wise conjugation reverses the phase profile along the array, so
    the reflected wave departs toward the arrival direction; the common
    ``phase`` carries one data symbol without disturbing retrodirectivity.
    The reflection is an isometry scaled by ``gain``.
    """
    return gain * np.exp(1j * phase) * np.conj(np.asarray(z))


@dataclass(frozen=True)
class RaaNode:
    """Retro-directive backscatter node.

    ``trajectory`` rows are (t, x, z) waypoints, linearly interpolated and
    clamped outside their time span; a single row means a static node.
    ``orientation`` is the boresight angle of the panel (see geometry.Pose).
    ``cycle_offset`` shifts the ID cycle, modelling the lack of symbol
    synchronization between interrogator and node.
    """

    geometry: ArrayGeometry
    gain: float                    # linear amplitude
    id_phases: np.ndarray          # rad, one per ID symbol
    trajectory: np.ndarray         # (n, 3) rows of (t, x, z)
    orientation: float = 0.0
    cycle_offset: int = 0
    name: str = "raa"

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        phases = np.atleast_1d(np.asarray(self.id_phases, dtype=float))
        if phases.size < 1:
            raise ValueError("id sequence must have at least one symbol")
        if np.any(phases < 0) or np.any(phases >= 2 * np.pi):
            raise ValueError("id phases must lie in [0, 2*pi)")
        object.__setattr__(self, "id_phases", phases)
        traj = np.atleast_2d(np.asarray(self.trajectory, dtype=float))
        if traj.shape[1] != 3:
            raise ValueError("trajectory rows must be (t, x, z)")
        object.__setattr__(self, "trajectory", traj)

    @property
    def id_length(self) -> int:
        return int(self.id_phases.size)

    def position_at(self, t: float) -> np.ndarray:
        """Waypoint-interpolated position at time t, clamped at the ends."""
        times = self.trajectory[:, 0]
        x = np.interp(t, times, self.trajectory[:, 1])
        z = np.interp(t, times, self.trajectory[:, 2])
        return np.array([x, z])


def id_phase(node: RaaNode, symbol_index: int) -> float:
    """Cyclic ID phase lookup phi[(k + offset) mod K] for global symbol index k."""
    k = (symbol_index + node.cycle_offset) % node.id_length
    return float(node.id_phases[k])
