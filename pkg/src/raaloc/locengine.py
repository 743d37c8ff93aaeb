"""Scenario simulation: trajectories, interrogations, AoA fusion, Monte Carlo.

At every localization step each anchor independently interrogates the scene
(anchors occupy separate narrowband channels, so they never interfere), the
detected bearings are converted to global rays, and a linear least-squares
intersection of the bearing lines yields the position fix.  Steps with fewer
than two usable bearings are outages: reported, but excluded from the error
statistics.  All randomness is keyed off the scenario master seed, so a run
is reproducible sample for sample.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (MultipathParams, NoiseModel, draw_cluster_angles, los_channel,
                      multipath_channel, noise_variances, surrogate_pathset)
from .geometry import (ArrayGeometry, FieldOfViewError, Pose, RfParams, bearing,
                       distance, ray_angle_from_x)
from .raa import PnSequence, RaaNode
from .trx import (BackscatterLink, DeflationBasis, InterrogationResult, TrxConfig,
                  run_interrogation)

FREE_SPACE = "free_space"
MULTIPATH = "multipath"


@dataclass(frozen=True)
class AnchorNode:
    """Fixed transceiver at a known pose."""

    geometry: ArrayGeometry
    pose: Pose
    name: str = "anchor"


@dataclass(frozen=True, eq=False)
class Scenario:
    """Complete description of one simulation campaign."""

    anchors: tuple[AnchorNode, ...]
    raas: tuple[RaaNode, ...]
    codebook: tuple[PnSequence, ...]   # one ID sequence per node, same order
    rf: RfParams
    trx: TrxConfig
    update_rate: float                 # Hz
    channel_mode: str = FREE_SPACE
    multipath: MultipathParams = field(default_factory=MultipathParams)
    trials: int = 1
    master_seed: int = 0
    tracking: bool = False
    randomize_cycle_offsets: bool = True

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise ValueError("need at least 2 anchors for unambiguous 2D fixes")
        if not self.raas:
            raise ValueError("need at least one RAA node")
        if len(self.codebook) != len(self.raas):
            raise ValueError("codebook must hold one sequence per RAA")
        if self.update_rate <= 0:
            raise ValueError("update_rate must be positive")
        if self.channel_mode not in (FREE_SPACE, MULTIPATH):
            raise ValueError(f"unknown channel mode {self.channel_mode!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        k = max(len(seq) for seq in self.codebook)
        packet = k * self.rf.symbol_time
        if self.update_rate * packet > 1.0 + 1e-12:
            raise ValueError(
                f"update interval {1.0 / self.update_rate:.3e} s shorter than "
                f"the packet duration {packet:.3e} s (K={k})")

    @property
    def tau(self) -> float:
        return 1.0 / self.update_rate

    def step_count(self, raa_index: int) -> int:
        t_end = float(self.raas[raa_index].trajectory[-1, 0])
        return int(math.floor(t_end / self.tau + 1e-9)) + 1


@dataclass(frozen=True, eq=False)
class StepRecord:
    """Everything observed at one localization step for one target node."""

    index: int
    time: float
    true_position: np.ndarray
    true_bearings: np.ndarray                       # per anchor, NaN if unobservable
    results: tuple[InterrogationResult | None, ...]  # per anchor, target only
    estimate: np.ndarray | None
    error: float | None
    n_bearings: int

    @property
    def outage(self) -> bool:
        return self.estimate is None


@dataclass(frozen=True, eq=False)
class Ecdf:
    """Empirical CDF with ties collapsed."""

    values: np.ndarray
    fractions: np.ndarray

    def evaluate(self, x: float) -> float:
        """Fraction of samples <= x."""
        idx = np.searchsorted(self.values, x, side="right")
        return 0.0 if idx == 0 else float(self.fractions[idx - 1])

    def quantile(self, q: float) -> float:
        idx = np.searchsorted(self.fractions, q, side="left")
        idx = min(idx, self.values.size - 1)
        return float(self.values[idx])


def ecdf(samples) -> Ecdf:
    """Standard empirical CDF of a nonempty sample set."""
    data = np.sort(np.asarray(samples, dtype=float))
    if data.size == 0:
        raise ValueError("ecdf needs at least one sample")
    values, counts = np.unique(data, return_counts=True)
    fractions = np.cumsum(counts) / data.size
    return Ecdf(values=values, fractions=fractions)


def fuse_aoa_ls(anchor_positions, ray_angles) -> np.ndarray:
    """Bearing-line least squares in the x-z plane.

    Each ray, leaving anchor ``a`` in direction (cos(theta), sin(theta))
    with ``theta`` measured from the +x axis, contributes the line

        sin(theta) * x - cos(theta) * z = sin(theta) * a_x - cos(theta) * a_z

    and the stacked system is solved in the least-squares sense.  Requires
    at least two rays with non-parallel lines.
    """
    positions = np.atleast_2d(np.asarray(anchor_positions, dtype=float))
    thetas = np.atleast_1d(np.asarray(ray_angles, dtype=float))
    if positions.shape[0] != thetas.size:
        raise ValueError("one ray angle per anchor position required")
    if thetas.size < 2:
        raise ValueError("underdetermined: need at least 2 bearings")
    diffs = thetas[:, None] - thetas[None, :]
    if np.all(np.abs(np.sin(diffs)) < 1e-6):
        raise ValueError("degenerate geometry: all bearing lines parallel")
    s, c = np.sin(thetas), np.cos(thetas)
    a = np.column_stack([s, -c])
    b = s * positions[:, 0] - c * positions[:, 1]
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    return solution


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


def _trial_nodes(scenario: Scenario, trial: int) -> list[RaaNode]:
    """Per-trial node instances, with randomized ID cycle offsets if enabled."""
    nodes = []
    for idx, node in enumerate(scenario.raas):
        if scenario.randomize_cycle_offsets:
            offset = int(_rng(scenario.master_seed, 0, trial, idx)
                         .integers(0, node.id_length))
            nodes.append(replace(node, cycle_offset=offset))
        else:
            nodes.append(node)
    return nodes


def _cluster_geometry(scenario: Scenario, trial: int):
    """Fixed per-trial cluster angles for every (anchor, node) link."""
    if scenario.channel_mode != MULTIPATH:
        return None
    geo = {}
    for ai in range(len(scenario.anchors)):
        for ri in range(len(scenario.raas)):
            rng = _rng(scenario.master_seed, 1, trial, ai, ri)
            geo[(ai, ri)] = draw_cluster_angles(rng, scenario.multipath)
    return geo


def _build_links(scenario: Scenario, anchor: AnchorNode, nodes, positions,
                 noise: NoiseModel, clusters, ai: int,
                 rng: np.random.Generator):
    """Physical links from one anchor to every node it can see this step.

    Returns (links, index-into-links per node or None, true bearing per node).
    Cluster fading is redrawn per step from ``rng`` in node order, so the
    draw sequence is deterministic.
    """
    links: list[BackscatterLink] = []
    link_of_node: list[int | None] = []
    bearings: list[float] = []
    for ri, node in enumerate(nodes):
        pos = positions[ri]
        try:
            phi = bearing(anchor.pose, pos)                      # AoD at the anchor
            psi = bearing(Pose(pos[0], pos[1], node.orientation),
                          anchor.pose.position)                  # AoA at the node
        except FieldOfViewError:
            link_of_node.append(None)
            bearings.append(float("nan"))
            continue
        d = distance(anchor.pose.position, pos)
        if scenario.channel_mode == MULTIPATH:
            dep, arr = clusters[(ai, ri)]
            paths = surrogate_pathset(rng, scenario.rf, d, phi, psi,
                                      scenario.multipath, dep, arr)
            ch = multipath_channel(scenario.rf, anchor.geometry, node.geometry, paths)
        else:
            ch = los_channel(scenario.rf, anchor.geometry, node.geometry, d, phi, psi)
        links.append(BackscatterLink.from_channel(
            ch, scenario.rf.tx_power, node.gain, id_phases=node.id_phases,
            cycle_offset=node.cycle_offset,
            raa_noise_variance=noise.sigma_eta2, name=node.name))
        link_of_node.append(len(links) - 1)
        bearings.append(phi)
    return links, link_of_node, bearings


def _interrogate_for_target(scenario: Scenario, links, target_link: int,
                            raa_index: int, init: np.ndarray | None,
                            anchor: AnchorNode,
                            rng: np.random.Generator,
                            sigma_w2: float) -> InterrogationResult | None:
    """Deflation passes until the target node's ID is matched.

    The tracking initializer applies to the first pass only; later passes
    restart from random beams in the orthogonal complement of whatever was
    already found.  With a single node this is one plain interrogation.
    """
    basis = DeflationBasis.empty(anchor.geometry.size)
    for p in range(len(links)):
        cfg = scenario.trx if init is None or p > 0 else \
            replace(scenario.trx, initial_beamformer=init)
        res = run_interrogation(links, cfg, sigma_w2, rng,
                                codebook=list(scenario.codebook), basis=basis,
                                trx_geometry=anchor.geometry,
                                wavelength=scenario.rf.wavelength)
        if not res.detected:
            return None
        if res.matched_id is not None and res.matched_id.index == raa_index:
            return res
        try:
            basis = basis.with_vector(res.beamformer)
        except ValueError:
            return None
    return None


def simulate_trajectory(scenario: Scenario, raa_index: int = 0,
                        trial_index: int = 0) -> list[StepRecord]:
    """Run every localization step of one trial for one target node.

    All nodes backscatter every interrogation; anchors separate them by
    deflation and keep the result whose decoded ID matches the target.
    With tracking enabled each anchor seeds its next search with the most
    recent beamformer that matched the target.
    """
    nodes = _trial_nodes(scenario, trial_index)
    clusters = _cluster_geometry(scenario, trial_index)
    noise = noise_variances(scenario.rf)
    n_steps = scenario.step_count(raa_index)
    tracking_state: dict[int, np.ndarray] = {}
    records: list[StepRecord] = []

    for i in range(n_steps):
        t = i * scenario.tau
        positions = [node.position_at(t) for node in nodes]
        true_pos = positions[raa_index]
        results: list[InterrogationResult | None] = []
        true_bearings: list[float] = []
        fuse_positions: list[np.ndarray] = []
        fuse_angles: list[float] = []

        for ai, anchor in enumerate(scenario.anchors):
            rng = _rng(scenario.master_seed, 2, trial_index, ai, i)
            links, link_of_node, bearings_here = _build_links(
                scenario, anchor, nodes, positions, noise, clusters, ai, rng)
            true_bearings.append(bearings_here[raa_index])
            if link_of_node[raa_index] is None:
                results.append(None)
                continue
            init = tracking_state.get(ai) if scenario.tracking else None
            res = _interrogate_for_target(scenario, links, link_of_node[raa_index],
                                          raa_index, init, anchor, rng,
                                          noise.sigma_w2)
            results.append(res)
            if res is not None:
                tracking_state[ai] = res.beamformer
                if res.aoa is not None:
                    fuse_positions.append(anchor.pose.position)
                    fuse_angles.append(ray_angle_from_x(anchor.pose, res.aoa))

        estimate = None
        error = None
        if len(fuse_angles) >= 2:
            try:
                estimate = fuse_aoa_ls(np.array(fuse_positions), np.array(fuse_angles))
                error = float(np.hypot(*(estimate - true_pos)))
            except ValueError:
                estimate = None
        records.append(StepRecord(index=i, time=t, true_position=true_pos,
                                  true_bearings=np.asarray(true_bearings),
                                  results=tuple(results), estimate=estimate,
                                  error=error, n_bearings=len(fuse_angles)))
    return records


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    """Aggregated samples over all trials.

    ``errors`` holds the fused position errors per node (outage steps
    excluded); ``iterations`` the detection iteration counts per
    (anchor index, node index); ``outages`` the number of steps without a
    fix per node.
    """

    errors: dict[int, np.ndarray]
    iterations: dict[tuple[int, int], np.ndarray]
    outages: dict[int, int]
    steps_per_trial: dict[int, int]
    trials: int


def monte_carlo(scenario: Scenario, sink=None) -> MonteCarloResult:
    """All trials for all nodes, deterministically seeded.

    Trials run in parallel when the RAALOC_THREADS environment variable
    asks for more than one worker; results are identical either way because
    every trial draws from its own keyed RNG streams and aggregation
    follows submission order.  ``sink.on_trajectory(trial, raa_index,
    records, scenario)`` is invoked in deterministic order when a sink is
    given.
    """
    errors: dict[int, list] = {r: [] for r in range(len(scenario.raas))}
    iterations: dict[tuple[int, int], list] = {
        (a, r): [] for a in range(len(scenario.anchors))
        for r in range(len(scenario.raas))}
    outages: dict[int, int] = {r: 0 for r in range(len(scenario.raas))}

    jobs = [(trial, ri) for trial in range(scenario.trials)
            for ri in range(len(scenario.raas))]
    workers = max(1, int(os.environ.get("RAALOC_THREADS", "1")))

    def run(job):
        trial, ri = job
        return simulate_trajectory(scenario, raa_index=ri, trial_index=trial)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_records = list(pool.map(run, jobs))
    else:
        all_records = [run(job) for job in jobs]

    for (trial, ri), records in zip(jobs, all_records):
        for rec in records:
            if rec.error is not None:
                errors[ri].append(rec.error)
            else:
                outages[ri] += 1
            for ai, res in enumerate(rec.results):
                if res is not None and res.detected:
                    iterations[(ai, ri)].append(res.detect_iteration)
        if sink is not None:
            sink.on_trajectory(trial, ri, records, scenario)

    return MonteCarloResult(
        errors={r: np.asarray(v, dtype=float) for r, v in errors.items()},
        iterations={k: np.asarray(v, dtype=float) for k, v in iterations.items()},
        outages=outages,
        steps_per_trial={r: scenario.step_count(r) for r in range(len(scenario.raas))},
        trials=scenario.trials)
