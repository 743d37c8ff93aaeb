"""Scenario file handling: strict JSON schema, defaults, and capacity checks.

A scenario document is plain JSON with sections rf / anchors / raas / trx /
channel / simulation.  Every physical quantity carries its unit in the key
name (``carrier_frequency_hz``, ``tx_power_w``, ``gain_db``); unknown keys
are rejected so typos fail loudly.  ``normalize`` fills every default, which
makes serialization trivial: a normalized document re-parses to an equal
model.
"""

from __future__ import annotations

import functools
import json
import math

import numpy as np

from .channel import MultipathParams
from .geometry import ArrayGeometry, Pose, RfParams
from .locengine import FREE_SPACE, MULTIPATH, AnchorNode, Scenario
from .raa import (PnSequence, RaaNode, find_primitive_taps, generate_msequence,
                  random_binary_sequence)
from .trx import TrxConfig


class SchemaError(ValueError):
    """Scenario document violates the schema; message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _db(value: float) -> float:
    return 10.0 ** (value / 10.0)


def _mapping(doc, path) -> dict:
    if not isinstance(doc, dict):
        raise SchemaError(path, "expected an object")
    return doc


class _Section:
    """One schema object: typed key extraction with unknown-key rejection."""

    def __init__(self, doc: dict, path: str):
        self.doc = _mapping(doc, path)
        self.path = path
        self.seen: set[str] = set()

    def take(self, key, kind, required=False, default=None, minimum=None,
             exclusive=False):
        self.seen.add(key)
        if key not in self.doc:
            if required:
                raise SchemaError(self.path, f"missing required key '{key}'")
            return default
        value = self.doc[key]
        kpath = f"{self.path}.{key}"
        if value is None and not required:
            return default
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaError(kpath, "expected a number")
            value = float(value)
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise SchemaError(kpath, "expected an integer")
        elif kind is bool:
            if not isinstance(value, bool):
                raise SchemaError(kpath, "expected a boolean")
        elif kind is str:
            if not isinstance(value, str):
                raise SchemaError(kpath, "expected a string")
        elif kind is list:
            if not isinstance(value, list):
                raise SchemaError(kpath, "expected an array")
        elif kind is dict:
            if not isinstance(value, dict):
                raise SchemaError(kpath, "expected an object")
        if minimum is not None and isinstance(value, (int, float)):
            if value < minimum or (exclusive and value <= minimum):
                op = ">" if exclusive else ">="
                raise SchemaError(kpath, f"must be {op} {minimum}")
        return value

    def finish(self):
        unknown = set(self.doc) - self.seen
        if unknown:
            raise SchemaError(self.path, f"unknown keys {sorted(unknown)}")


def _normalize_layout(doc, path) -> dict:
    sec = _Section(doc, path)
    kind = sec.take("kind", str, required=True)
    if kind == "linear":
        n = sec.take("n", int, required=True, minimum=1)
        sec.finish()
        return {"kind": "linear", "n": n}
    if kind == "planar":
        nx = sec.take("nx", int, required=True, minimum=1)
        ny = sec.take("ny", int, required=True, minimum=1)
        sec.finish()
        return {"kind": "planar", "nx": nx, "ny": ny}
    raise SchemaError(f"{path}.kind", "expected 'linear' or 'planar'")


def _layout_geometry(layout: dict, spacing, pose) -> ArrayGeometry:
    if layout["kind"] == "linear":
        return ArrayGeometry.linear(layout["n"], spacing=spacing, pose=pose)
    return ArrayGeometry.planar(layout["nx"], layout["ny"], spacing=spacing, pose=pose)


def _normalize_id(doc, path) -> dict:
    sec = _Section(doc, path)
    kind = sec.take("kind", str, required=True)
    if kind == "msequence":
        reg = sec.take("register_len", int, required=True, minimum=2)
        idx = sec.take("sequence_index", int, default=0, minimum=0)
        sec.finish()
        return {"kind": "msequence", "register_len": reg, "sequence_index": idx}
    if kind == "random_binary":
        length = sec.take("length", int, required=True, minimum=1)
        seed = sec.take("seed", int, required=True, minimum=0)
        sec.finish()
        return {"kind": "random_binary", "length": length, "seed": seed}
    raise SchemaError(f"{path}.kind", "expected 'msequence' or 'random_binary'")


def _id_length(id_doc: dict) -> int:
    if id_doc["kind"] == "msequence":
        return 2 ** id_doc["register_len"] - 1
    return id_doc["length"]


@functools.lru_cache(maxsize=None)
def _msequence_by_index(register_len: int, index: int) -> PnSequence:
    taps = find_primitive_taps(register_len, index + 1)[index]
    return generate_msequence(register_len, taps=taps)


def _build_sequence(id_doc: dict) -> PnSequence:
    if id_doc["kind"] == "msequence":
        return _msequence_by_index(id_doc["register_len"], id_doc["sequence_index"])
    rng = np.random.default_rng([id_doc["seed"]])
    return random_binary_sequence(id_doc["length"], rng)


def normalize(doc: dict) -> dict:
    """Validate a scenario document and fill every default.

    Raises SchemaError naming the offending field.  The result is a plain
    JSON-serializable dict; normalizing it again is the identity.
    """
    root = _Section(doc, "scenario")

    rf = _Section(root.take("rf", dict, required=True), "rf")
    rf_out = {
        "carrier_frequency_hz": rf.take("carrier_frequency_hz", float, required=True,
                                        minimum=0, exclusive=True),
        "bandwidth_hz": rf.take("bandwidth_hz", float, required=True,
                                minimum=0, exclusive=True),
        "symbol_time_s": rf.take("symbol_time_s", float, required=True,
                                 minimum=0, exclusive=True),
        "tx_power_w": rf.take("tx_power_w", float, required=True,
                              minimum=0, exclusive=True),
        "element_gain_trx_db": rf.take("element_gain_trx_db", float, default=0.0),
        "element_gain_raa_db": rf.take("element_gain_raa_db", float, default=0.0),
        "noise_figure_trx_db": rf.take("noise_figure_trx_db", float, default=0.0),
        "noise_figure_raa_db": rf.take("noise_figure_raa_db", float, default=0.0),
    }
    rf.finish()

    anchors_doc = root.take("anchors", list, required=True)
    if len(anchors_doc) < 2:
        raise SchemaError("anchors", "need at least 2 anchors")
    anchors_out = []
    for i, a in enumerate(anchors_doc):
        sec = _Section(a, f"anchors[{i}]")
        position = sec.take("position_m", list, required=True)
        if len(position) != 2 or not all(isinstance(v, (int, float)) for v in position):
            raise SchemaError(f"anchors[{i}].position_m", "expected [x, z]")
        anchors_out.append({
            "name": sec.take("name", str, default=f"anchor{i}"),
            "layout": _normalize_layout(sec.take("layout", dict, required=True),
                                        f"anchors[{i}].layout"),
            "spacing_m": sec.take("spacing_m", float, default=None,
                                  minimum=0, exclusive=True),
            "position_m": [float(position[0]), float(position[1])],
            "boresight_rad": sec.take("boresight_rad", float, default=0.0),
        })
        sec.finish()

    raas_doc = root.take("raas", list, required=True)
    if not raas_doc:
        raise SchemaError("raas", "need at least one RAA")
    raas_out = []
    for i, r in enumerate(raas_doc):
        sec = _Section(r, f"raas[{i}]")
        traj = sec.take("trajectory_txz_m", list, required=True)
        if not traj or any(len(row) != 3 for row in traj):
            raise SchemaError(f"raas[{i}].trajectory_txz_m",
                              "expected rows of [t, x, z]")
        times = [row[0] for row in traj]
        if any(b < a for a, b in zip(times, times[1:])):
            raise SchemaError(f"raas[{i}].trajectory_txz_m",
                              "waypoint times must be non-decreasing")
        offset = sec.doc.get("cycle_offset", "random")
        sec.seen.add("cycle_offset")
        if offset != "random" and not (isinstance(offset, int)
                                       and not isinstance(offset, bool) and offset >= 0):
            raise SchemaError(f"raas[{i}].cycle_offset",
                              "expected 'random' or a non-negative integer")
        raas_out.append({
            "name": sec.take("name", str, default=f"raa{i}"),
            "layout": _normalize_layout(sec.take("layout", dict, required=True),
                                        f"raas[{i}].layout"),
            "spacing_m": sec.take("spacing_m", float, default=None,
                                  minimum=0, exclusive=True),
            "gain_db": sec.take("gain_db", float, default=0.0),
            "boresight_rad": sec.take("boresight_rad", float, default=0.0),
            "trajectory_txz_m": [[float(v) for v in row] for row in traj],
            "id": _normalize_id(sec.take("id", dict, required=True), f"raas[{i}].id"),
            "cycle_offset": offset,
        })
        sec.finish()

    trx = _Section(root.take("trx", dict, required=True), "trx")
    trx_out = {
        "detection_snr_db": trx.take("detection_snr_db", float, required=True),
        "growth_ratio_db": trx.take("growth_ratio_db", float, required=True,
                                    minimum=0, exclusive=True),
        "max_iterations": trx.take("max_iterations", int, default=30, minimum=2),
        "aoa_oversampling": trx.take("aoa_oversampling", int, default=16, minimum=1),
        "tracking": trx.take("tracking", bool, default=False),
    }
    trx.finish()

    channel = _Section(root.take("channel", dict, default={}), "channel")
    mode = channel.take("mode", str, default=FREE_SPACE)
    if mode not in (FREE_SPACE, MULTIPATH):
        raise SchemaError("channel.mode", f"expected '{FREE_SPACE}' or '{MULTIPATH}'")
    channel_out = {
        "mode": mode,
        "k_factor_db": channel.take("k_factor_db", float, default=13.0),
        "n_clusters": channel.take("n_clusters", int, default=4, minimum=1),
        "angle_spread_deg": channel.take("angle_spread_deg", float, default=60.0,
                                         minimum=0, exclusive=True),
    }
    channel.finish()

    sim = _Section(root.take("simulation", dict, required=True), "simulation")
    sim_out = {
        "update_rate_hz": sim.take("update_rate_hz", float, required=True,
                                   minimum=0, exclusive=True),
        "trials": sim.take("trials", int, required=True, minimum=1),
        "master_seed": sim.take("master_seed", int, required=True, minimum=0),
    }
    sim.finish()
    root.finish()

    return {"rf": rf_out, "anchors": anchors_out, "raas": raas_out,
            "trx": trx_out, "channel": channel_out, "simulation": sim_out}


def build_scenario(doc: dict) -> Scenario:
    """Turn a (possibly unnormalized) document into a runtime Scenario."""
    doc = normalize(doc)
    rf_doc = doc["rf"]
    # RfParams carries one nominal reflection gain (used by the closed-form
    # link budget); per-node gains live on the nodes themselves.
    raa_gains = [_db(r["gain_db"]) ** 0.5 for r in doc["raas"]]
    rf = RfParams(
        carrier_frequency=rf_doc["carrier_frequency_hz"],
        bandwidth=rf_doc["bandwidth_hz"],
        symbol_time=rf_doc["symbol_time_s"],
        tx_power=rf_doc["tx_power_w"],
        element_gain_trx=_db(rf_doc["element_gain_trx_db"]),
        element_gain_raa=_db(rf_doc["element_gain_raa_db"]),
        noise_figure_trx=_db(rf_doc["noise_figure_trx_db"]),
        noise_figure_raa=_db(rf_doc["noise_figure_raa_db"]),
        raa_gain=raa_gains[0])

    anchors = []
    for a in doc["anchors"]:
        pose = Pose(a["position_m"][0], a["position_m"][1], a["boresight_rad"])
        anchors.append(AnchorNode(
            geometry=_layout_geometry(a["layout"], a["spacing_m"], pose),
            pose=pose, name=a["name"]))

    raas = []
    codebook = []
    for r, gain in zip(doc["raas"], raa_gains):
        seq = _build_sequence(r["id"])
        codebook.append(seq)
        offset = 0 if r["cycle_offset"] == "random" else int(r["cycle_offset"])
        start = r["trajectory_txz_m"][0]
        raas.append(RaaNode(
            geometry=_layout_geometry(r["layout"], r["spacing_m"],
                                      Pose(start[1], start[2], r["boresight_rad"])),
            gain=gain,
            id_phases=seq.phases,
            trajectory=np.asarray(r["trajectory_txz_m"], dtype=float),
            orientation=r["boresight_rad"],
            cycle_offset=offset,
            name=r["name"]))

    trx_doc = doc["trx"]
    trx = TrxConfig(eta1=_db(trx_doc["detection_snr_db"]),
                    eta2=_db(trx_doc["growth_ratio_db"]),
                    max_iterations=trx_doc["max_iterations"],
                    aoa_oversampling=trx_doc["aoa_oversampling"])

    ch = doc["channel"]
    multipath = MultipathParams(k_factor=_db(ch["k_factor_db"]),
                                n_clusters=ch["n_clusters"],
                                angle_spread=math.radians(ch["angle_spread_deg"]))

    sim = doc["simulation"]
    random_offsets = tuple(r["cycle_offset"] == "random" for r in doc["raas"])
    return Scenario(anchors=tuple(anchors), raas=tuple(raas),
                    codebook=tuple(codebook), rf=rf, trx=trx,
                    update_rate=sim["update_rate_hz"],
                    channel_mode=ch["mode"], multipath=multipath,
                    trials=sim["trials"], master_seed=sim["master_seed"],
                    tracking=trx_doc["tracking"],
                    randomize_cycle_offsets=any(random_offsets))


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return build_scenario(json.load(fh))


def _euler_phi(n: int) -> int:
    result = n
    p = 2
    m = n
    while p * p <= m:
        if m % p == 0:
            while m % p == 0:
                m //= p
            result -= result // p
        p += 1
    if m > 1:
        result -= result // m
    return result


def msequence_capacity(k: int) -> int | None:
    """Number of distinct m-sequences of period ``k``, or None if k != 2^L - 1."""
    register_len = (k + 1).bit_length() - 1
    if 2 ** register_len - 1 != k or register_len < 2:
        return None
    return _euler_phi(k) // register_len


def validate_scenario_document(doc: dict) -> list[tuple[str, bool, str]]:
    """Capacity and consistency checks on a normalized document.

    Returns (check name, passed, message) triples; schema violations raise
    SchemaError before any check runs.  Sequence materialization is not
    needed, so arbitrarily large ID sets can be checked cheaply.
    """
    doc = normalize(doc)
    checks: list[tuple[str, bool, str]] = []

    n_anchors = len(doc["anchors"])
    checks.append(("anchor_count", n_anchors >= 2,
                   f"{n_anchors} anchors (>= 2 required for 2D fixes)"))

    lengths = [_id_length(r["id"]) for r in doc["raas"]]
    k = max(lengths)
    uniform = len(set(lengths)) == 1
    checks.append(("id_length_uniform", uniform,
                   f"ID lengths {sorted(set(lengths))}"))

    t = doc["rf"]["symbol_time_s"]
    rate = doc["simulation"]["update_rate_hz"]
    packet = k * t
    max_rate = 1.0 / packet
    checks.append(("update_rate_capacity", rate * packet <= 1.0 + 1e-12,
                   f"packet K*T = {packet:.6g} s supports update rates up to "
                   f"{max_rate:.6g} Hz; requested {rate:.6g} Hz"))

    mseq = [r["id"] for r in doc["raas"] if r["id"]["kind"] == "msequence"]
    if mseq:
        by_len: dict[int, int] = {}
        for spec in mseq:
            by_len[spec["register_len"]] = by_len.get(spec["register_len"], 0) + 1
        for reg, count in sorted(by_len.items()):
            cap = msequence_capacity(2 ** reg - 1)
            checks.append((
                f"msequence_capacity_L{reg}", count <= cap,
                f"packet length K={2 ** reg - 1} allows discriminating {cap} "
                f"different RAAs; scenario assigns {count}"))

    ids = [json.dumps(r["id"], sort_keys=True) for r in doc["raas"]]
    checks.append(("id_uniqueness", len(set(ids)) == len(ids),
                   "all RAA ID assignments distinct" if len(set(ids)) == len(ids)
                   else "duplicate RAA ID assignments"))

    return checks
