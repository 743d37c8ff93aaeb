"""Command-line front end: simulate scenarios, evaluate closed forms, validate configs.

All numeric output is locale-independent full double precision with '.' as
the decimal separator, so result bundles are byte-reproducible: the same
scenario and seed always produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SnrSpectrum, equilibrium_snr, max_tracking_speed, \
    snr_recursion, uniform_fractions
from .locengine import ecdf, monte_carlo
from .scenario_io import SchemaError, build_scenario, normalize, \
    validate_scenario_document


def _fmt(x) -> str:
    """Full-precision, locale-independent number formatting for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc: dict) -> str:
    return hashlib.sha256(_canonical_json(doc).encode("utf-8")).hexdigest()


class BundleWriter:
    """Streams per-step records into the CSV tables of a result bundle."""

    TABLES = ("snr_traces", "detections", "aoa_estimates", "positions")

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        self._files = {}
        self._writers = {}
        for name in self.TABLES:
            fh = open(out_dir / f"{name}.csv", "w", newline="", encoding="utf-8")
            self._files[name] = fh
            self._writers[name] = csv.writer(fh, lineterminator="\n")
        self._writers["snr_traces"].writerow(
            ["trial", "raa", "step", "anchor", "iteration", "snr"])
        self._writers["detections"].writerow(
            ["trial", "raa", "step", "anchor", "detected", "detect_iteration",
             "matched_index", "matched_lag", "score"])
        self._writers["aoa_estimates"].writerow(
            ["trial", "raa", "step", "anchor", "bearing_true_rad",
             "aoa_estimate_rad", "aoa_error_rad"])
        self._writers["positions"].writerow(
            ["trial", "raa", "step", "time_s", "true_x_m", "true_z_m",
             "est_x_m", "est_z_m", "error_m", "n_bearings"])

    def on_trajectory(self, trial, raa_index, records, scenario):
        snr = self._writers["snr_traces"]
        det = self._writers["detections"]
        aoa = self._writers["aoa_estimates"]
        pos = self._writers["positions"]
        for rec in records:
            for ai, res in enumerate(rec.results):
                if res is None:
                    det.writerow([trial, raa_index, rec.index, ai, 0, "", "", "", ""])
                    continue
                for it, g in enumerate(res.snr_trace, start=1):
                    snr.writerow([trial, raa_index, rec.index, ai, it, _fmt(g)])
                match = res.matched_id
                det.writerow([trial, raa_index, rec.index, ai,
                              int(res.detected), _fmt(res.detect_iteration),
                              "" if match is None else match.index,
                              "" if match is None else match.lag,
                              "" if match is None else _fmt(match.score)])
                if res.aoa is not None:
                    true_b = rec.true_bearings[ai]
                    aoa.writerow([trial, raa_index, rec.index, ai, _fmt(true_b),
                                  _fmt(res.aoa), _fmt(res.aoa - true_b)])
            est = rec.estimate
            pos.writerow([trial, raa_index, rec.index, _fmt(rec.time),
                          _fmt(rec.true_position[0]), _fmt(rec.true_position[1]),
                          _fmt(est[0]) if est is not None else "",
                          _fmt(est[1]) if est is not None else "",
                          _fmt(rec.error), rec.n_bearings])

    def close(self):
        for fh in self._files.values():
            fh.close()


def _write_ecdf(out_dir: Path, result) -> None:
    with open(out_dir / "ecdf.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["raa", "error_m", "fraction"])
        for raa_index in sorted(result.errors):
            samples = result.errors[raa_index]
            if samples.size == 0:
                continue
            curve = ecdf(samples)
            for v, f in zip(curve.values, curve.fractions):
                writer.writerow([raa_index, _fmt(v), _fmt(f)])


def cmd_simulate(args) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2
    try:
        doc = normalize(doc)
        if args.seed is not None:
            doc["simulation"]["master_seed"] = args.seed
        if args.trials is not None:
            doc["simulation"]["trials"] = args.trials
        if args.channel is not None:
            doc["channel"]["mode"] = args.channel
        scenario = build_scenario(doc)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    writer = BundleWriter(out_dir)
    try:
        result = monte_carlo(scenario, sink=writer)
    finally:
        writer.close()
    _write_ecdf(out_dir, result)

    meta = {"version": __version__, "config_hash": config_hash(doc),
            "master_seed": doc["simulation"]["master_seed"],
            "trials": doc["simulation"]["trials"], "scenario": doc}
    with open(out_dir / "metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")

    for raa_index in sorted(result.errors):
        samples = result.errors[raa_index]
        total = result.steps_per_trial[raa_index] * result.trials
        if samples.size:
            p50, p90, p99 = np.percentile(samples, [50, 90, 99])
            print(f"raa {raa_index}: error p50={p50:.4f} m p90={p90:.4f} m "
                  f"p99={p99:.4f} m over {samples.size} fixes "
                  f"({result.outages[raa_index]}/{total} outages)")
        else:
            print(f"raa {raa_index}: no fixes ({total} steps, all outages)")
    print(f"bundle written to {out_dir} (config {config_hash(doc)[:12]}, "
          f"seed {doc['simulation']['master_seed']})")
    return 0


def _parse_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in text.split(",")]


def cmd_analyze(args) -> int:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    if args.kind == "snr_trace":
        maxima_db = [float(v) for v in args.max_db.split(",")]
        maxima = 10.0 ** (np.asarray(maxima_db) / 10.0)
        spectrum = SnrSpectrum(maxima=np.sort(maxima)[::-1], n_elements=args.n)
        trace = snr_recursion(spectrum, uniform_fractions(args.n), args.k)
        header = ["k"] + [f"snr_db_{j + 1}" for j in range(len(maxima_db))] + ["snr_dec_db"]
        writer.writerow(header)
        with np.errstate(divide="ignore"):
            snr_db = 10.0 * np.log10(trace.snr[:, :len(maxima_db)])
            dec_db = 10.0 * np.log10(trace.snr_dec)
        for k in range(trace.k_max):
            writer.writerow([k + 1] + [_fmt(v) for v in snr_db[k]] + [_fmt(dec_db[k])])
    elif args.kind == "equilibrium":
        s = 10.0 ** (args.s_db / 10.0)
        x = equilibrium_snr(s, args.n)
        writer.writerow(["snr_max_db", "n", "equilibrium", "equilibrium_db"])
        writer.writerow([_fmt(args.s_db), args.n, _fmt(x), _fmt(10.0 * math.log10(x))])
    elif args.kind == "speed_bound":
        writer.writerow(["n", "v_max_mps"])
        for n in _parse_range(args.n):
            writer.writerow([n, _fmt(max_tracking_speed(args.d, n, args.tau))])
    return 0


def cmd_validate(args) -> int:
    try:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        checks = validate_scenario_document(doc)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    failed = 0
    for name, ok, message in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {message}")
        failed += 0 if ok else 1
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raaloc",
        description="Backscatter localization with retro-directive arrays: "
                    "simulation, closed-form analysis, scenario validation.")
    parser.add_argument("--version", action="version", version=f"raaloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write a result bundle")
    sim.add_argument("--scenario", required=True, help="scenario JSON path")
    sim.add_argument("--out", required=True, help="output bundle directory")
    sim.add_argument("--seed", type=int, default=None, help="override master seed")
    sim.add_argument("--trials", type=int, default=None, help="override trial count")
    sim.add_argument("--channel", choices=["free_space", "multipath"], default=None,
                     help="override channel mode")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="closed-form curves as CSV on stdout")
    ana_sub = ana.add_subparsers(dest="kind", required=True)
    tr = ana_sub.add_parser("snr_trace", help="per-direction SNR recursion")
    tr.add_argument("--max-db", required=True, dest="max_db",
                    help="comma-separated per-direction SNR maxima in dB")
    tr.add_argument("--n", type=int, required=True, help="transceiver element count")
    tr.add_argument("--k", type=int, default=15, help="iterations to evaluate")
    tr.set_defaults(func=cmd_analyze)
    eq = ana_sub.add_parser("equilibrium", help="rank-one fixed point")
    eq.add_argument("--s-db", type=float, required=True, dest="s_db",
                    help="peak SNR in dB")
    eq.add_argument("--n", type=int, required=True)
    eq.set_defaults(func=cmd_analyze)
    sp = ana_sub.add_parser("speed_bound", help="max speed for useful beam reuse")
    sp.add_argument("--d", type=float, required=True, help="distance in m")
    sp.add_argument("--tau", type=float, required=True,
                    help="localization period in s")
    sp.add_argument("--n", required=True,
                    help="element counts: '4..512' or comma list")
    sp.set_defaults(func=cmd_analyze)

    val = sub.add_parser("validate", help="schema and capacity checks")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
