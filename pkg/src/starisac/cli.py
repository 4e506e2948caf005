"""Command line: ``starisac run | sweep | validate``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ScenarioError, SplitConfig, load_scenario
from .metasurface import write_coding_matrix
from .optimizer import AverageBudget, SensingModel, optimize_split
from .protocol import SLOTS_SCHEMA_VERSION, SlotMetrics, _hpbw, run_campaign, summarize, trial_seed

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

ENV_OUTPUT = "STARISAC_OUTPUT_DIR"
ENV_WORKERS = "STARISAC_WORKERS"

SEED_RULE = "numpy SeedSequence([master_seed, trial, slot, purpose]); trial digest = SeedSequence([master_seed, trial]).generate_state(1, uint64)"
MU_C_CONVENTION = "C_T = mu_c^2 * P_T * N * L^2 / sigma2_wT"

SWEEP_AXES = ("lambda", "rho", "p_a1", "c_r", "snr")


def _workers() -> int:
    raw = os.environ.get(ENV_WORKERS, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(ENV_WORKERS, f"expected an integer, got {raw!r}") from None
    if n < 1:
        raise ScenarioError(ENV_WORKERS, "must be at least 1")
    return n


def _output_dir(arg) -> Path:
    value = arg or os.environ.get(ENV_OUTPUT)
    if not value:
        raise ScenarioError("output", f"give -o or set {ENV_OUTPUT}")
    path = Path(value)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _one_trial(args):
    scenario, seed, trial = args
    return run_campaign(scenario, scenario.n_slots, seed, trial)


def run_trials(scenario, workers: int = 1) -> list:
    """All trials of ``scenario``, returned in trial order whatever the pool size."""
    jobs = [(scenario, scenario.seed, t) for t in range(scenario.trials)]
    if workers <= 1 or len(jobs) == 1:
        return [_one_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_one_trial, jobs))


def write_slots_csv(path: Path, results: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# slots schema {SLOTS_SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SlotMetrics.columns())
        for r in results:
            for m in r.metrics:
                writer.writerow(m.row())


def read_slots_csv(path) -> list:
    """Rows of a slots.csv as dicts of floats (ints for counters)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# slots schema"):
            raise ValueError(f"{path}:1: missing schema line")
        rows = list(csv.DictReader(fh))
    ints = {"trial", "slot", "i_isac", "i_c"}
    return [{k: (int(v) if k in ints else float(v)) for k, v in row.items()} for row in rows]


def _manifest(scenario, command: str, extra: dict = None) -> dict:
    data = {
        "software": {"package": "starisac", "version": __version__},
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "scenario_schema_version": SCHEMA_VERSION,
        "slots_schema_version": SLOTS_SCHEMA_VERSION,
        "scenario": scenario.to_dict(),
        "defaults_applied": list(scenario.defaults_applied),
        "master_seed": scenario.seed,
        "seed_rule": SEED_RULE,
        "trial_seeds": [trial_seed(scenario.seed, t) for t in range(scenario.trials)],
        "mu_c_convention": MU_C_CONVENTION,
    }
    data.update(extra or {})
    return data


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _export_patterns(out: Path, scenario, result) -> None:
    for outcome in result.outcomes:
        k = outcome.metrics.slot
        np.savetxt(out / f"pattern_{k}.csv", outcome.pattern, delimiter=",",
                   header="theta,reflection_power,transmission_power", comments="", fmt="%.17g")
        for side, codes in outcome.codes.items():
            bits = scenario.bits_reflect if side == "reflection" else scenario.bits_transmit
            write_coding_matrix(out / f"coding_{k}_{side}.txt", codes.reshape(scenario.l_h, scenario.l_v),
                                bits, side, scenario.mechanism)


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.signal_level:
        changes["signal_level"] = True
    if args.patterns:
        changes["patterns"] = True
    if args.slots is not None:
        changes["n_slots"] = args.slots
    if changes.get("trials", 1) < 1 or changes.get("n_slots", 1) < 1 or changes.get("seed", 0) < 0:
        raise ScenarioError("arguments", "trials and slots must be >= 1 and the seed >= 0")
    scenario = scenario.with_changes(**changes)
    out = _output_dir(args.output)
    results = run_trials(scenario, _workers())
    write_slots_csv(out / "slots.csv", results)
    summary = {"schema_version": SLOTS_SCHEMA_VERSION, **summarize(results)}
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", _manifest(scenario, "run"))
    if scenario.patterns and results[0].outcomes:
        # the pattern grids of the first trial
        _export_patterns(out, scenario, results[0])
    for r in results:
        if r.terminated:
            print(f"trial {r.trial} stopped early: {r.terminated}", file=sys.stderr)
    return EXIT_OK


def _scaled_budget(scenario, factor_r: float, factor_t: float):
    b = scenario.budget
    return type(b)(b.p_r * factor_r, b.p_t * factor_t, b.sigma2_wr, b.sigma2_wt, b.mu_c)


def _sweep_point(scenario, axis: str, value: float):
    if axis == "lambda":
        if not 0 < value <= 1:
            raise ScenarioError("values", f"lambda {value!r} outside (0, 1]")
        rho = scenario.split.rho
        return scenario.with_changes(split=SplitConfig("fixed", rho=rho, lam=value))
    if axis == "rho":
        if not 0 < value <= 1:
            raise ScenarioError("values", f"rho {value!r} outside (0, 1]")
        return scenario.with_changes(split=SplitConfig("fixed", rho=value, lam=scenario.split.lam))
    if axis == "c_r":
        if not value > 0:
            raise ScenarioError("values", f"c_r {value!r} must be positive")
        return scenario.with_changes(budget=_scaled_budget(scenario, value / scenario.c_r, 1.0))
    if axis == "snr":
        factor = 10.0 ** (value / 10.0)
        return scenario.with_changes(budget=_scaled_budget(scenario, factor, factor))
    raise ScenarioError("axis", f"unknown sweep axis {axis!r}")


def _p_a1_row(scenario, value: float) -> dict:
    if not 0 <= value <= 1:
        raise ScenarioError("values", f"p_a1 {value!r} outside [0, 1]")
    model = SensingModel(hpbw_effective=_hpbw(scenario), proxy=scenario.proxy,
                         slot_symbols=scenario.slot_symbols, bound_factor=scenario.event_bound_factor,
                         fuse_prior=scenario.fuse_prior)
    d = optimize_split(AverageBudget(scenario.c_r, scenario.c_t, value), scenario.split.resolution, model)
    return {"rho_opt": d.rho, "lam_opt": d.lam, "objective": d.objective, "p_a2_at_optimum": d.p_a2_at_optimum}


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.trials is not None:
        scenario = scenario.with_changes(trials=args.trials)
    if args.seed is not None:
        scenario = scenario.with_changes(seed=args.seed)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError("values", f"expected comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise ScenarioError("values", "no sweep values given")
    points = [None if args.axis == "p_a1" else _sweep_point(scenario, args.axis, v) for v in values]
    out = _output_dir(args.output)
    workers = _workers()
    rows = []
    for value, point in zip(values, points):
        if point is None:
            row = _p_a1_row(scenario, value)
        else:
            row = summarize(run_trials(point, workers))
            row.pop("terminated")
        rows.append({args.axis: value, **row})
    columns = list(rows[0])
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(f"# sweep schema {SLOTS_SCHEMA_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    _write_json(out / "manifest.json", _manifest(scenario, "sweep", {"axis": args.axis, "values": values}))
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(json.dumps({"valid": True, "defaults_applied": list(scenario.defaults_applied),
                      "c_r": scenario.c_r, "c_t": scenario.c_t}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starisac", description="STAR-DCM ISAC beam-tracking simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    run.add_argument("scenario")
    run.add_argument("-o", "--output", help=f"output directory (default ${ENV_OUTPUT})")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--slots", type=int)
    run.add_argument("--signal-level", action="store_true")
    run.add_argument("--patterns", action="store_true")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="sweep one parameter and summarize each point")
    sweep.add_argument("scenario")
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.add_argument("-o", "--output")
    sweep.add_argument("--trials", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario")
    val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except (ScenarioError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported through the exit status
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
