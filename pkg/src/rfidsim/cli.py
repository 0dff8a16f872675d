"""``simulate`` command: run a scenario file, optionally as a sweep, and report."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .adversary import run_attack_suite
from .config import parse_config
from .experiments import SweepSpec, aggregate, parse_sweep_arg, run_sweep, sort_key
from .metrics import emit_csv, summarize
from .simcore import ConfigError, Simulation, dump_trace, run

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="Hybrid-crypto RFID authentication simulator.")
    p.add_argument("config", help="scenario file (key = value lines; empty file means defaults)")
    p.add_argument("--sweep", action="append", default=[], metavar="AXIS=V1,V2",
                   help="sweep an axis: delay (ms), bandwidth, traffic, seed, sleep; repeatable")
    p.add_argument("--csv", metavar="PATH", help="write one CSV row per run")
    p.add_argument("--json", metavar="PATH", help="write the full reports as JSON")
    p.add_argument("--check", action="store_true", help="annotate thresholds; exit 2 if any fails")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--attacks", action="store_true", help="also run the attack harnesses")
    p.add_argument("--trace", metavar="PATH", help="write the event trace as JSON lines (single run only)")
    p.add_argument("--workers", type=int, default=None, help="processes for sweep grid points")
    return p


def _load(args) -> tuple:
    try:
        with open(args.config, encoding="utf-8") as fh:
            scenario = parse_config(fh.read())
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
            scenario.validate()
        axes = dict(parse_sweep_arg(s) for s in args.sweep)
        spec = SweepSpec(scenario, axes)
        spec.grid()  # surfaces bad axis values before any run
    except (ConfigError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.trace and len(spec.grid()) > 1:
        raise ConfigError("--trace needs a single run, not a sweep")
    return scenario, spec


def _baseline_for(report, scenario):
    """Sleep-off companion run, used for the energy-saving line of heavy traffic."""
    if scenario.sleep_enabled and scenario.traffic.name == "heavy":
        return run(replace(scenario, sleep_enabled=False))
    return None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario, spec = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.trace:
        sim = Simulation(scenario, trace=True)
        reports = [sim.run()]
        with open(args.trace, "w", encoding="utf-8") as fh:
            dump_trace(sim.trace, fh)
        rows = None
    else:
        sweep = run_sweep(spec, workers=args.workers)
        rows = sweep
        reports = [r.report for r in sweep]

    verdicts = [v.to_dict() for v in run_attack_suite(seed=scenario.seed)] if args.attacks else None

    ok = True
    scenarios = spec.grid() if rows is None else [r.scenario for r in rows]
    for i, (sc, rep) in enumerate(zip(scenarios, reports)):
        if rep is None:
            print(f"run failed: {rows[i].error}")
            ok = False
            continue
        if verdicts is not None and i == 0:
            rep.attack_verdicts = verdicts
        baseline = _baseline_for(rep, sc) if args.check else None
        text, passed = summarize(rep, check=args.check, baseline=baseline)
        ok &= passed
        if i:
            print()
        print(text)

    if rows is not None and len(rows) > 1:
        print()
        for agg in aggregate(rows):
            print(json.dumps(agg, sort_keys=True))

    if args.csv:
        if rows is not None:
            table = sorted((r.row() for r in rows), key=sort_key)
        else:
            table = reports
        with open(args.csv, "wb") as fh:
            fh.write(emit_csv(table))
    if args.json:
        payload = [None if r is None else r.to_dict() for r in reports]
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)

    if args.check and not ok:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
