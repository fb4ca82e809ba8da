"""Command-line interface.

Subcommands:
    simulate    scenario JSON -> recording file
    localize    scenario JSON (or recording file) -> NDJSON azimuth reports
    montecarlo  eval JSON -> CSV of trials + JSON summary
    validate    array geometry check against the carrier

Exit codes: 0 success (localize: every report converged), 1 configuration or
usage error, 2 no ping found, 3 reports emitted but at least one solve did
not converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dsp, pipeline, recording as rec, scene, simulator

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NO_PING = 2
EXIT_NOT_CONVERGED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pingerloc",
                                     description="Acoustic pinger localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a scenario to a recording file")
    p_sim.add_argument("--config", required=True, help="scenario JSON path")
    p_sim.add_argument("--out", required=True, help="output recording path")
    p_sim.add_argument("--seed", type=int, default=None, help="override scenario seed")

    p_loc = sub.add_parser("localize", help="report pinger azimuth per detected ping")
    p_loc.add_argument("--config", required=True, help="scenario JSON path")
    p_loc.add_argument("--recording", default=None,
                       help="process this recording instead of rendering the scenario")
    p_loc.add_argument("--out", default=None, help="write NDJSON here instead of stdout")
    p_loc.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_loc.add_argument("--timing", action="store_true",
                       help="include per-stage milliseconds in each report "
                            "(makes output non-reproducible)")
    p_loc.add_argument("--debug-window", action="store_true",
                       help="dump window-search diagnostics as JSON to stderr")

    p_mc = sub.add_parser("montecarlo", help="randomized evaluation over ranges and SNRs")
    p_mc.add_argument("--config", required=True, help="eval config JSON path")
    p_mc.add_argument("--out", default=None, help="CSV output path")
    p_mc.add_argument("--seed", type=int, default=None, help="override config seed")
    p_mc.add_argument("--json", action="store_true", help="print the summary as JSON")

    p_val = sub.add_parser("validate", help="check array geometry for the scenario carrier")
    p_val.add_argument("--config", required=True, help="scenario JSON path")

    return parser


def _load_scenario(path: str, seed_override: int | None) -> scene.Scenario:
    scenario = scene.load_scenario(path)
    if seed_override is not None:
        doc = scene.scenario_to_dict(scenario)
        doc["seed"] = seed_override
        scenario = scene.scenario_from_dict(doc)
    return scenario


def _cmd_simulate(args) -> int:
    scenario = _load_scenario(args.config, args.seed)
    recording = simulator.render_scene(scenario)
    rec.write_recording(recording, args.out)
    print(f"wrote {recording.channel_count} channels x {recording.samples_per_channel} "
          f"samples at {recording.sample_rate:.0f} Hz to {args.out}", file=sys.stderr)
    return EXIT_OK


def _cmd_localize(args) -> int:
    scenario = _load_scenario(args.config, args.seed)
    loaded = rec.read_recording(args.recording) if args.recording else None

    debug_sink: list | None = [] if args.debug_window else None
    out = open(args.out, "w") if args.out else sys.stdout
    emitted = 0
    all_converged = True
    try:
        for report in pipeline.run_localization(scenario, recording=loaded,
                                                debug_sink=debug_sink):
            out.write(json.dumps(report.to_json_dict(include_timing=args.timing)) + "\n")
            emitted += 1
            all_converged = all_converged and report.converged
            if debug_sink:
                print(json.dumps(debug_sink.pop()), file=sys.stderr)
    except dsp.NoPingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_PING
    finally:
        if args.out:
            out.close()
    if emitted == 0:
        print("error: no ping found in recording", file=sys.stderr)
        return EXIT_NO_PING
    return EXIT_OK if all_converged else EXIT_NOT_CONVERGED


def _cmd_montecarlo(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise scene.ConfigError(f"cannot read eval config {args.config}: {exc}") from exc
    if args.seed is not None:
        doc["seed"] = args.seed
    config = pipeline.monte_carlo_config_from_dict(doc)
    summary, rows = pipeline.monte_carlo(config)
    if args.out:
        pipeline.write_monte_carlo_csv(args.out, summary, rows)
    doc = summary.to_json_dict()
    if args.json:
        print(json.dumps(doc))
    else:
        print(f"trials {doc['trials']}  success {doc['success_fraction']:.3f}  "
              f"az err p50/p90/max {doc['az_err_p50']:.3f}/{doc['az_err_p90']:.3f}/"
              f"{doc['az_err_max']:.3f} deg  octant acc {doc['octant_accuracy']:.3f}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = _load_scenario(args.config, None)
    report = scene.validate_array(scenario.array, scenario.pinger.frequency,
                                  scenario.sound_speed)
    if report.ok:
        print("array ok")
        return EXIT_OK
    for violation in report.violations:
        print(f"violation: {violation}")
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "localize": _cmd_localize,
        "montecarlo": _cmd_montecarlo,
        "validate": _cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except scene.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (rec.RecordingFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
