"""
lima command line.

    lima run            one scenario -> CSV row (+ JSON sidecar with --out)
    lima sweep-size     Variable-Size table, both modes
    lima sweep-traffic  Variable-Traffic table, both modes
    lima inspect HEX    decode one frame
    lima dump-routes    run a scenario, print every LR/LG route table

Exit status: 0 ok, 1 strict trend gate failed, 2 bad config / input,
3 mesh not connected at the STP. Data goes to stdout, diagnostics to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from lima import __version__
from lima.config.settings import configure_logging, default_jobs
from lima.core import gate
from lima.core.config import load_config
from lima.core.errors import CalibrationError, CodecError, ConfigError, DisconnectedMesh, OutOfRange
from lima.core.model import Metrics, Scenario
from lima.lib import io
from lima.protocol.codec import decode, format_frame

logger = logging.getLogger("Lima.Cli")

FULL_SCALE_HOURS = 200.0

EXIT_OK = 0
EXIT_GATE = 1
EXIT_INPUT = 2
EXIT_DISCONNECTED = 3


def _scenario(args) -> Scenario:
    cfg = load_config(Path(args.config) if args.config else None)
    hours = FULL_SCALE_HOURS if args.paper_scale else args.hours
    return Scenario.from_config(cfg, seed=args.seed, mode=args.mode, sim_hours=hours)


def _seeds(args) -> Optional[List[int]]:
    if not args.seeds:
        return None
    try:
        return [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--seeds must be comma-separated integers: {args.seeds!r}") from e


def _emit(rows: List[Metrics], args, scenario: Scenario) -> None:
    sys.stdout.write(io.csv_text(rows))
    if args.out:
        sidecar = io.save_results(rows, Path(args.out), scenario, command=args.command)
        logger.info("wrote %s and %s", args.out, sidecar)


def cmd_run(args) -> int:
    """Run one scenario."""
    from lima.sim.simulation import run

    scenario = _scenario(args)
    metrics = run(scenario, trace_path=Path(args.trace) if args.trace else None)
    _emit([metrics], args, scenario)
    return EXIT_OK


def _cmd_sweep(args, kind: str) -> int:
    from lima.sim.sweeps import sweep_variable_size, sweep_variable_traffic

    base = _scenario(args)
    sweep = sweep_variable_size if kind == "size" else sweep_variable_traffic
    rows = sweep(base, seeds=_seeds(args), jobs=args.jobs or default_jobs())
    _emit(rows, args, base)
    if not args.gate:
        return EXIT_OK
    passed, messages = gate.check(rows, kind, strict=args.strict)
    for msg in messages:
        print(msg, file=sys.stderr)
    return EXIT_OK if passed else EXIT_GATE


def cmd_sweep_size(args) -> int:
    return _cmd_sweep(args, "size")


def cmd_sweep_traffic(args) -> int:
    return _cmd_sweep(args, "traffic")


def cmd_inspect(args) -> int:
    """Decode a hex frame and print every field."""
    text = "".join(args.hex.split())
    try:
        payload = bytes.fromhex(text)
    except ValueError:
        print(f"[ERR] not a hex string: {args.hex!r}", file=sys.stderr)
        return EXIT_INPUT
    decoded = decode(payload)
    print("\n".join(format_frame(decoded)))
    return EXIT_OK


def cmd_dump_routes(args) -> int:
    """Run the scenario, then print every routing table."""
    from lima.sim.simulation import Simulation

    scenario = _scenario(args)
    sim = Simulation(scenario)
    sim.run()
    for line in sim.dump_routes():
        print(line)
    return EXIT_OK


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Scenario file (YAML or JSON); default lima.yml if present")
    p.add_argument("--seed", type=int, help="Override scenario seed")
    p.add_argument("--mode", choices=["lima", "baseline"], help="Override scenario mode")
    p.add_argument("--hours", type=float, help="Simulated hours")
    p.add_argument("--paper-scale", action="store_true", help=f"Simulate {FULL_SCALE_HOURS:g} hours")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lima", description="LIMA mesh for LoRaWAN: protocol engine and simulator")
    parser.add_argument("--version", action="version", version=f"lima {__version__}")
    parser.add_argument("--log-level", help="Override LIMA_LOG (DEBUG, INFO, WARNING, ERROR)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # RUN
    p_run = subparsers.add_parser("run", help="Run one scenario")
    _add_scenario_flags(p_run)
    p_run.add_argument("--out", help="CSV path; a .json sidecar is written next to it")
    p_run.add_argument("--trace", help="Write a line-delimited JSON event trace")
    p_run.set_defaults(func=cmd_run)

    # SWEEPS
    for name, func, text in (
        ("sweep-size", cmd_sweep_size, "Variable-Size sweep (2..10 km), both modes"),
        ("sweep-traffic", cmd_sweep_traffic, "Variable-Traffic sweep (7200..300 s), both modes"),
    ):
        p = subparsers.add_parser(name, help=text)
        _add_scenario_flags(p)
        p.add_argument("--seeds", help="Comma-separated seeds (default: the scenario seed)")
        p.add_argument("--out", help="CSV path; a .json sidecar is written next to it")
        p.add_argument("--jobs", type=int, help="Worker processes (default LIMA_JOBS or 1)")
        p.add_argument("--gate", action="store_true", help="Check the table against the expected trends")
        p.add_argument("--strict", action="store_true", help="With --gate, exit 1 when a trend fails")
        p.set_defaults(func=func)

    # INSPECT
    p_inspect = subparsers.add_parser("inspect", help="Decode a frame given as hex")
    p_inspect.add_argument("hex", help="Frame bytes as hex")
    p_inspect.set_defaults(func=cmd_inspect)

    # DUMP-ROUTES
    p_dump = subparsers.add_parser("dump-routes", help="Run a scenario and print all route tables")
    _add_scenario_flags(p_dump)
    p_dump.set_defaults(func=cmd_dump_routes)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except DisconnectedMesh as e:
        print(f"[ERR] {e}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except (ConfigError, CodecError, CalibrationError, OutOfRange) as e:
        print(f"[ERR] {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
