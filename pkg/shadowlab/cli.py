"""
SHADOWLAB CLI
Command-line interface for the shadowing experiments.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from shadowlab import __version__
from shadowlab.config import DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV, SystemSpec, load_config_file, merge_config, parse_config
from shadowlab.core.errors import ConfigError, ShadowLabError
from shadowlab.core.logging_config import setup_logging
from shadowlab.core.structs import ExperimentKind
from shadowlab.render import load_artifact, render_svg
from shadowlab.runner import EXIT_CONFIG, EXIT_OK, RunOutcome, exit_status_for, run_construct, run_experiment

logger = logging.getLogger("shadowlab.cli")

CONFIG_PATHS = [
    os.path.join(os.getcwd(), ".shadowlab.json"),
    os.path.join(os.path.expanduser("~"), ".shadowlab.json"),
]

EXPERIMENT_COMMANDS = [k.value for k in ExperimentKind]


def get_config_path() -> Optional[str]:
    """The active defaults file (prefer local, else home)."""
    for p in CONFIG_PATHS:
        if os.path.exists(p):
            return p
    return None


def load_defaults(kind: str) -> Dict[str, Any]:
    """``defaults`` plus the section named after the experiment kind."""
    path = get_config_path()
    if path is None:
        return {}
    data = load_config_file(path)
    return merge_config(data.get("defaults"), data.get(kind))


def setup_cli_logging(verbose: bool):
    setup_logging(logging.DEBUG if verbose else logging.INFO)


def _parse_params(pairs: Optional[List[str]]) -> Dict[str, Any]:
    """``key=value`` pairs; values are read as JSON when they parse, else kept as strings."""
    params: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param expects key=value, got {pair!r}")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def _parse_grid(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--delta-grid expects comma-separated numbers, got {text!r}")


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Config fields set on the command line; unset flags stay None and are skipped by the merge."""
    out: Dict[str, Any] = {
        "epsilon": args.epsilon,
        "delta": args.delta,
        "delta_grid": _parse_grid(args.delta_grid),
        "steps": args.steps,
        "trials": args.trials,
        "mesh": args.mesh,
        "seed": args.seed,
        "generator": args.generator,
        "window": args.window,
        "k_max": args.k_max,
        "workers": args.workers,
        "output_dir": args.output_dir,
        "render": False if args.no_render else None,
        "ledger": True if args.ledger else None,
        "universal": {"n": args.n, "K": args.K, "m": args.m, "teeth": args.teeth},
    }
    if args.system or args.param:
        system: Dict[str, Any] = {}
        if args.system:
            system["builder"] = args.system
        if args.param:
            system["params"] = _parse_params(args.param)
        out["system"] = system
    return out


def build_config(args: argparse.Namespace):
    """Layer .shadowlab.json defaults, then --config, then flags."""
    kind = args.command
    file_layer = load_config_file(args.config) if args.config else {}
    data = merge_config(load_defaults(kind), file_layer, flag_overrides(args), {"kind": kind})
    return parse_config(data)


def print_outcome(outcome: RunOutcome) -> None:
    report = outcome.report
    icon = "[OK]" if outcome.exit_status == EXIT_OK else "[FAIL]"
    print(f"\n{'=' * 60}")
    print(f"  SHADOWLAB — {report['kind']}")
    print(f"{'=' * 60}")
    if report.get("verdict"):
        print(f"  Verdict:   {report['verdict']}")
    if "passed" in report:
        print(f"  Passed:    {report['passed']}")
    if "seed" in report:
        print(f"  Seed:      {report['seed']}")
    print(f"  Output:    {outcome.output_dir}")
    for name in sorted(outcome.artifacts):
        print(f"    {icon} {name}")
    print(f"{'=' * 60}\n")


def print_error(error: ShadowLabError) -> None:
    print(f"[FAIL] {type(error).__name__}: {error.message}", file=sys.stderr)
    if error.context:
        print(json.dumps(error.context, indent=2, sort_keys=True, default=str), file=sys.stderr)


def handle_render(args: argparse.Namespace) -> int:
    artifact = load_artifact(args.input)
    result = render_svg(artifact)
    out = Path(args.output) if args.output else Path(args.input).with_suffix(".svg")
    result.write(out)
    print(f"[OK] Rendered {args.input} -> {out}")
    for name, count in sorted(result.strokes.items()):
        print(f"  {name:12s} {count}")
    return EXIT_OK


def handle_construct(args: argparse.Namespace) -> int:
    spec = SystemSpec(builder=args.builder, params=_parse_params(args.param))
    output_dir = args.output_dir or os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    outcome = run_construct(spec, Path(output_dir), render=not args.no_render)
    print_outcome(outcome)
    return outcome.exit_status


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", type=str, default=None, help="JSON experiment config")
    p.add_argument("--epsilon", "-e", type=float, default=None, help="Shadowing tolerance ε")
    p.add_argument("--delta", "-d", type=float, default=None, help="Pseudo-orbit jump δ")
    p.add_argument("--delta-grid", type=str, default=None, help="Comma-separated δ grid")
    p.add_argument("--steps", "-N", type=int, default=None, help="Pseudo-orbit length / horizon")
    p.add_argument("--trials", type=int, default=None, help="Random trials per setting")
    p.add_argument("--mesh", type=float, default=None, help="Search net mesh (≤ ε/2)")
    p.add_argument("--seed", type=int, default=None, help="Master seed")
    p.add_argument("--generator", choices=["uniform", "drift"], default=None, help="Pseudo-orbit generator")
    p.add_argument("--window", type=int, default=None, help="Spliced orbit half-window")
    p.add_argument("--k-max", type=int, default=None, help="Largest k_n tried when splicing")
    p.add_argument("--system", "-s", type=str, default=None, help="System builder name")
    p.add_argument("--param", "-p", action="append", default=None, help="Builder parameter key=value")
    p.add_argument("--n", type=int, default=None, help="Branch order of the universal dendrite")
    p.add_argument("--K", type=int, default=None, help="Number of universal stages")
    p.add_argument("--m", type=int, default=None, help="Seeds per arm")
    p.add_argument("--teeth", type=int, default=None, help="Materialized teeth per stage")
    p.add_argument("--workers", type=int, default=None, help="Worker threads")
    p.add_argument("--output-dir", "-o", type=str, default=None, help="Output directory")
    p.add_argument("--no-render", action="store_true", help="Skip SVG output")
    p.add_argument("--ledger", action="store_true", help="Record the run in the SQL ledger")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shadowlab",
        description="SHADOWLAB — shadowing on dendrites, hyperspaces and tori",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  shadowlab construct n-star -p n=3                 Build and draw a 3-star system
  shadowlab shadow -e 0.05 -s square --seed 42      Shadowing modulus of x ↦ x²
  shadowlab hyper-shadow -e 0.1 --trials 20         Continuum shadowing on the 3-star
  shadowlab anosov-refute -e 0.05 -d 0.01           Splice and refute on the cat map
  shadowlab dichotomy -e 0.1 -d 0.01 -N 40          Diameter dichotomy sweep
  shadowlab transitivity -e 0.1 -N 20               Transitivity and local product probes
  shadowlab universal-dendrite -e 0.1 --K 2         Staged universal dendrite suite
  shadowlab render shadowlab_out/x/dendrite.json    Re-render a saved artifact
        """,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--version", action="version", version=f"shadowlab {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Commands")

    construct = subparsers.add_parser("construct", help="Build a system and write its dendrite file")
    construct.add_argument("builder", type=str, help="System builder name")
    construct.add_argument("--param", "-p", action="append", default=None, help="Builder parameter key=value")
    construct.add_argument("--output-dir", "-o", type=str, default=None, help="Output directory")
    construct.add_argument("--no-render", action="store_true", help="Skip SVG output")

    helps = {
        "shadow": "Estimate the shadowing modulus of a point system",
        "hyper-shadow": "Shadow continuum pseudo-orbits on a dendrite",
        "anosov-refute": "Refute continuum shadowing for a toral automorphism",
        "dichotomy": "Probe the diameter dichotomy of the induced map",
        "transitivity": "Probe transitivity and cw-hyperbolicity on the torus",
        "universal-dendrite": "Build universal dendrite stages and run their checks",
    }
    for name in EXPERIMENT_COMMANDS:
        _add_experiment_flags(subparsers.add_parser(name, help=helps[name]))

    render = subparsers.add_parser("render", help="Render a dendrite file or torus scene to SVG")
    render.add_argument("input", type=str, help="Dendrite file or torus scene (JSON)")
    render.add_argument("--output", "-o", type=str, default=None, help="SVG path (default: input with .svg)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG

    setup_cli_logging(args.verbose)
    try:
        if args.command == "render":
            return handle_render(args)
        elif args.command == "construct":
            return handle_construct(args)
        else:
            config = build_config(args)
            outcome = run_experiment(config)
            print_outcome(outcome)
            return outcome.exit_status
    except ShadowLabError as e:
        logger.debug("command failed", exc_info=True)
        print_error(e)
        return exit_status_for(e)


if __name__ == "__main__":
    sys.exit(main())
