"""Command-line entry point: ``wpg run | envelope | compare | selftest``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError
from .harness import ScenarioError, compare_modes, load_scenario, run_envelope, run_scenario
from .simulator import Mode

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCENARIO_FAILED = 2
EXIT_CONFIG_ERROR = 3


class _Parser(argparse.ArgumentParser):
    # usage errors share the config-error code; 2 is reserved for failed scenarios
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wpg", description="Two-stage reactive walking pattern generator.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and write trace.csv and summary.json")
    run.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    run.add_argument("--out", default=None, help="output directory (default: ./out/<scenario name>)")

    env = sub.add_parser("envelope", help="largest recoverable push per direction")
    env.add_argument("--dirs", type=int, default=16, help="number of push directions (default 16)")
    env.add_argument("--mode", choices=("stage1", "full", "both"), default="both")
    env.add_argument("--out", default="out/envelope", help="output directory (default: out/envelope)")
    env.add_argument("--workers", type=int, default=None, help="worker processes (default: one per CPU)")

    cmp_ = sub.add_parser("compare", help="run a scenario in both controller modes")
    cmp_.add_argument("scenario")
    cmp_.add_argument("--out", default=None, help="also write compare.csv and compare.json here")

    st = sub.add_parser("selftest", help="run the property checks against the oracles")
    st.add_argument("--full", action="store_true", help="full-size suites instead of the quick ones")
    return parser


def _run(args) -> int:
    scenario = load_scenario(args.scenario)
    out = Path(args.out) if args.out else Path("out") / scenario.name
    log, summary = run_scenario(scenario, out)
    print(f"{scenario.name}: {summary['status']} ({summary['steps_completed']} steps) -> {out}")
    return EXIT_OK if log.status.ok else EXIT_SCENARIO_FAILED


def _envelope(args) -> int:
    modes = (Mode.STAGE1_ONLY, Mode.FULL) if args.mode == "both" else (Mode(args.mode),)
    result = run_envelope(psi_count=args.dirs, modes=modes, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "envelope.csv")
    for row in result.rows:
        cells = [f"{m}={row.f_max(m):7.1f}" for m in ("stage1", "full") if row.f_max(m) is not None]
        print(f"psi={row.psi:+.4f}  " + "  ".join(cells))
    violations = result.monotonicity_violations()
    for psi, mode, f_ok, f_bad in violations:
        print(f"monotonicity violated: psi={psi:+.4f} {mode} recovered {f_ok:.1f} N but failed {f_bad:.1f} N")
    print(f"{len(result.rows)} directions in {result.runtime_s:.1f} s -> {out / 'envelope.csv'}")
    return EXIT_OK


def _compare(args) -> int:
    result = compare_modes(load_scenario(args.scenario), args.out)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _selftest(args) -> int:
    from .selftest import run_all

    results = run_all(quick=not args.full)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _run, "envelope": _envelope, "compare": _compare, "selftest": _selftest}[args.command]
    try:
        return handler(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
