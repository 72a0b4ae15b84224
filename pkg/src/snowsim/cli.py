"""Command-line interface.

Subcommands:
  run <scenario> [--seeds N] [--out DIR] [--workers N] [--set k=v ...]
  verify-bounds [--json]
  replay <trace.ndjson> --check
  report <out-dir> [--no-figures]
  scenarios
"""

from __future__ import annotations

import argparse
import json
import sys

from snowsim.binom import verify_bounds
from snowsim.harness import replay_check, run_scenario
from snowsim.scenario import Scenario, ScenarioError, builtin_scenarios, load_scenario


def _cmd_run(args) -> int:
    try:
        bundled = builtin_scenarios()
        if args.scenario in bundled:
            data = bundled[args.scenario]
            for override in args.set or []:
                key, _, value = override.partition("=")
                data = json.loads(json.dumps(data))  # deep copy
                data.setdefault("params", {})[key] = int(value)
            scenario = Scenario.from_dict(data)
        else:
            scenario = load_scenario(args.scenario)
            for override in args.set or []:
                key, _, value = override.partition("=")
                params = scenario.params.as_dict()
                params[key] = int(value)
                from snowsim.params import ProtocolParams
                scenario.params = ProtocolParams.from_dict(params)
                scenario.validate()
        if args.seeds is not None:
            scenario.seeds = args.seeds
    except (ScenarioError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run_scenario(scenario, out_dir=args.out, workers=args.workers)
    status = "PASS" if summary["ok"] else "FAIL"
    print(f"{scenario.name}: {status} "
          f"({summary['runs']} runs, {summary['failures']} failures, "
          f"digest {summary['summary_digest']})")
    for key, count in sorted(summary["non_pass_verdicts"].items()):
        print(f"  {key}: {count}")
    return 0 if summary["ok"] else 1


def _cmd_verify_bounds(args) -> int:
    report = verify_bounds(inject_failure=args.inject_failure)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    else:
        print(report.as_table())
    return 0 if report.all_pass else 1


def _cmd_replay(args) -> int:
    result = replay_check(args.trace)
    if result["ok"]:
        print(f"replay OK: {result['digests_checked']} state digests match")
        return 0
    print(f"replay MISMATCH: {result['mismatches'][:5]}")
    return 1


def _cmd_report(args) -> int:
    try:
        out = render_report_lazy(args.out_dir, figures=not args.no_figures)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out['csv']}")
    for path in out["figures"]:
        print(f"wrote {path}")
    return 0


def render_report_lazy(out_dir: str, figures: bool):
    from snowsim.report import render_report  # matplotlib import is slow
    return render_report(out_dir, figures=figures)


def _cmd_scenarios(_args) -> int:
    for name, data in builtin_scenarios().items():
        print(f"{name}: {data['protocol']} n={data['params']['n']} "
              f"seeds={data.get('seeds', 1)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snowsim",
        description="Sampling-based consensus simulator and bound checker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p_run.add_argument("scenario", help="path to a scenario JSON or a bundled name")
    p_run.add_argument("--seeds", type=int, default=None, help="override seed count")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a protocol parameter")
    p_run.set_defaults(func=_cmd_run)

    p_vb = sub.add_parser("verify-bounds",
                          help="check the security-analysis inequalities exactly")
    p_vb.add_argument("--json", action="store_true")
    p_vb.add_argument("--inject-failure", action="store_true",
                      help=argparse.SUPPRESS)  # negative-control hook
    p_vb.set_defaults(func=_cmd_verify_bounds)

    p_rp = sub.add_parser("replay", help="re-execute a retained trace")
    p_rp.add_argument("trace")
    p_rp.add_argument("--check", action="store_true", required=True)
    p_rp.set_defaults(func=_cmd_replay)

    p_rep = sub.add_parser("report", help="render CSV and figures from run output")
    p_rep.add_argument("out_dir")
    p_rep.add_argument("--no-figures", action="store_true")
    p_rep.set_defaults(func=_cmd_report)

    p_sc = sub.add_parser("scenarios", help="list bundled scenarios")
    p_sc.set_defaults(func=_cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
