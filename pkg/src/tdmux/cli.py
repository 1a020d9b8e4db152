"""Command-line entry point: compile / simulate / analyze / estimate / demo.

Exit codes are a stable scripting contract:
  0 success, 1 config error, 2 validation or infeasibility,
  3 simulation error, 4 analysis error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys
from importlib import resources
from pathlib import Path

from . import compiler as comp
from . import estimator as est
from . import scenario as scn
from . import simulator as sim
from .errors import (
    ConfigError,
    InfeasiblePlatformError,
    TdmuxError,
    TraceFormatError,
    ValidationFailedError,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_SIMULATION = 3
EXIT_ANALYSIS = 4

BUNDLED = (
    "sec2b_static",
    "poc_five_sines",
    "poc_discharge",
    "poc_static",
    "poc_crosstalk",
    "poc_crosstalk_kappa",
    "poc_settling",
    "scaling_10k",
)


def _load_config(path: str) -> scn.Scenario:
    """Resolve a path or a bundled scenario name."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and path in BUNDLED:
        with resources.as_file(
            resources.files("tdmux").joinpath(f"scenarios/{path}.json")
        ) as bundled:
            return scn.load_config(bundled)
    return scn.load_config(p)


def cmd_compile(args) -> int:
    try:
        sc = _load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if sc.profile is None:
        print("config error: no hardware profile in config", file=sys.stderr)
        return EXIT_CONFIG
    violations = comp.validate(sc.profile)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return EXIT_VALIDATION
    try:
        program = scn.compile_scenario(sc)
    except ValidationFailedError as e:
        for v in e.violations:
            print(v, file=sys.stderr)
        return EXIT_VALIDATION
    except TdmuxError as e:
        print(f"compile error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    program.to_csv(args.out)
    if args.binary:
        program.to_binary(args.binary)
    budget = comp.timing_budget(sc.profile)
    print(
        f"{sc.name}: {len(program)} frames, {sc.profile.num_channels} channels, "
        f"slot {budget.dt_s:.4g} s, margin {budget.margin_s:.4g} s -> {args.out}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        sc = _load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if sc.profile is None:
        print("config error: no hardware profile in config", file=sys.stderr)
        return EXIT_CONFIG
    if sc.mode == "mux":
        violations = comp.validate(sc.profile)
        if violations:
            for v in violations:
                print(v, file=sys.stderr)
            return EXIT_VALIDATION
    try:
        trace = scn.simulate_scenario(sc, seed=args.seed)
    except ValidationFailedError as e:
        for v in e.violations:
            print(v, file=sys.stderr)
        return EXIT_VALIDATION
    except (TdmuxError, ValueError) as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIMULATION
    trace.to_csv(args.out)
    print(
        f"{sc.name}: {trace.num_channels} channels x {len(trace.time_s)} samples "
        f"({trace.meta.get('engine', '?')}/{trace.meta.get('backend', '?')}) -> {args.out}"
    )
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        sc = _load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        trace = sim.load_trace_csv(args.trace)
    except (TraceFormatError, OSError, ValueError) as e:
        print(f"trace error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    if sc.profile is not None and trace.profile_hash:
        if trace.profile_hash != sc.profile.fingerprint():
            print(
                f"analysis error: trace was produced with profile {trace.profile_hash}, "
                f"config has {sc.profile.fingerprint()}; refusing mismatched inputs",
                file=sys.stderr,
            )
            return EXIT_ANALYSIS
    try:
        report = scn.analyze_trace(trace, sc, divider_scale=args.divider_scale)
    except TdmuxError as e:
        print(f"analysis error: {e}", file=sys.stderr)
        return EXIT_ANALYSIS
    out = json.dumps(report.to_json_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(out + "\n")
        print(f"{sc.name}: report -> {args.out}")
    else:
        print(out)
    if report.crosstalk_db is not None:
        for a in sc.analyses:
            if a["kind"] == "crosstalk":
                print(report.crosstalk_table(int(a["aggressor"])))
    return EXIT_OK


def cmd_estimate(args) -> int:
    try:
        sc = _load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    platform = sc.platform or est.PlatformSpec()
    if sc.num_electrodes is None:
        print("config error: no num_electrodes in config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if sc.sweep:
            plans = est.sweep(
                sc.sweep["parameter"], sc.sweep["values"], sc.num_electrodes, platform
            )
            print(est.sweep_table(sc.sweep["parameter"], plans))
            payload = [p.to_json_dict() for p in plans]
        else:
            plan = est.plan_resources(sc.num_electrodes, platform)
            print(plan.to_text(minimal_dacs=args.minimal_dacs))
            payload = plan.to_json_dict()
    except InfeasiblePlatformError as e:
        print(f"infeasible platform: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except TdmuxError as e:
        print(f"estimate error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return EXIT_OK


def _run_demo_scenario(name: str, outdir: Path, seed):
    """Returns (name, checks, error_or_None)."""
    try:
        sc = _load_config(name)
        results = {"profile": sc.profile}
        if sc.platform is not None or sc.num_electrodes is not None:
            results["plan"] = est.plan_resources(
                sc.num_electrodes, sc.platform or est.PlatformSpec()
            )
        if sc.profile is not None:
            results["budget"] = comp.timing_budget(sc.profile)
            trace = scn.simulate_scenario(sc, seed=seed)
            trace.to_csv(outdir / f"{name}_trace.csv")
            if sc.analyses:
                report = scn.analyze_trace(trace, sc)
                (outdir / f"{name}_report.json").write_text(
                    json.dumps(report.to_json_dict(), indent=2) + "\n"
                )
                results["report"] = report
        return name, scn.check_expected(sc, results), None
    except (TdmuxError, ValueError, OSError) as e:
        return name, [], e


def cmd_demo(args) -> int:
    outdir = Path(args.out or "demo_out")
    outdir.mkdir(parents=True, exist_ok=True)
    names = list(BUNDLED)
    if args.parallel:
        with concurrent.futures.ThreadPoolExecutor() as pool:
            futures = [pool.submit(_run_demo_scenario, n, outdir, args.seed) for n in names]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_run_demo_scenario(n, outdir, args.seed) for n in names]

    all_ok = True
    for name, checks, error in outcomes:
        if error is not None:
            all_ok = False
            print(f"{name:22} ERROR {error}")
            continue
        for c in checks:
            state = "PASS" if c.ok else "FAIL"
            all_ok &= c.ok
            print(f"{name:22} {c.label:28} expected {c.expected:>18}  actual {c.actual:>12}  {state}")
    print("demo:", "all expectations met" if all_ok else "EXPECTATIONS FAILED")
    return EXIT_OK if all_ok else EXIT_ANALYSIS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tdmux",
        description="Compile, simulate, analyze and size time-division "
        "multiplexed electrode control systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a config into a DAC frame stream")
    p.add_argument("--config", required=True, help="scenario config (path or bundled name)")
    p.add_argument("--out", required=True, help="output program CSV")
    p.add_argument("--binary", help="also write packed little-endian 16-bit codes")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("simulate", help="compile then simulate; write a trace CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output trace CSV")
    p.add_argument("--seed", type=int, default=None, help="override the config noise seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="run a scenario's analyses over a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report JSON path (default: print)")
    p.add_argument("--divider-scale", type=float, default=1.0,
                   help="scope-divider scaling applied before analysis (e.g. 0.15625)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("estimate", help="FPGA/DAC counts for an electrode count")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="plan JSON path")
    p.add_argument("--minimal-dacs", action="store_true",
                   help="print ceil(electrodes/N) DACs instead of fully-populated FPGAs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("demo", help="run every bundled scenario and check expectations")
    p.add_argument("--out", help="output directory (default demo_out)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--parallel", action="store_true", help="run scenarios concurrently")
    p.set_defaults(func=cmd_demo)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
